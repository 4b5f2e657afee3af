#include "splitpu/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace splitpu {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'P', 'N', 'N'};

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng, Init init) {
    const std::size_t n = ad::numel(shape);
    std::vector<double> v(n, 0.0);
    if (init == Init::HeUniform) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& x : v) x = dist(rng);
    }
    return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor zero_bias(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }

std::vector<Tensor> deep_copy(std::span<const Tensor> params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(Tensor::parameter(p.shape(), {p.data().begin(), p.data().end()}));
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ad::add_bias(ad::matmul(x, w), b); }

class Writer {
  public:
    void bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
    std::vector<std::uint8_t> out;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw std::runtime_error("snapshot truncated at byte offset " + std::to_string(pos));
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf[pos++]} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[pos++]} << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> buf;
    std::size_t pos = 0;
};

}  // namespace

Architecture Architecture::mlp(std::size_t input_dim, std::size_t hidden) {
    Architecture a;
    a.kind = ArchKind::Mlp;
    a.input_shape = {input_dim};
    a.hidden = hidden;
    return a;
}

Architecture Architecture::cnn(std::size_t channels, std::size_t height, std::size_t width) {
    Architecture a;
    a.kind = ArchKind::Cnn;
    a.input_shape = {channels, height, width};
    return a;
}

std::size_t Architecture::first_feature_dim() const {
    if (kind == ArchKind::Mlp) return hidden;
    return conv1 * input_shape[1] * input_shape[2];
}

std::size_t Architecture::last_feature_dim() const {
    if (kind == ArchKind::Mlp) return hidden;
    return conv2 * (input_shape[1] / pool) * (input_shape[2] / pool);
}

Network::Network(Architecture arch, std::uint64_t seed, Init init) : arch_(std::move(arch)) {
    std::mt19937_64 rng(seed);
    if (arch_.kind == ArchKind::Mlp) {
        if (arch_.input_shape.size() != 1 || arch_.input_shape[0] == 0 || arch_.hidden == 0) {
            throw std::invalid_argument("mlp: bad input shape " + ad::to_string(arch_.input_shape));
        }
        const std::size_t in = arch_.input_shape[0], h = arch_.hidden;
        params_.push_back(he_uniform({in, h}, in, rng, init));
        params_.push_back(zero_bias(h));
        params_.push_back(he_uniform({h, h}, h, rng, init));
        params_.push_back(zero_bias(h));
        params_.push_back(he_uniform({h, 1}, h, rng, init));
        params_.push_back(zero_bias(1));
    } else {
        if (arch_.input_shape.size() != 3 || arch_.input_shape[1] % arch_.pool != 0 ||
            arch_.input_shape[2] % arch_.pool != 0) {
            throw std::invalid_argument("cnn: bad input shape " + ad::to_string(arch_.input_shape));
        }
        const std::size_t c = arch_.input_shape[0], k = arch_.kernel;
        params_.push_back(he_uniform({arch_.conv1, c, k, k}, c * k * k, rng, init));
        params_.push_back(zero_bias(arch_.conv1));
        params_.push_back(he_uniform({arch_.conv2, arch_.conv1, k, k}, arch_.conv1 * k * k, rng, init));
        params_.push_back(zero_bias(arch_.conv2));
        const std::size_t d = arch_.last_feature_dim();
        params_.push_back(he_uniform({d, 1}, d, rng, init));
        params_.push_back(zero_bias(1));
    }
}

Network::Network(const Network& other) : arch_(other.arch_), params_(deep_copy(other.params_)) {}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        arch_ = other.arch_;
        params_ = deep_copy(other.params_);
    }
    return *this;
}

void Network::check_input(const Tensor& input) const {
    const auto& s = input.shape();
    const bool ok = s.size() == arch_.input_shape.size() + 1 &&
                    std::equal(arch_.input_shape.begin(), arch_.input_shape.end(), s.begin() + 1);
    if (!ok) {
        Shape expected{0};
        expected.insert(expected.end(), arch_.input_shape.begin(), arch_.input_shape.end());
        throw ad::ShapeError("network input shape " + ad::to_string(s) + " does not match expected " +
                             ad::to_string(expected) + " (leading batch dim free)");
    }
}

Taps Network::forward_with_taps(const Tensor& input) const {
    check_input(input);
    const auto& p = params_;
    Taps taps;
    if (arch_.kind == ArchKind::Mlp) {
        taps.first = ad::relu(linear(input, p[0], p[1]));
        taps.last = ad::relu(linear(taps.first, p[2], p[3]));
        taps.logit = linear(taps.last, p[4], p[5]);
    } else {
        Tensor h1 = ad::relu(ad::conv2d(input, p[0], p[1]));
        taps.first = ad::flatten_rows(h1);
        Tensor h2 = ad::relu(ad::conv2d(h1, p[2], p[3]));
        taps.last = ad::flatten_rows(ad::max_pool2d(h2, arch_.pool));
        taps.logit = linear(taps.last, p[4], p[5]);
    }
    return taps;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : params_) n += t.size();
    return n;
}

std::vector<double> Network::flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& t : params_) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

std::vector<std::uint8_t> Network::snapshot() const {
    Writer w;
    w.bytes(kMagic);
    w.u32(kSnapshotVersion);
    w.u32(static_cast<std::uint32_t>(arch_.kind));
    w.u32(static_cast<std::uint32_t>(arch_.input_shape.size()));
    for (auto d : arch_.input_shape) w.u64(d);
    w.u64(arch_.hidden);
    w.u64(arch_.conv1);
    w.u64(arch_.conv2);
    w.u64(arch_.kernel);
    w.u64(arch_.pool);
    w.u64(parameter_count());
    for (const auto& t : params_)
        for (double v : t.data()) w.f64(v);
    return std::move(w.out);
}

Network Network::load(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(kMagic.size());
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw std::runtime_error("snapshot: bad magic at byte offset 0");
    }
    r.pos = kMagic.size();
    const std::uint32_t version = r.u32();
    if (version != kSnapshotVersion) {
        throw std::runtime_error("snapshot: format version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kSnapshotVersion) + ")");
    }
    Architecture arch;
    const std::uint32_t kind = r.u32();
    if (kind != static_cast<std::uint32_t>(ArchKind::Mlp) && kind != static_cast<std::uint32_t>(ArchKind::Cnn)) {
        throw std::runtime_error("snapshot: unknown architecture kind " + std::to_string(kind));
    }
    arch.kind = static_cast<ArchKind>(kind);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw std::runtime_error("snapshot: implausible input rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) arch.input_shape.push_back(r.u64());
    arch.hidden = r.u64();
    arch.conv1 = r.u64();
    arch.conv2 = r.u64();
    arch.kernel = r.u64();
    arch.pool = r.u64();
    Network net(arch, 0, Init::Zero);
    const std::uint64_t count = r.u64();
    if (count != net.parameter_count()) {
        throw std::runtime_error("snapshot: parameter count " + std::to_string(count) +
                                 " does not match architecture (" + std::to_string(net.parameter_count()) + ")");
    }
    for (auto& t : net.params_)
        for (auto& v : t.mutable_data()) v = r.f64();
    if (r.pos != bytes.size()) {
        throw std::runtime_error("snapshot: trailing bytes at offset " + std::to_string(r.pos));
    }
    return net;
}

void Network::save(const std::filesystem::path& path) const {
    const auto bytes = snapshot();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write snapshot " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Network Network::load_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read snapshot " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return load(bytes);
}

// --- predictor head ------------------------------------------------------------

PredictorHead::PredictorHead(std::size_t dim, std::uint64_t seed) : dim_(dim), hidden_(std::max<std::size_t>(8, dim / 2)) {
    if (dim == 0) throw std::invalid_argument("predictor head: zero feature dimension");
    std::mt19937_64 rng(seed);
    params_.push_back(he_uniform({dim_, hidden_}, dim_, rng, Init::HeUniform));
    params_.push_back(zero_bias(hidden_));
    params_.push_back(he_uniform({hidden_, dim_}, hidden_, rng, Init::HeUniform));
    params_.push_back(zero_bias(dim_));
}

PredictorHead PredictorHead::identity(std::size_t dim) {
    PredictorHead h;
    h.dim_ = dim;
    h.hidden_ = 0;
    return h;
}

PredictorHead::PredictorHead(const PredictorHead& other)
    : dim_(other.dim_), hidden_(other.hidden_), params_(deep_copy(other.params_)) {}

PredictorHead& PredictorHead::operator=(const PredictorHead& other) {
    if (this != &other) {
        dim_ = other.dim_;
        hidden_ = other.hidden_;
        params_ = deep_copy(other.params_);
    }
    return *this;
}

Tensor PredictorHead::operator()(const Tensor& features) const {
    if (features.shape().size() != 2 || features.shape()[1] != dim_) {
        throw ad::ShapeError("predictor head: features " + ad::to_string(features.shape()) + " vs dim " +
                             std::to_string(dim_));
    }
    if (is_identity()) return features;
    return linear(ad::relu(linear(features, params_[0], params_[1])), params_[2], params_[3]);
}

Tensor predict_prob(const Tensor& logits) {
    if (logits.shape().size() != 2 || logits.shape()[1] != 1) {
        throw ad::ShapeError("predict_prob: expected [n,1] logits, got " + ad::to_string(logits.shape()));
    }
    return ad::concat_cols(ad::sigmoid(logits), ad::sigmoid(ad::neg(logits)));
}

std::array<double, 2> predict_prob(double logit) {
    ad::NoGradGuard guard;
    Tensor p = predict_prob(Tensor::constant({1, 1}, {logit}));
    return {p[0], p[1]};
}

}  // namespace splitpu
