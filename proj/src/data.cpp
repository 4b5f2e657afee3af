#include "splitpu/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace splitpu::data {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t offset) {
    if (offset + 4 > b.size()) {
        throw FormatError("IDX header truncated at byte offset " + std::to_string(offset));
    }
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void require_image(const Shape& shape, const char* what) {
    if (shape.size() != 3) throw ad::ShapeError(std::string(what) + ": expected [c,h,w], got " + ad::to_string(shape));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

std::size_t LabeledSet::count_label(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

// --- loaders -------------------------------------------------------------------

LabeledSet load_cifar10_binary(const std::filesystem::path& path) { return load_cifar10_binary(read_file(path)); }

LabeledSet load_cifar10_binary(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t kPixels = 3 * 32 * 32;
    constexpr std::size_t kRecord = 1 + kPixels;
    if (bytes.empty()) throw FormatError("CIFAR-10 batch is empty");
    if (bytes.size() % kRecord != 0) {
        const std::size_t last = bytes.size() - bytes.size() % kRecord;
        throw FormatError("CIFAR-10 batch truncated: partial record at byte offset " + std::to_string(last));
    }
    LabeledSet out;
    out.sample_shape = {3, 32, 32};
    const std::size_t n = bytes.size() / kRecord;
    out.labels.reserve(n);
    out.features.reserve(n * kPixels);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t offset = r * kRecord;
        const int label = bytes[offset];
        if (label > 9) {
            throw FormatError("CIFAR-10 label " + std::to_string(label) + " out of range at byte offset " +
                              std::to_string(offset));
        }
        out.labels.push_back(label);
        for (std::size_t i = 0; i < kPixels; ++i) out.features.push_back(bytes[offset + 1 + i] / 255.0);
    }
    return out;
}

LabeledSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    return load_idx(read_file(images), read_file(labels));
}

LabeledSet load_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
    if (images.empty()) throw FormatError("IDX image file is empty");
    if (labels.empty()) throw FormatError("IDX label file is empty");
    const std::uint32_t img_magic = read_be32(images, 0);
    if (img_magic != 0x00000803) {
        std::ostringstream os;
        os << "IDX images: bad magic 0x" << std::hex << img_magic << " at byte offset 0 (expected 0x00000803)";
        throw FormatError(os.str());
    }
    const std::uint32_t lbl_magic = read_be32(labels, 0);
    if (lbl_magic != 0x00000801) {
        std::ostringstream os;
        os << "IDX labels: bad magic 0x" << std::hex << lbl_magic << " at byte offset 0 (expected 0x00000801)";
        throw FormatError(os.str());
    }
    const std::size_t n = read_be32(images, 4);
    const std::size_t rows = read_be32(images, 8);
    const std::size_t cols = read_be32(images, 12);
    const std::size_t n_labels = read_be32(labels, 4);
    if (n != n_labels) {
        throw FormatError("IDX: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
    }
    const std::size_t pixels = rows * cols;
    if (images.size() != 16 + n * pixels) {
        throw FormatError("IDX images: expected " + std::to_string(16 + n * pixels) + " bytes, data ends at byte offset " +
                          std::to_string(images.size()));
    }
    if (labels.size() != 8 + n) {
        throw FormatError("IDX labels: expected " + std::to_string(8 + n) + " bytes, data ends at byte offset " +
                          std::to_string(labels.size()));
    }
    LabeledSet out;
    out.sample_shape = {1, rows, cols};
    out.features.resize(n * pixels);
    for (std::size_t i = 0; i < n * pixels; ++i) out.features[i] = images[16 + i] / 255.0;
    out.labels.assign(labels.begin() + 8, labels.end());
    return out;
}

LabeledSet binarize_cifar10(const LabeledSet& records) {
    LabeledSet out = records;
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        const int c = out.labels[i];
        if (c < 0 || c > 9) {
            throw std::invalid_argument("binarize_cifar10: label " + std::to_string(c) + " at record " +
                                        std::to_string(i) + " outside 0-9");
        }
        out.labels[i] = (c == 0 || c == 1 || c == 8 || c == 9) ? +1 : -1;
    }
    return out;
}

LabeledSet binarize_below(const LabeledSet& records, int threshold, int num_classes) {
    LabeledSet out = records;
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        const int c = out.labels[i];
        if (c < 0 || c >= num_classes) {
            throw std::invalid_argument("binarize_below: label " + std::to_string(c) + " at record " +
                                        std::to_string(i) + " outside 0-" + std::to_string(num_classes - 1));
        }
        out.labels[i] = c < threshold ? +1 : -1;
    }
    return out;
}

// --- synthetic -------------------------------------------------------------------

LabeledSet synth_two_gaussians(std::size_t n_pos, std::size_t n_neg, std::size_t dim, double separation,
                               std::uint64_t seed) {
    if (n_pos == 0 || n_neg == 0 || dim == 0) {
        throw std::invalid_argument("synth_two_gaussians: counts and dim must be positive");
    }
    if (!(separation > 0.0)) throw std::invalid_argument("synth_two_gaussians: separation must be positive");
    const double mu = 0.5 * separation / std::sqrt(static_cast<double>(dim));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    LabeledSet out;
    out.sample_shape = {dim};
    out.features.reserve((n_pos + n_neg) * dim);
    for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
        const bool pos = i < n_pos;
        for (std::size_t d = 0; d < dim; ++d) out.features.push_back((pos ? mu : -mu) + noise(rng));
        out.labels.push_back(pos ? +1 : -1);
    }
    return out;
}

double gaussian_bayes_accuracy(double separation, double prior) {
    if (!(prior > 0.0 && prior < 1.0)) throw std::invalid_argument("gaussian_bayes_accuracy: prior outside (0,1)");
    if (separation <= 0.0) return std::max(prior, 1.0 - prior);
    // Projection onto the mean direction: N(+s/2, 1) vs N(-s/2, 1); threshold
    // where the prior-weighted densities cross.
    const double h = 0.5 * separation;
    const double t = std::log((1.0 - prior) / prior) / separation;
    return prior * normal_cdf(h - t) + (1.0 - prior) * normal_cdf(h + t);
}

void write_csv(const LabeledSet& set, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.precision(17);
    for (std::size_t d = 0; d < set.sample_size(); ++d) f << 'x' << d << ',';
    f << "label\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (double v : set.sample(i)) f << v << ',';
        f << set.labels[i] << '\n';
    }
}

// --- PU split ------------------------------------------------------------------

Oracle Oracle::grant(bool analysis_mode) {
    if (!analysis_mode) {
        throw LabelLeakError("ground-truth labels of unlabeled samples are only available in analysis mode");
    }
    return Oracle{};
}

void PUDataset::set_prior(double prior) {
    if (!(prior > 0.0 && prior < 1.0)) throw std::invalid_argument("class prior must lie in (0,1)");
    prior_ = prior;
}

void PUDataset::set_test(LabeledSet test) {
    if (test.size() > 0 && test.sample_shape != sample_shape_) {
        throw ad::ShapeError("test set sample shape " + ad::to_string(test.sample_shape) + " vs training " +
                             ad::to_string(sample_shape_));
    }
    test_ = std::move(test);
}

PUDataset make_pu_split(const LabeledSet& full, std::size_t n_p, std::uint64_t seed) {
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < full.size(); ++i)
        if (full.labels[i] == +1) pos.push_back(i);
    if (n_p > pos.size()) {
        throw std::invalid_argument("make_pu_split: n_p = " + std::to_string(n_p) + " exceeds " +
                                    std::to_string(pos.size()) + " available positives");
    }
    if (n_p == 0) throw std::invalid_argument("make_pu_split: n_p must be positive");
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    pos.resize(n_p);
    std::sort(pos.begin(), pos.end());

    PUDataset d;
    d.sample_shape_ = full.sample_shape;
    const std::size_t sz = full.sample_size();
    std::vector<bool> labeled(full.size(), false);
    for (auto i : pos) labeled[i] = true;
    d.positive_index_ = pos;
    d.positives_.reserve(n_p * sz);
    for (auto i : pos) d.positives_.insert(d.positives_.end(), full.sample(i).begin(), full.sample(i).end());
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (labeled[i]) continue;
        d.unlabeled_index_.push_back(i);
        d.unlabeled_.insert(d.unlabeled_.end(), full.sample(i).begin(), full.sample(i).end());
        d.hidden_labels_.push_back(full.labels[i]);
    }
    d.set_prior(static_cast<double>(full.count_label(+1)) / static_cast<double>(full.size()));
    return d;
}

// --- augmentation ----------------------------------------------------------------

std::vector<double> hflip(const Shape& shape, std::span<const double> image) {
    require_image(shape, "hflip");
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    std::vector<double> out(image.size());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out[(k * h + y) * w + x] = image[(k * h + y) * w + (w - 1 - x)];
    return out;
}

std::vector<double> crop_padded(const Shape& shape, std::span<const double> image, std::size_t pad, std::size_t dy,
                                std::size_t dx) {
    require_image(shape, "crop_padded");
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    std::vector<double> out(image.size(), 0.0);
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
            const long sy = static_cast<long>(y + dy) - static_cast<long>(pad);
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            for (std::size_t x = 0; x < w; ++x) {
                const long sx = static_cast<long>(x + dx) - static_cast<long>(pad);
                if (sx < 0 || sx >= static_cast<long>(w)) continue;
                out[(k * h + y) * w + x] = image[(k * h + sy) * w + sx];
            }
        }
    }
    return out;
}

std::vector<double> color_jitter(const Shape& shape, std::span<const double> image, double brightness,
                                 double contrast) {
    require_image(shape, "color_jitter");
    std::vector<double> out(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) out[i] = std::clamp(image[i] * brightness, 0.0, 1.0);
    const double m = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    // x*c + m*(1-c) is exactly x when c == 1.
    for (auto& v : out) v = std::clamp(v * contrast + m * (1.0 - contrast), 0.0, 1.0);
    return out;
}

std::vector<double> cutout(const Shape& shape, std::span<const double> image, std::size_t y0, std::size_t x0,
                           std::size_t size) {
    require_image(shape, "cutout");
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    if (size > h || size > w || y0 + size > h || x0 + size > w) {
        throw std::invalid_argument("cutout: patch does not fit inside the image");
    }
    std::vector<double> out(image.begin(), image.end());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = y0; y < y0 + size; ++y)
            for (std::size_t x = x0; x < x0 + size; ++x) out[(k * h + y) * w + x] = 0.0;
    return out;
}

AugmentationPipeline::AugmentationPipeline(AugmentKind kind, AugmentParams params, std::uint64_t seed)
    : kind_(kind), params_(params), rng_(seed) {}

std::vector<double> AugmentationPipeline::operator()(const Shape& shape, std::span<const double> sample) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (shape.size() != 3) {
        std::vector<double> out(sample.begin(), sample.end());
        if (kind_ == AugmentKind::Weak) {
            std::normal_distribution<double> noise(0.0, params_.noise_sigma);
            for (auto& v : out) v += noise(rng_);
        } else {
            for (auto& v : out)
                if (unit(rng_) < params_.dropout_p) v = 0.0;
            if (params_.strong_noise_sigma > 0.0) {
                std::normal_distribution<double> noise(0.0, params_.strong_noise_sigma);
                for (auto& v : out) v += noise(rng_);
            }
        }
        return out;
    }
    if (kind_ == AugmentKind::Weak) {
        std::uniform_int_distribution<std::size_t> offset(0, 2 * params_.crop_pad);
        const std::size_t dy = offset(rng_), dx = offset(rng_);
        auto out = crop_padded(shape, sample, params_.crop_pad, dy, dx);
        if (unit(rng_) < params_.flip_prob) out = hflip(shape, out);
        return out;
    }
    if (params_.strong == StrongKind::Jitter) {
        std::uniform_real_distribution<double> factor(params_.jitter_min, params_.jitter_max);
        const double b = params_.jitter_min == params_.jitter_max ? params_.jitter_min : factor(rng_);
        const double c = params_.jitter_min == params_.jitter_max ? params_.jitter_min : factor(rng_);
        return color_jitter(shape, sample, b, c);
    }
    const std::size_t size = std::min({params_.cutout, shape[1], shape[2]});
    std::uniform_int_distribution<std::size_t> ys(0, shape[1] - size), xs(0, shape[2] - size);
    const std::size_t y0 = ys(rng_), x0 = xs(rng_);
    return cutout(shape, sample, y0, x0, size);
}

Tensor make_batch(const Shape& shape, std::span<const double> features, std::span<const std::size_t> indices,
                  AugmentationPipeline* augment) {
    const std::size_t sz = ad::numel(shape);
    std::vector<double> buf;
    buf.reserve(indices.size() * sz);
    for (auto i : indices) {
        std::span<const double> s(features.data() + i * sz, sz);
        if (augment) {
            auto v = (*augment)(shape, s);
            buf.insert(buf.end(), v.begin(), v.end());
        } else {
            buf.insert(buf.end(), s.begin(), s.end());
        }
    }
    Shape batch{indices.size()};
    batch.insert(batch.end(), shape.begin(), shape.end());
    return Tensor::constant(std::move(batch), std::move(buf));
}

}  // namespace splitpu::data
