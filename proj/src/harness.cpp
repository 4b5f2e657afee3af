#include "splitpu/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "splitpu/seeding.hpp"

namespace splitpu::harness {

namespace fs = std::filesystem;
using pipeline::ConsistencyScope;
using pipeline::EasyLoss;
using pipeline::HardLoss;

namespace {

// ---------------------------------------------------------------------------
// formatting

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string on_off(bool v) { return v ? "on" : "off"; }

std::string slug(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return out;
}

// ---------------------------------------------------------------------------
// typed JSON access with key paths

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string where(const std::string& path) { return path.empty() ? "<root>" : path; }

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(where(path) + ": expected an object, got " + j.type_name());
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw ConfigError(join(path, key) + ": unknown key");
    }
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number, got " + v.type_name());
    return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
        throw ConfigError(path + ": must be non-negative, got " + v.dump());
    }
    throw ConfigError(path + ": expected a non-negative integer, got " + std::string(v.type_name()));
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean, got " + v.type_name());
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string, got " + v.type_name());
    return v.get<std::string>();
}

template <typename Parse>
auto as_enum(const json& v, const std::string& path, Parse parse) {
    const auto s = as_string(v, path);
    try {
        return parse(s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

template <typename Fn>
auto as_list(const json& v, const std::string& path, Fn item) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array, got " + v.type_name());
    std::vector<decltype(item(v, path))> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

// Reads j[key] through `read` into `dst` when present.
template <typename T, typename Fn>
void field(const json& j, const std::string& path, const char* key, T& dst, Fn read) {
    if (j.contains(key)) dst = read(j.at(key), join(path, key));
}

double in_range(double v, const std::string& path, double lo, double hi, bool lo_open, bool hi_open) {
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
    if (!ok) {
        throw ConfigError(path + ": must lie in " + (lo_open ? "(" : "[") + fmt(lo) + ", " + fmt(hi) +
                          (hi_open ? ")" : "]") + ", got " + fmt(v));
    }
    return v;
}

auto number_in(double lo, double hi, bool lo_open, bool hi_open) {
    return [=](const json& v, const std::string& p) { return in_range(as_number(v, p), p, lo, hi, lo_open, hi_open); };
}
const auto kPositive = number_in(0.0, HUGE_VAL, true, true);
const auto kNonNegative = number_in(0.0, HUGE_VAL, false, true);
const auto kUnit = number_in(0.0, 1.0, false, false);
const auto kOpenUnit = number_in(0.0, 1.0, true, true);

std::size_t positive_count(const json& v, const std::string& p) {
    const auto n = as_count(v, p);
    if (n == 0) throw ConfigError(p + ": must be positive");
    return n;
}

fs::path as_path(const json& v, const std::string& p, const fs::path& base) {
    fs::path out = as_string(v, p);
    return out.is_relative() && !base.empty() ? base / out : out;
}

template <typename T>
void reject_duplicates(const std::vector<T>& values, const std::string& path) {
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (values[i] == values[j]) throw ConfigError(path + ": duplicate grid value at index " + std::to_string(i));
}

risk::PositiveNegNorm parse_norm(const std::string& s) {
    if (s == "positives") return risk::PositiveNegNorm::ByPositives;
    if (s == "unlabeled") return risk::PositiveNegNorm::ByUnlabeled;
    throw std::invalid_argument("unknown normalizer '" + s + "' (expected one of: positives, unlabeled)");
}

data::StrongKind parse_strong(const std::string& s) {
    if (s == "jitter") return data::StrongKind::Jitter;
    if (s == "cutout") return data::StrongKind::Cutout;
    throw std::invalid_argument("unknown strong augmentation '" + s + "' (expected one of: jitter, cutout)");
}

DatasetKind parse_kind(const std::string& s) {
    if (s == "gaussians") return DatasetKind::Gaussians;
    if (s == "idx") return DatasetKind::Idx;
    if (s == "cifar10") return DatasetKind::Cifar10;
    throw std::invalid_argument("unknown dataset kind '" + s + "' (expected one of: gaussians, idx, cifar10)");
}

std::string kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::Gaussians: return "gaussians";
        case DatasetKind::Idx: return "idx";
        case DatasetKind::Cifar10: return "cifar10";
    }
    return "?";
}

void parse_augment(const json& j, const std::string& path, data::AugmentParams& a) {
    require_object(j, path);
    reject_unknown(j, path,
                   {"crop_pad", "flip_prob", "strong", "jitter_min", "jitter_max", "cutout", "noise_sigma", "dropout_p",
                    "strong_noise_sigma"});
    field(j, path, "crop_pad", a.crop_pad, as_count);
    field(j, path, "flip_prob", a.flip_prob, kUnit);
    field(j, path, "strong", a.strong, [](const json& v, const std::string& p) { return as_enum(v, p, parse_strong); });
    field(j, path, "jitter_min", a.jitter_min, kPositive);
    field(j, path, "jitter_max", a.jitter_max, kPositive);
    field(j, path, "cutout", a.cutout, positive_count);
    field(j, path, "noise_sigma", a.noise_sigma, kNonNegative);
    field(j, path, "dropout_p", a.dropout_p, number_in(0.0, 1.0, false, true));
    field(j, path, "strong_noise_sigma", a.strong_noise_sigma, kNonNegative);
    if (a.jitter_min > a.jitter_max) throw ConfigError(join(path, "jitter_min") + ": exceeds jitter_max");
}

void parse_train(const json& j, const std::string& path, pipeline::TrainPhaseConfig& c) {
    require_object(j, path);
    reject_unknown(j, path,
                   {"risk", "positive_norm", "base_epochs", "base_lr", "augment_base", "early_stop", "tau",
                    "temp_max_epochs", "temp_lr", "temp_momentum", "augment_temp", "student_epochs", "student_lr",
                    "easy_loss", "hard_loss", "consistency_scope", "rho", "alpha", "beta", "kl_direction",
                    "feat_stop_gradient", "include_positives", "augment_student", "iterations", "batch_size",
                    "mlp_hidden", "augment"});
    const auto enum_of = [](auto parse) {
        return [parse](const json& v, const std::string& p) { return as_enum(v, p, parse); };
    };
    field(j, path, "risk", c.estimator, enum_of(pipeline::parse_estimator));
    field(j, path, "positive_norm", c.positive_norm, enum_of(parse_norm));
    field(j, path, "base_epochs", c.base_epochs, positive_count);
    field(j, path, "base_lr", c.base_lr, kPositive);
    field(j, path, "augment_base", c.augment_base, as_bool);
    field(j, path, "early_stop", c.early_stop, as_bool);
    field(j, path, "tau", c.tau, kUnit);
    field(j, path, "temp_max_epochs", c.temp_max_epochs, positive_count);
    field(j, path, "temp_lr", c.temp_lr, kPositive);
    field(j, path, "temp_momentum", c.temp_momentum, number_in(0.0, 1.0, false, true));
    field(j, path, "augment_temp", c.augment_temp, as_bool);
    field(j, path, "student_epochs", c.student_epochs, positive_count);
    field(j, path, "student_lr", c.student_lr, kPositive);
    field(j, path, "easy_loss", c.easy_loss, enum_of(pipeline::parse_easy_loss));
    field(j, path, "hard_loss", c.hard_loss, enum_of(pipeline::parse_hard_loss));
    field(j, path, "consistency_scope", c.consistency_scope, enum_of(pipeline::parse_scope));
    field(j, path, "rho", c.weights.rho, kOpenUnit);
    field(j, path, "alpha", c.weights.alpha, kNonNegative);
    field(j, path, "beta", c.weights.beta, kNonNegative);
    field(j, path, "kl_direction", c.kl_direction, enum_of(pipeline::parse_kl_direction));
    field(j, path, "feat_stop_gradient", c.feat_stop_gradient, as_bool);
    field(j, path, "include_positives", c.include_positives, as_bool);
    field(j, path, "augment_student", c.augment_student, as_bool);
    field(j, path, "iterations", c.iterations, as_count);
    field(j, path, "batch_size", c.batch_size, [](const json& v, const std::string& p) {
        const auto n = as_count(v, p);
        if (n < 2) throw ConfigError(p + ": must be at least 2");
        return n;
    });
    field(j, path, "mlp_hidden", c.mlp_hidden, positive_count);
    if (j.contains("augment")) parse_augment(j.at("augment"), join(path, "augment"), c.augment);
}

void parse_dataset(const json& j, const std::string& path, DatasetSpec& d, const fs::path& base) {
    require_object(j, path);
    reject_unknown(j, path,
                   {"kind", "dim", "separation", "n_pos", "n_neg", "test_pos", "test_neg", "train_images",
                    "train_labels", "test_images", "test_labels", "positive_below", "train_batches", "test_batch",
                    "prior"});
    field(j, path, "kind", d.kind, [](const json& v, const std::string& p) { return as_enum(v, p, parse_kind); });
    const auto path_of = [&base](const json& v, const std::string& p) { return as_path(v, p, base); };
    field(j, path, "dim", d.dim, positive_count);
    field(j, path, "separation", d.separation, kPositive);
    field(j, path, "n_pos", d.n_pos, positive_count);
    field(j, path, "n_neg", d.n_neg, positive_count);
    field(j, path, "test_pos", d.test_pos, positive_count);
    field(j, path, "test_neg", d.test_neg, positive_count);
    field(j, path, "train_images", d.train_images, path_of);
    field(j, path, "train_labels", d.train_labels, path_of);
    field(j, path, "test_images", d.test_images, path_of);
    field(j, path, "test_labels", d.test_labels, path_of);
    field(j, path, "positive_below", d.positive_below, [](const json& v, const std::string& p) {
        const auto n = as_count(v, p);
        if (n < 1 || n > 9) throw ConfigError(p + ": must lie in [1, 9], got " + std::to_string(n));
        return static_cast<int>(n);
    });
    field(j, path, "train_batches", d.train_batches,
          [&](const json& v, const std::string& p) { return as_list(v, p, path_of); });
    field(j, path, "test_batch", d.test_batch, path_of);
    if (j.contains("prior")) d.prior = kOpenUnit(j.at("prior"), join(path, "prior"));

    const auto need_file = [&](const fs::path& f, const char* key) {
        if (f.empty()) throw ConfigError(join(path, key) + ": required for dataset kind " + kind_name(d.kind));
        if (!fs::is_regular_file(f)) throw ConfigError(join(path, key) + ": file not found: " + f.string());
    };
    if (d.kind == DatasetKind::Idx) {
        need_file(d.train_images, "train_images");
        need_file(d.train_labels, "train_labels");
        need_file(d.test_images, "test_images");
        need_file(d.test_labels, "test_labels");
    } else if (d.kind == DatasetKind::Cifar10) {
        if (d.train_batches.empty()) throw ConfigError(join(path, "train_batches") + ": required for dataset kind cifar10");
        for (std::size_t i = 0; i < d.train_batches.size(); ++i) {
            if (!fs::is_regular_file(d.train_batches[i])) {
                throw ConfigError(join(path, "train_batches") + "[" + std::to_string(i) +
                                  "]: file not found: " + d.train_batches[i].string());
            }
        }
        need_file(d.test_batch, "test_batch");
    }
}

void parse_sweep(const json& j, const std::string& path, SweepAxes& s) {
    require_object(j, path);
    reject_unknown(j, path,
                   {"risk", "early_stop", "easy_loss", "hard_loss", "consistency_scope", "iterations", "tau", "rho",
                    "alpha", "beta"});
    const auto enum_list = [](auto parse) {
        return [parse](const json& v, const std::string& p) {
            return as_list(v, p, [parse](const json& e, const std::string& q) { return as_enum(e, q, parse); });
        };
    };
    const auto number_list = [](auto check) {
        return [check](const json& v, const std::string& p) { return as_list(v, p, check); };
    };
    field(j, path, "risk", s.risk, enum_list(pipeline::parse_estimator));
    field(j, path, "early_stop", s.early_stop,
          [](const json& v, const std::string& p) { return as_list(v, p, as_bool); });
    field(j, path, "easy_loss", s.easy_loss, enum_list(pipeline::parse_easy_loss));
    field(j, path, "hard_loss", s.hard_loss, enum_list(pipeline::parse_hard_loss));
    field(j, path, "consistency_scope", s.consistency_scope, enum_list(pipeline::parse_scope));
    field(j, path, "iterations", s.iterations, number_list(as_count));
    field(j, path, "tau", s.tau, number_list(kUnit));
    field(j, path, "rho", s.rho, number_list(kOpenUnit));
    field(j, path, "alpha", s.alpha, number_list(kNonNegative));
    field(j, path, "beta", s.beta, number_list(kNonNegative));

    reject_duplicates(s.risk, join(path, "risk"));
    reject_duplicates(s.early_stop, join(path, "early_stop"));
    reject_duplicates(s.easy_loss, join(path, "easy_loss"));
    reject_duplicates(s.hard_loss, join(path, "hard_loss"));
    reject_duplicates(s.consistency_scope, join(path, "consistency_scope"));
    reject_duplicates(s.iterations, join(path, "iterations"));
    reject_duplicates(s.tau, join(path, "tau"));
    reject_duplicates(s.rho, join(path, "rho"));
    reject_duplicates(s.alpha, join(path, "alpha"));
    reject_duplicates(s.beta, join(path, "beta"));
}

// ---------------------------------------------------------------------------
// grid

struct Axis {
    std::string name;
    std::vector<std::string> labels;
    std::vector<std::function<void(pipeline::TrainPhaseConfig&)>> apply;
    std::string base_label;  // label of the value in the un-swept config
};

template <typename T, typename Label, typename Set>
void add_axis(std::vector<Axis>& axes, const char* name, const std::vector<T>& values, const T& base, Label label,
              Set set) {
    if (values.empty()) return;
    Axis a{name, {}, {}, label(base)};
    for (const T& v : values) {
        a.labels.push_back(label(v));
        a.apply.push_back([set, v](pipeline::TrainPhaseConfig& c) { set(c, v); });
    }
    axes.push_back(std::move(a));
}

std::vector<Axis> grid_axes(const ExperimentSpec& spec) {
    const auto& s = spec.sweep;
    const auto& b = spec.train;
    std::vector<Axis> axes;
    const auto str = [](auto v) { return pipeline::to_string(v); };
    add_axis(axes, "risk", s.risk, b.estimator, str, [](auto& c, auto v) { c.estimator = v; });
    add_axis(axes, "early_stop", s.early_stop, b.early_stop, on_off, [](auto& c, bool v) { c.early_stop = v; });
    add_axis(axes, "easy_loss", s.easy_loss, b.easy_loss, str, [](auto& c, auto v) { c.easy_loss = v; });
    add_axis(axes, "hard_loss", s.hard_loss, b.hard_loss, str, [](auto& c, auto v) { c.hard_loss = v; });
    add_axis(axes, "consistency_scope", s.consistency_scope, b.consistency_scope, str,
             [](auto& c, auto v) { c.consistency_scope = v; });
    add_axis(axes, "iterations", s.iterations, b.iterations, [](std::size_t v) { return std::to_string(v); },
             [](auto& c, std::size_t v) { c.iterations = v; });
    add_axis(axes, "tau", s.tau, b.tau, fmt, [](auto& c, double v) { c.tau = v; });
    add_axis(axes, "rho", s.rho, b.weights.rho, fmt, [](auto& c, double v) { c.weights.rho = v; });
    add_axis(axes, "alpha", s.alpha, b.weights.alpha, fmt, [](auto& c, double v) { c.weights.alpha = v; });
    add_axis(axes, "beta", s.beta, b.weights.beta, fmt, [](auto& c, double v) { c.weights.beta = v; });
    return axes;
}

// Row labels matching the layout of the published ablation tables.
std::string display(const std::string& axis, const std::string& label) {
    if (axis == "early_stop") return label == "on" ? "with early-stop split" : "without early-stop split";
    if (axis == "easy_loss") {
        if (label == "soft-ce") return "CE,soft";
        if (label == "hard-ce") return "CE,hard";
        if (label == "soft-djs") return "DJS,soft";
        if (label == "hard-djs") return "DJS,hard";
    }
    if (axis == "hard_loss") {
        if (label == "none") return "no";
        if (label == "nnpu") return "nnPU";
        if (label == "dual") return "dual (cross+self)";
    }
    if (axis == "consistency_scope") return label == "all" ? "all data" : "hard samples only";
    return label;
}

// ---------------------------------------------------------------------------
// statistics and CSV

struct Stats {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double stddev = 0.0;
    std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& v) {
    Stats s;
    s.n = v.size();
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

void write_curve_csv(const fs::path& path, const pipeline::RunReport& r) {
    auto f = open_out(path);
    f << "iteration,phase,epoch,loss,agreement\n";
    for (const auto& e : r.curve) {
        f << e.iteration << ',' << e.phase << ',' << e.epoch << ',' << fmt(e.loss) << ',';
        if (e.metric) f << fmt(*e.metric);
        f << '\n';
    }
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
    std::atomic<std::size_t> next{0};
    const auto loop = [&] {
        for (std::size_t i = next++; i < n; i = next++) task(i);
    };
    if (workers == 1) {
        loop();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
}

data::PUDataset make_dataset(const ExperimentSpec& spec, const SourceData& source, std::uint64_t seed) {
    auto d = data::make_pu_split(source.train, spec.n_p, derive_seed(seed, SeedStream::PuSplit));
    if (spec.dataset.prior) d.set_prior(*spec.dataset.prior);
    d.set_test(source.test);
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------

bool SweepAxes::empty() const { return active().empty(); }

std::vector<std::string> SweepAxes::active() const {
    std::vector<std::string> out;
    if (!risk.empty()) out.push_back("risk");
    if (!early_stop.empty()) out.push_back("early_stop");
    if (!easy_loss.empty()) out.push_back("easy_loss");
    if (!hard_loss.empty()) out.push_back("hard_loss");
    if (!consistency_scope.empty()) out.push_back("consistency_scope");
    if (!iterations.empty()) out.push_back("iterations");
    if (!tau.empty()) out.push_back("tau");
    if (!rho.empty()) out.push_back("rho");
    if (!alpha.empty()) out.push_back("alpha");
    if (!beta.empty()) out.push_back("beta");
    return out;
}

ExperimentSpec parse_spec(const json& c, const fs::path& base_dir) {
    require_object(c, "");
    reject_unknown(c, "",
                   {"name", "dataset", "n_p", "seeds", "train", "sweep", "analysis_taus", "analysis_accuracy", "out",
                    "analysis", "jobs", "snapshots"});
    ExperimentSpec s;
    field(c, "", "name", s.name, as_string);
    if (c.contains("dataset")) parse_dataset(c.at("dataset"), "dataset", s.dataset, base_dir);
    field(c, "", "n_p", s.n_p, positive_count);
    field(c, "", "seeds", s.seeds, [](const json& v, const std::string& p) {
        auto seeds = as_list(v, p, [](const json& e, const std::string& q) { return std::uint64_t{as_count(e, q)}; });
        if (seeds.empty()) throw ConfigError(p + ": must list at least one seed");
        reject_duplicates(seeds, p);
        return seeds;
    });
    if (c.contains("train")) parse_train(c.at("train"), "train", s.train);
    if (c.contains("sweep")) parse_sweep(c.at("sweep"), "sweep", s.sweep);
    field(c, "", "analysis_taus", s.analysis_taus, [](const json& v, const std::string& p) {
        auto taus = as_list(v, p, kUnit);
        if (taus.empty()) throw ConfigError(p + ": must list at least one threshold");
        return taus;
    });
    field(c, "", "analysis_accuracy", s.analysis_accuracy, as_bool);
    field(c, "", "out", s.out_dir, [](const json& v, const std::string& p) { return fs::path(as_string(v, p)); });
    field(c, "", "analysis", s.analysis, as_bool);
    field(c, "", "jobs", s.jobs, positive_count);
    field(c, "", "snapshots", s.snapshots, as_bool);

    if (s.dataset.kind == DatasetKind::Gaussians && s.n_p > s.dataset.n_pos) {
        throw ConfigError("n_p: exceeds dataset.n_pos (" + std::to_string(s.dataset.n_pos) + ")");
    }
    try {
        s.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return s;
}

ExperimentSpec validate_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path.string() + ": cannot open config file");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    ExperimentSpec s = parse_spec(j, path.parent_path());
    if (const char* out = std::getenv("SPLITPU_OUT"); out && *out) s.out_dir = out;
    if (const char* jobs = std::getenv("SPLITPU_JOBS"); jobs && *jobs) {
        std::size_t n = 0;
        const auto end = jobs + std::char_traits<char>::length(jobs);
        const auto r = std::from_chars(jobs, end, n);
        if (r.ec != std::errc() || r.ptr != end || n == 0) {
            throw ConfigError(std::string("SPLITPU_JOBS: expected a positive integer, got '") + jobs + "'");
        }
        s.jobs = n;
    }
    return s;
}

json to_json(const ExperimentSpec& s) {
    const auto& t = s.train;
    const auto& a = t.augment;
    const auto& d = s.dataset;
    json ds = {{"kind", kind_name(d.kind)}};
    if (d.kind == DatasetKind::Gaussians) {
        ds.update({{"dim", d.dim},
                   {"separation", d.separation},
                   {"n_pos", d.n_pos},
                   {"n_neg", d.n_neg},
                   {"test_pos", d.test_pos},
                   {"test_neg", d.test_neg}});
    } else if (d.kind == DatasetKind::Idx) {
        ds.update({{"train_images", d.train_images.string()},
                   {"train_labels", d.train_labels.string()},
                   {"test_images", d.test_images.string()},
                   {"test_labels", d.test_labels.string()},
                   {"positive_below", d.positive_below}});
    } else {
        json batches = json::array();
        for (const auto& p : d.train_batches) batches.push_back(p.string());
        ds.update({{"train_batches", batches}, {"test_batch", d.test_batch.string()}});
    }
    if (d.prior) ds["prior"] = *d.prior;

    json train = {
        {"risk", pipeline::to_string(t.estimator)},
        {"positive_norm", t.positive_norm == risk::PositiveNegNorm::ByPositives ? "positives" : "unlabeled"},
        {"base_epochs", t.base_epochs},
        {"base_lr", t.base_lr},
        {"augment_base", t.augment_base},
        {"early_stop", t.early_stop},
        {"tau", t.tau},
        {"temp_max_epochs", t.temp_max_epochs},
        {"temp_lr", t.temp_lr},
        {"temp_momentum", t.temp_momentum},
        {"augment_temp", t.augment_temp},
        {"student_epochs", t.student_epochs},
        {"student_lr", t.student_lr},
        {"easy_loss", pipeline::to_string(t.easy_loss)},
        {"hard_loss", pipeline::to_string(t.hard_loss)},
        {"consistency_scope", pipeline::to_string(t.consistency_scope)},
        {"rho", t.weights.rho},
        {"alpha", t.weights.alpha},
        {"beta", t.weights.beta},
        {"kl_direction", pipeline::to_string(t.kl_direction)},
        {"feat_stop_gradient", t.feat_stop_gradient},
        {"include_positives", t.include_positives},
        {"augment_student", t.augment_student},
        {"iterations", t.iterations},
        {"batch_size", t.batch_size},
        {"mlp_hidden", t.mlp_hidden},
        {"augment",
         {{"crop_pad", a.crop_pad},
          {"flip_prob", a.flip_prob},
          {"strong", a.strong == data::StrongKind::Jitter ? "jitter" : "cutout"},
          {"jitter_min", a.jitter_min},
          {"jitter_max", a.jitter_max},
          {"cutout", a.cutout},
          {"noise_sigma", a.noise_sigma},
          {"dropout_p", a.dropout_p},
          {"strong_noise_sigma", a.strong_noise_sigma}}}};

    const auto names = [](const auto& values) {
        json out = json::array();
        for (const auto& v : values) out.push_back(pipeline::to_string(v));
        return out;
    };
    json sweep = json::object();
    const auto& w = s.sweep;
    if (!w.risk.empty()) sweep["risk"] = names(w.risk);
    if (!w.early_stop.empty()) sweep["early_stop"] = w.early_stop;
    if (!w.easy_loss.empty()) sweep["easy_loss"] = names(w.easy_loss);
    if (!w.hard_loss.empty()) sweep["hard_loss"] = names(w.hard_loss);
    if (!w.consistency_scope.empty()) sweep["consistency_scope"] = names(w.consistency_scope);
    if (!w.iterations.empty()) sweep["iterations"] = w.iterations;
    if (!w.tau.empty()) sweep["tau"] = w.tau;
    if (!w.rho.empty()) sweep["rho"] = w.rho;
    if (!w.alpha.empty()) sweep["alpha"] = w.alpha;
    if (!w.beta.empty()) sweep["beta"] = w.beta;

    return {{"name", s.name},
            {"dataset", ds},
            {"n_p", s.n_p},
            {"seeds", s.seeds},
            {"train", train},
            {"sweep", sweep},
            {"analysis_taus", s.analysis_taus},
            {"analysis_accuracy", s.analysis_accuracy},
            {"out", s.out_dir.string()},
            {"analysis", s.analysis},
            {"jobs", s.jobs},
            {"snapshots", s.snapshots}};
}

std::vector<Cell> expand_grid(const ExperimentSpec& spec) {
    const auto axes = grid_axes(spec);
    std::vector<Cell> cells{Cell{"", {}, spec.train}};
    for (const auto& axis : axes) {
        std::vector<Cell> next;
        for (const auto& c : cells) {
            for (std::size_t i = 0; i < axis.labels.size(); ++i) {
                Cell d = c;
                d.coords.emplace_back(axis.name, axis.labels[i]);
                d.name += (d.name.empty() ? "" : ";") + axis.name + "=" + axis.labels[i];
                axis.apply[i](d.config);
                next.push_back(std::move(d));
            }
        }
        cells = std::move(next);
    }
    if (axes.empty()) cells.front().name = "base";
    return cells;
}

SourceData load_source(const DatasetSpec& d, std::uint64_t seed) {
    switch (d.kind) {
        case DatasetKind::Gaussians:
            return {data::synth_two_gaussians(d.n_pos, d.n_neg, d.dim, d.separation,
                                              derive_seed(seed, SeedStream::DatasetTrain)),
                    data::synth_two_gaussians(d.test_pos, d.test_neg, d.dim, d.separation,
                                              derive_seed(seed, SeedStream::DatasetTest))};
        case DatasetKind::Idx:
            return {data::binarize_below(data::load_idx(d.train_images, d.train_labels), d.positive_below),
                    data::binarize_below(data::load_idx(d.test_images, d.test_labels), d.positive_below)};
        case DatasetKind::Cifar10: {
            data::LabeledSet all;
            for (const auto& p : d.train_batches) {
                auto part = data::load_cifar10_binary(p);
                all.sample_shape = part.sample_shape;
                all.features.insert(all.features.end(), part.features.begin(), part.features.end());
                all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
            }
            return {data::binarize_cifar10(all), data::binarize_cifar10(data::load_cifar10_binary(d.test_batch))};
        }
    }
    throw std::logic_error("unhandled dataset kind");
}

data::PUDataset build_dataset(const ExperimentSpec& spec, std::uint64_t seed) {
    return make_dataset(spec, load_source(spec.dataset, seed), seed);
}

std::vector<SummaryRow> summarize(const std::vector<CellResult>& results) {
    std::vector<SummaryRow> rows;
    for (const auto& r : results) {
        for (std::size_t k = 0; k <= r.cell.config.iterations; ++k) {
            std::vector<double> acc;
            for (const auto& rep : r.reports)
                if (!rep.failed) acc.push_back(rep.accuracy_at(k));
            const auto s = stats_of(acc);
            rows.push_back({r.cell.name + "/iter" + std::to_string(k), s.mean, s.stddev, s.n});
        }
    }
    return rows;
}

std::vector<SummaryRow> summarize_raw(const std::vector<RawRow>& raw) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : raw) {
        const auto key = r.cell + "/iter" + std::to_string(r.iteration);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(r.accuracy);
    }
    std::vector<SummaryRow> rows;
    for (const auto& key : order) {
        const auto s = stats_of(groups[key]);
        rows.push_back({key, s.mean, s.stddev, s.n});
    }
    return rows;
}

void write_raw_csv(const fs::path& path, const std::vector<CellResult>& results) {
    auto f = open_out(path);
    f << "cell,seed,iteration,accuracy\n";
    for (const auto& r : results)
        for (const auto& rep : r.reports) {
            if (rep.failed) continue;
            for (std::size_t k = 0; k <= rep.iterations.size(); ++k)
                f << r.cell.name << ',' << rep.seed << ',' << k << ',' << fmt(rep.accuracy_at(k)) << '\n';
        }
}

std::vector<RawRow> read_raw_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(f, line);
    if (line != "cell,seed,iteration,accuracy") throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<RawRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> col;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) col.push_back(c);
        if (col.size() != 4) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        RawRow r;
        r.cell = col[0];
        r.seed = std::stoull(col[1]);
        r.iteration = std::stoull(col[2]);
        std::from_chars(col[3].data(), col[3].data() + col[3].size(), r.accuracy);
        rows.push_back(r);
    }
    return rows;
}

void write_summary_csv(const fs::path& path, const std::vector<SummaryRow>& rows,
                       const std::vector<CellResult>& results) {
    auto f = open_out(path);
    f << "cell,mean,std,n\n";
    for (const auto& r : rows) f << r.cell << ',' << fmt(r.mean) << ',' << fmt(r.stddev) << ',' << r.n << '\n';
    for (const auto& r : results)
        for (const auto& rep : r.reports)
            if (rep.failed) {
                f << "# " << r.cell.name << ": seed " << rep.seed
                  << " failed and is excluded from the statistics: " << one_line(rep.error) << '\n';
            }
}

json report_to_json(const pipeline::RunReport& r) {
    json its = json::array();
    for (const auto& it : r.iterations) {
        its.push_back({{"iteration", it.iteration},
                       {"test_accuracy", it.test_accuracy},
                       {"n_easy", it.n_easy},
                       {"n_hard", it.n_hard},
                       {"stop_epoch", it.stop_epoch},
                       {"stop_accuracy", it.stop_accuracy},
                       {"reached_tau", it.reached_tau}});
    }
    json out = {{"seed", r.seed}, {"failed", r.failed}};
    if (r.failed) out["error"] = r.error;
    out["base_accuracy"] = r.base_accuracy;
    out["iterations"] = its;
    out["warnings"] = r.warnings;
    return out;
}

namespace {

void write_tables(const ExperimentSpec& spec, const std::vector<CellResult>& results) {
    const auto axes = grid_axes(spec);
    for (const auto& axis : axes) {
        auto f = open_out(spec.out_dir / ("table_" + axis.name + ".csv"));
        f << (axis.name == "easy_loss" ? "loss,labels" : "setting") << ",mean,std,n,cells\n";
        for (const auto& label : axis.labels) {
            std::vector<double> acc;
            std::size_t cells = 0;
            for (const auto& r : results) {
                bool keep = true;
                for (const auto& [name, value] : r.cell.coords) {
                    if (name == axis.name) {
                        keep = keep && value == label;
                        continue;
                    }
                    // hold other axes at their configured value when the grid contains it
                    const auto other = std::find_if(axes.begin(), axes.end(), [&](const Axis& a) { return a.name == name; });
                    const bool base_in_grid = std::count(other->labels.begin(), other->labels.end(), other->base_label);
                    if (base_in_grid) keep = keep && value == other->base_label;
                }
                if (!keep) continue;
                ++cells;
                for (const auto& rep : r.reports)
                    if (!rep.failed) acc.push_back(rep.final_accuracy());
            }
            const auto s = stats_of(acc);
            f << display(axis.name, label) << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << s.n << ',' << cells
              << '\n';
        }
    }
}

}  // namespace

std::vector<CellResult> run(const ExperimentSpec& spec) {
    const auto cells = expand_grid(spec);
    // file-backed sources are loaded once, before any training
    std::optional<SourceData> shared;
    if (spec.dataset.kind != DatasetKind::Gaussians) shared = load_source(spec.dataset, 0);
    if (shared && shared->train.count_label(+1) < spec.n_p) {
        throw ConfigError("n_p: exceeds the " + std::to_string(shared->train.count_label(+1)) +
                          " positives in the training set");
    }
    fs::create_directories(spec.out_dir);
    {
        auto f = open_out(spec.out_dir / "spec.json");
        f << to_json(spec).dump(2) << '\n';
    }

    std::vector<CellResult> results;
    for (const auto& c : cells) results.push_back({c, std::vector<pipeline::RunReport>(spec.seeds.size())});
    const std::size_t total = cells.size() * spec.seeds.size();
    std::mutex log_mutex;
    std::size_t done = 0;

    parallel_for(total, spec.jobs, [&](std::size_t task) {
        auto& result = results[task / spec.seeds.size()];
        const std::uint64_t seed = spec.seeds[task % spec.seeds.size()];
        const fs::path dir = spec.out_dir / "runs" / slug(result.cell.name) / ("seed" + std::to_string(seed));
        pipeline::RunReport report;
        try {
            fs::create_directories(dir);
            const auto dataset = shared ? make_dataset(spec, *shared, seed) : build_dataset(spec, seed);
            pipeline::RunOptions options;
            if (spec.snapshots) options.snapshot_dir = dir;
            report = pipeline::run_split_pu(dataset, result.cell.config, seed, options);
            {
                auto f = open_out(dir / "report.json");
                f << report_to_json(report).dump(2) << '\n';
            }
            write_curve_csv(dir / "curve.csv", report);
            std::vector<splitter::SplitReportRow> split_rows;
            for (const auto& it : report.iterations)
                split_rows.push_back({result.cell.config.tau, it.stop_epoch, it.n_easy, it.n_hard, {}, {}});
            splitter::write_split_report(dir / "split.csv", split_rows);
        } catch (const std::exception& e) {
            report.seed = seed;
            report.failed = true;
            report.error = e.what();
        }
        result.reports[task % spec.seeds.size()] = report;
        std::lock_guard lock(log_mutex);
        ++done;
        std::cerr << "[" << done << "/" << total << "] " << result.cell.name << " seed " << seed << ": ";
        if (report.failed) {
            std::cerr << "FAILED (" << one_line(report.error) << ")\n";
        } else {
            std::cerr << "base " << fmt(report.base_accuracy) << " final " << fmt(report.final_accuracy()) << " ("
                      << static_cast<long>(report.wall_seconds) << "s)\n";
        }
    });

    write_raw_csv(spec.out_dir / "raw.csv", results);
    write_summary_csv(spec.out_dir / "summary.csv", summarize(results), results);
    {
        auto f = open_out(spec.out_dir / "timing.csv");
        f << "cell,seed,wall_seconds\n";
        for (const auto& r : results)
            for (const auto& rep : r.reports) f << r.cell.name << ',' << rep.seed << ',' << rep.wall_seconds << '\n';
    }
    write_tables(spec, results);
    return results;
}

std::vector<SplitAnalysisRow> analyze_split(const ExperimentSpec& spec) {
    const auto oracle = data::Oracle::grant(spec.analysis);
    std::optional<SourceData> shared;
    if (spec.dataset.kind != DatasetKind::Gaussians) shared = load_source(spec.dataset, 0);
    fs::create_directories(spec.out_dir);

    const auto& cfg = spec.train;
    const std::size_t n_tau = spec.analysis_taus.size();
    std::vector<SplitAnalysisRow> rows(spec.seeds.size() * n_tau);
    parallel_for(spec.seeds.size(), spec.jobs, [&](std::size_t si) {
        const std::uint64_t seed = spec.seeds[si];
        const auto d = shared ? make_dataset(spec, *shared, seed) : build_dataset(spec, seed);
        const Network base = pipeline::train_base(d, cfg, seed);
        const auto pseudo = splitter::pseudo_label(base, d.sample_shape(), d.unlabeled());
        std::vector<splitter::SplitReportRow> report;
        for (std::size_t ti = 0; ti < n_tau; ++ti) {
            splitter::TempConfig tc;
            tc.tau = spec.analysis_taus[ti];
            tc.lr = cfg.temp_lr;
            tc.momentum = cfg.temp_momentum;
            tc.max_epochs = cfg.temp_max_epochs;
            tc.batch_size = cfg.batch_size;
            tc.augment = cfg.augment_temp;
            tc.augment_params = cfg.augment;
            tc.seed = derive_seed(seed, SeedStream::Temp, 1);
            auto temp = splitter::train_temporary_fresh(base, pseudo, d.sample_shape(), d.unlabeled(), tc);
            const auto split = splitter::early_stop_split(temp.temp, pseudo, d.sample_shape(), d.unlabeled(),
                                                          temp.stop_epoch, temp.reached_tau);
            splitter::check_partition(split, d.num_unlabeled());
            auto& row = rows[si * n_tau + ti];
            row.seed = seed;
            row.stop_accuracy = split.stop_accuracy;
            row.reached_tau = split.reached_tau;
            row.quality = splitter::split_quality_report(split, pseudo, d, oracle, tc.tau);
            if (spec.analysis_accuracy) {
                auto cell_cfg = cfg;
                cell_cfg.tau = tc.tau;
                const auto student = pipeline::train_student(base, split, pseudo, d, cell_cfg, seed, 1);
                row.test_accuracy = pipeline::evaluate(student.student, d.test());
            }
            const auto& q = row.quality;
            report.push_back({q.tau, q.stop_epoch, q.n_easy, q.n_hard, q.noisy_easy, q.noisy_hard});
        }
        splitter::write_split_report(spec.out_dir / ("split_seed" + std::to_string(seed) + ".csv"), report);
    });

    {
        auto f = open_out(spec.out_dir / "split_quality_seeds.csv");
        f << "seed,tau,stop_epoch,n_easy,n_hard,noisy_easy,noisy_hard,noise_rate_easy,noise_rate_hard,noise_rate_all,"
             "test_accuracy\n";
        for (const auto& r : rows) {
            const auto& q = r.quality;
            f << r.seed << ',' << fmt(q.tau) << ',' << q.stop_epoch << ',' << q.n_easy << ',' << q.n_hard << ','
              << q.noisy_easy << ',' << q.noisy_hard << ',' << fmt(q.noise_rate_easy()) << ','
              << fmt(q.noise_rate_hard()) << ',' << fmt(q.noise_rate_all()) << ',';
            if (r.test_accuracy) f << fmt(*r.test_accuracy);
            f << '\n';
        }
    }
    {
        auto f = open_out(spec.out_dir / "split_quality.csv");
        f << "tau,seeds,stop_epoch,n_easy,n_hard,noisy_easy,noisy_hard,noise_rate_easy,noise_rate_hard,noise_rate_all,"
             "test_accuracy,test_accuracy_std\n";
        for (std::size_t ti = 0; ti < n_tau; ++ti) {
            std::vector<double> stop, ne, nh, qe, qh, re, rh, ra, acc;
            for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
                const auto& r = rows[si * n_tau + ti];
                const auto& q = r.quality;
                stop.push_back(static_cast<double>(q.stop_epoch));
                ne.push_back(static_cast<double>(q.n_easy));
                nh.push_back(static_cast<double>(q.n_hard));
                qe.push_back(static_cast<double>(q.noisy_easy));
                qh.push_back(static_cast<double>(q.noisy_hard));
                re.push_back(q.noise_rate_easy());
                rh.push_back(q.noise_rate_hard());
                ra.push_back(q.noise_rate_all());
                if (r.test_accuracy) acc.push_back(*r.test_accuracy);
            }
            const auto a = stats_of(acc);
            f << fmt(spec.analysis_taus[ti]) << ',' << spec.seeds.size() << ',' << fmt(stats_of(stop).mean) << ','
              << fmt(stats_of(ne).mean) << ',' << fmt(stats_of(nh).mean) << ',' << fmt(stats_of(qe).mean) << ','
              << fmt(stats_of(qh).mean) << ',' << fmt(stats_of(re).mean) << ',' << fmt(stats_of(rh).mean) << ','
              << fmt(stats_of(ra).mean) << ',';
            if (a.n) f << fmt(a.mean) << ',' << fmt(a.stddev);
            else f << ',';
            f << '\n';
        }
    }
    return rows;
}

}  // namespace splitpu::harness
