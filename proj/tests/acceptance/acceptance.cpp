// End-to-end acceptance checks. Prints one [PASS]/[FAIL] line per criterion.
//
// Usage: acceptance [--out DIR] [--jobs N] [--strict] [--only 1,2,...]
//
// The exit status is nonzero when a check could not be carried out (an
// exception escaped). Criteria that ran and missed their bar are reported as
// FAIL lines; --strict turns those into a nonzero exit as well.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "splitpu/gradcheck.hpp"
#include "splitpu/harness.hpp"
#include "splitpu/losses.hpp"
#include "splitpu/risk.hpp"

namespace fs = std::filesystem;
using namespace splitpu;
using harness::ExperimentSpec;
using json = nlohmann::json;

#ifndef SPLITPU_SOURCE_DIR
#define SPLITPU_SOURCE_DIR "."
#endif

namespace {

struct Outcome {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;
};

std::string pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << 100.0 * v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

std::vector<double> prob_rows(std::mt19937_64& rng, std::size_t rows) {
    std::uniform_real_distribution<double> d(1e-3, 1.0 - 1e-3);
    std::vector<double> v;
    for (std::size_t r = 0; r < rows; ++r) {
        const double p = d(rng);
        v.insert(v.end(), {p, 1.0 - p});
    }
    return v;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - n[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
    }
    return diff / scale;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentSpec load_config(const std::string& name, const fs::path& out_root, std::size_t jobs) {
    auto spec = harness::validate_config(fs::path(SPLITPU_SOURCE_DIR) / "configs" / (name + ".json"));
    spec.out_dir = out_root / name;
    spec.jobs = jobs;
    return spec;
}

struct Benchmark {
    std::string name;
    std::vector<pipeline::RunReport> reports;

    std::vector<double> accuracies(std::size_t iteration) const {
        std::vector<double> out;
        for (const auto& r : reports)
            if (!r.failed) out.push_back(r.accuracy_at(iteration));
        return out;
    }
    double mean(std::size_t iteration) const {
        const auto a = accuracies(iteration);
        double s = 0.0;
        for (double v : a) s += v;
        return a.empty() ? std::nan("") : s / static_cast<double>(a.size());
    }
    std::size_t failed() const {
        return static_cast<std::size_t>(std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.failed; }));
    }
};

Benchmark run_benchmark(const std::string& config, const fs::path& out_root, std::size_t jobs) {
    auto spec = load_config(config, out_root, jobs);
    spec.snapshots = false;
    std::cerr << "running " << config << " (" << spec.seeds.size() << " seeds)\n";
    const auto results = harness::run(spec);
    return Benchmark{config, results.front().reports};
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    Outcome o{1, "gradient integrity of every loss"};
    constexpr int kInstances = 50;
    std::map<std::string, double> worst;
    std::mt19937_64 rng(101);
    const auto track = [&worst](const std::string& name, double err) { worst[name] = std::max(worst[name], err); };

    const Network student(Architecture::mlp(2), 11), teacher(Architecture::mlp(2), 12);
    const PredictorHead head(64, 13);
    const losses::ConsistencyWeights weights;

    for (int k = 0; k < kInstances; ++k) {
        const auto zp = uniform(rng, 6, -3, 3), zu = uniform(rng, 10, -3, 3);
        const auto tp = Tensor::constant({6, 1}, zp), tu = Tensor::constant({10, 1}, zu);
        track("sigmoid surrogate",
              ad::check_gradient([](const Tensor& x) { return ad::mean(risk::base_loss(x, +1)); }, {10, 1}, zu)
                  .relative_error);
        for (auto est : {risk::Estimator::UPU, risk::Estimator::NnPU}) {
            const std::string name = est == risk::Estimator::UPU ? "uPU" : "nnPU";
            track(name, ad::check_gradient([&](const Tensor& x) { return risk::pu_risk(est, x, tu, 0.4); }, {6, 1}, zp)
                            .relative_error);
            track(name, ad::check_gradient([&](const Tensor& x) { return risk::pu_risk(est, tp, x, 0.4); }, {10, 1}, zu)
                            .relative_error);
        }

        const auto p = prob_rows(rng, 4);
        const auto y = Tensor::constant({4, 2}, prob_rows(rng, 4));
        track("soft-CE",
              ad::check_gradient([&](const Tensor& x) { return losses::soft_cross_entropy(x, y); }, {4, 2}, p)
                  .relative_error);
        track("DJS", ad::check_gradient([&](const Tensor& x) { return losses::djs_loss(x, y, 0.7); }, {4, 2}, p)
                         .relative_error);

        const auto tf = Tensor::constant({3, 8}, uniform(rng, 24, -3, 3));
        track("cross-consistency",
              ad::check_gradient([&](const Tensor& x) { return losses::cross_consistency(x, tf); }, {3, 8},
                                 uniform(rng, 24, -3, 3))
                  .relative_error);

        const auto wp = Tensor::constant({4, 2}, prob_rows(rng, 4));
        track("prediction consistency",
              ad::check_gradient([&](const Tensor& x) { return losses::pred_consistency(wp, x); }, {4, 2}, p)
                  .relative_error);

        // feature consistency with detached targets: the oracle freezes them
        const PredictorHead small_head(16, 14 + k);
        const auto sf = Tensor::constant({3, 16}, uniform(rng, 48, -3, 3));
        const auto w0 = uniform(rng, 48, -3, 3);
        const auto w0t = Tensor::constant({3, 16}, w0);
        const ad::GraphFn feat_oracle = [&](const Tensor& x) {
            const auto d1 = ad::neg(ad::cosine_similarity(w0t, small_head(sf), 1e-12));
            const auto d2 = ad::neg(ad::cosine_similarity(sf, small_head(x), 1e-12));
            return ad::mean(ad::scale(ad::add(d1, d2), 0.5));
        };
        track("feature consistency",
              rel_error(ad::analytic_grad([&](const Tensor& x) { return losses::feat_consistency(x, sf, small_head, true, 1e-12); },
                                          {3, 16}, w0),
                        ad::finite_diff_grad(feat_oracle, {3, 16}, w0, 1e-6)));

        // combined hard loss with default options, differentiated through
        // the strong view; detached quantities are frozen in the oracle
        const auto wv = Tensor::constant({4, 2}, uniform(rng, 8, -3, 3));
        const auto s0 = uniform(rng, 8, -3, 3);
        const auto s0t = Tensor::constant({4, 2}, s0);
        const auto weak_taps = student.forward_with_taps(wv);
        const auto s0_last = student.forward_with_taps(s0t).last;
        const auto frozen_strong_last =
            Tensor::constant(s0_last.shape(), std::vector<double>(s0_last.data().begin(), s0_last.data().end()));
        const double cross_const = [&] {
            Tensor tfirst;
            {
                ad::NoGradGuard g;
                tfirst = teacher.forward_with_taps(wv).first;
            }
            return losses::cross_consistency(weak_taps.first, tfirst).item();
        }();
        const auto weak_prob = predict_prob(weak_taps.logit);
        const auto weak_last = weak_taps.last;
        const ad::GraphFn combined_oracle = [&](const Tensor& x) {
            const auto st = student.forward_with_taps(x);
            const auto pred = ad::mean(ad::kl_divergence(ad::stop_gradient(weak_prob), predict_prob(st.logit)));
            const auto d1 = ad::neg(ad::cosine_similarity(ad::stop_gradient(weak_last), head(st.last), 1e-12));
            const auto d2 = ad::neg(ad::cosine_similarity(frozen_strong_last, head(ad::stop_gradient(weak_last)), 1e-12));
            const auto feat = ad::mean(ad::scale(ad::add(d1, d2), 0.5));
            return ad::add_scalar(ad::add(ad::scale(pred, weights.alpha), ad::scale(feat, weights.beta)), cross_const);
        };
        losses::HardLossOptions opts;
        opts.eps = 1e-12;
        const ad::GraphFn combined = [&](const Tensor& x) {
            return losses::hard_loss(wv, x, student, teacher, head, weights, opts).total;
        };
        track("combined hard loss", rel_error(ad::analytic_grad(combined, {4, 2}, s0),
                                              ad::finite_diff_grad(combined_oracle, {4, 2}, s0, 1e-6)));
    }

    o.pass = true;
    std::ostringstream d;
    d << kInstances << " instances each; worst relative error:";
    for (const auto& [name, err] : worst) {
        d << ' ' << name << ' ' << sci(err) << ';';
        o.pass = o.pass && err <= 1e-4;
    }
    o.detail = d.str();
    return o;
}

Outcome criterion2() {
    Outcome o{2, "risk-estimator properties"};
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> prior_d(0.05, 0.95), shift_d(-6.0, 3.0);
    int violations = 0, engaged = 0, equal_cases = 0;
    for (int k = 0; k < 100; ++k) {
        const double prior = prior_d(rng), shift = shift_d(rng);
        const auto zp = uniform(rng, 8, -3, 3);
        auto zu = uniform(rng, 16, -3, 3);
        for (auto& z : zu) z += shift;
        const auto c = risk::risk_components(zp, zu, prior);
        const auto tp = Tensor::constant({8, 1}, zp), tu = Tensor::constant({16, 1}, zu);
        const double nn = risk::nnpu_loss(tp, tu, prior).item();
        const double u = risk::upu_loss(tp, tu, prior).item();
        if (c.correction() >= 0.0) {
            ++equal_cases;
            violations += nn != u;
        }
        violations += nn < prior * c.pos_risk;
        const bool should_clamp = c.unl_neg_risk < prior * c.pos_neg_risk;
        violations += c.clamp_engaged() != should_clamp;
        violations += should_clamp ? (nn != prior * c.pos_risk) : (nn != u);
        engaged += should_clamp;
    }
    o.pass = violations == 0 && engaged > 0 && equal_cases > 0;
    o.detail = "100 micro-batches, clamp engaged in " + std::to_string(engaged) + ", inactive in " +
               std::to_string(equal_cases) + ", violations " + std::to_string(violations);
    return o;
}

long double djs_oracle(std::array<long double, 2> p, std::array<long double, 2> y, long double rho) {
    long double js = 0.0L;
    for (int c = 0; c < 2; ++c) {
        const long double m = rho * p[c] + (1.0L - rho) * y[c];
        if (p[c] > 0.0L) js += rho * p[c] * std::log(p[c] / m);
        if (y[c] > 0.0L) js += (1.0L - rho) * y[c] * std::log(y[c] / m);
    }
    return js / (-(1.0L - rho) * std::log(1.0L - rho));
}

Outcome criterion3() {
    Outcome o{3, "DJS oracle values"};
    struct Case {
        std::array<double, 2> p, y;
    };
    const std::vector<Case> cases{{{0.3, 0.7}, {0.3, 0.7}}, {{1, 0}, {0, 1}}, {{0.8, 0.2}, {1, 0}}};
    std::ostringstream d;
    d << std::setprecision(10);
    o.pass = true;
    for (const auto& c : cases) {
        const double got =
            losses::djs_loss(Tensor::constant({2}, {c.p[0], c.p[1]}), Tensor::constant({2}, {c.y[0], c.y[1]}), 0.7)
                .item();
        const double want = static_cast<double>(djs_oracle({c.p[0], c.p[1]}, {c.y[0], c.y[1]}, 0.7L));
        o.pass = o.pass && std::abs(got - want) <= 1e-10;
        d << "(" << c.p[0] << "," << c.p[1] << ")|(" << c.y[0] << "," << c.y[1] << ") = " << got << " vs oracle "
          << want << "; ";
    }
    o.detail = d.str();
    return o;
}

Outcome criterion4(const std::vector<const Benchmark*>& benches, const std::vector<harness::SplitAnalysisRow>& analysis,
                   double tau_default) {
    Outcome o{4, "split invariants on every run"};
    std::size_t checked = 0, violations = 0, failed_runs = 0;
    const auto check = [&](std::size_t n_easy, std::size_t n_hard, double stop_acc, bool reached, double tau,
                           std::size_t n_u) {
        ++checked;
        bool ok = n_easy + n_hard == n_u;
        ok = ok && n_hard == static_cast<std::size_t>(std::llround((1.0 - stop_acc) * static_cast<double>(n_u)));
        if (reached) ok = ok && static_cast<double>(n_hard) <= (1.0 - tau) * static_cast<double>(n_u) + 1e-9;
        violations += !ok;
    };
    for (const auto* b : benches) {
        for (const auto& r : b->reports) {
            if (r.failed) {
                ++failed_runs;  // includes a failed disjointness check inside the run
                continue;
            }
            for (const auto& it : r.iterations)
                check(it.n_easy, it.n_hard, it.stop_accuracy, it.reached_tau, tau_default, it.n_easy + it.n_hard);
        }
    }
    // unlabeled-set size is fixed per benchmark; the analysis rows cover the tau sweep
    for (const auto& row : analysis)
        check(row.quality.n_easy, row.quality.n_hard, row.stop_accuracy, row.reached_tau, row.quality.tau,
              row.quality.n_easy + row.quality.n_hard);
    o.pass = checked > 0 && violations == 0 && failed_runs == 0;
    o.detail = std::to_string(checked) + " splits checked (disjointness verified inside every run), " +
               std::to_string(violations) + " violations, " + std::to_string(failed_runs) + " failed runs";
    return o;
}

Outcome criterion5(const std::vector<harness::SplitAnalysisRow>& rows) {
    Outcome o{5, "split quality on synthetic Gaussians"};
    std::map<double, std::vector<const harness::SplitAnalysisRow*>> by_tau;
    for (const auto& r : rows) by_tau[r.quality.tau].push_back(&r);
    std::ostringstream d;
    o.pass = by_tau.size() == 3;
    for (const auto& [tau, list] : by_tau) {
        double hard = 0, easy = 0, all = 0;
        for (const auto* r : list) {
            hard += r->quality.noise_rate_hard();
            easy += r->quality.noise_rate_easy();
            all += r->quality.noise_rate_all();
        }
        const double n = static_cast<double>(list.size());
        hard /= n;
        easy /= n;
        all /= n;
        const bool ok = list.size() == 5 && hard >= 1.2 * all && easy <= all;
        o.pass = o.pass && ok;
        d << "tau " << tau << ": hard " << pct(hard) << "% easy " << pct(easy) << "% all " << pct(all) << "% (ratio "
          << std::setprecision(3) << (all > 0 ? hard / all : 0.0) << "); ";
    }
    o.detail = d.str();
    return o;
}

std::string delta_text(const Benchmark& b, std::size_t it) {
    return b.name + " base " + pct(b.mean(0)) + " iter" + std::to_string(it) + " " + pct(b.mean(it)) + " delta " +
           pct(b.mean(it) - b.mean(0)) + " pts";
}

Outcome criterion6(const Benchmark& synthetic, const Benchmark& digits) {
    Outcome o{6, "end-to-end improvement over the nnPU baseline"};
    const double ds = synthetic.mean(2) - synthetic.mean(0);
    const double dd = digits.mean(2) - digits.mean(0);
    const bool complete = synthetic.failed() == 0 && digits.failed() == 0;
    o.pass = complete && ds >= 0.0 && dd >= 0.0 && std::max(ds, dd) >= 0.003;
    o.detail = delta_text(synthetic, 2) + "; " + delta_text(digits, 2) + " (5-seed means, target +0.30 on one)";
    return o;
}

Outcome criterion7(const Benchmark& upu) {
    Outcome o{7, "uPU compatibility"};
    o.pass = upu.failed() == 0 && upu.mean(2) >= upu.mean(0);
    o.detail = delta_text(upu, 2);
    return o;
}

Outcome criterion8(const Benchmark& synthetic, const Benchmark& digits) {
    Outcome o{8, "iteration behavior"};
    std::ostringstream d;
    o.pass = true;
    for (const auto* b : {&synthetic, &digits}) {
        const double i1 = b->mean(1), i2 = b->mean(2);
        o.pass = o.pass && b->failed() == 0 && i2 >= i1 - 0.005;
        d << b->name << " iter0 " << pct(b->mean(0)) << " iter1 " << pct(i1) << " iter2 " << pct(i2) << "; ";
    }
    o.detail = d.str();
    return o;
}

std::size_t data_rows(const fs::path& csv) {
    std::ifstream in(csv);
    std::string line;
    std::size_t n = 0;
    std::getline(in, line);
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') ++n;
    return n;
}

std::vector<std::string> row_labels(const fs::path& csv) {
    std::ifstream in(csv);
    std::string line;
    std::vector<std::string> out;
    std::getline(in, line);
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') {
            // label columns precede the trailing mean,std,n,cells fields
            auto cut = line.size();
            for (int k = 0; k < 4 && cut != std::string::npos; ++k) cut = line.rfind(',', cut - 1);
            out.push_back(cut == std::string::npos ? std::string() : line.substr(0, cut));
        }
    return out;
}

json tiny_experiment(const fs::path& out) {
    json j = json::parse(R"({
        "name": "tiny",
        "dataset": {"kind": "gaussians", "n_pos": 160, "n_neg": 240, "test_pos": 200, "test_neg": 300},
        "n_p": 20,
        "train": {"base_epochs": 3, "base_lr": 0.001, "student_epochs": 2, "student_lr": 0.0005,
                  "temp_max_epochs": 20, "augment": {"dropout_p": 0}}
    })");
    j["out"] = out.string();
    return j;
}

Outcome criterion9(const fs::path& out_root, std::size_t jobs) {
    Outcome o{9, "ablation grid structure"};
    const fs::path out = out_root / "ablation";
    fs::remove_all(out);
    json cfg = tiny_experiment(out);
    cfg["seeds"] = {0};
    cfg["train"]["iterations"] = 1;
    cfg["sweep"] = json::parse(R"({"early_stop": [true, false],
        "easy_loss": ["soft-ce", "hard-ce", "soft-djs", "hard-djs"],
        "hard_loss": ["none", "nnpu", "self", "cross", "dual"],
        "consistency_scope": ["all", "hard"]})");
    auto spec = harness::parse_spec(cfg);
    spec.jobs = jobs;
    spec.snapshots = false;
    const auto results = harness::run(spec);

    std::size_t failed = 0;
    for (const auto& r : results)
        for (const auto& rep : r.reports) failed += rep.failed;
    const std::map<std::string, std::size_t> tables{
        {"table_early_stop.csv", 2}, {"table_easy_loss.csv", 4}, {"table_hard_loss.csv", 5}, {"table_consistency_scope.csv", 2}};
    bool tables_ok = true;
    std::ostringstream d;
    for (const auto& [file, rows] : tables) {
        const auto got = fs::exists(out / file) ? data_rows(out / file) : 0;
        const auto labels = row_labels(out / file);
        tables_ok = tables_ok && got == rows && std::set<std::string>(labels.begin(), labels.end()).size() == rows &&
                    std::none_of(labels.begin(), labels.end(), [](const auto& l) { return l.empty(); });
        d << file << ' ' << got << '/' << rows << " rows; ";
    }
    const std::size_t summary = data_rows(out / "summary.csv");
    o.pass = results.size() == 80 && failed == 0 && tables_ok && summary == 80 * 2;
    o.detail = std::to_string(results.size()) + " cells, " + std::to_string(failed) + " failed runs, summary " +
               std::to_string(summary) + " rows; " + d.str();
    return o;
}

Outcome criterion10(const fs::path& out_root) {
    Outcome o{10, "determinism"};
    const fs::path a = out_root / "determinism_a", b = out_root / "determinism_b";
    fs::remove_all(a);
    fs::remove_all(b);
    json cfg = tiny_experiment(a);
    cfg["seeds"] = {0, 1};
    cfg["sweep"] = json::parse(R"({"tau": [0.8, 0.92]})");
    auto spec = harness::parse_spec(cfg);
    spec.snapshots = true;
    spec.jobs = 2;
    harness::run(spec);
    spec.out_dir = b;
    spec.jobs = 1;
    harness::run(spec);

    const bool raw_same = slurp(a / "raw.csv") == slurp(b / "raw.csv") && !slurp(a / "raw.csv").empty();
    std::size_t snapshots = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(a / "runs")) {
        if (e.path().extension() != ".bin") continue;
        ++snapshots;
        differing += slurp(e.path()) != slurp(b / fs::relative(e.path(), a));
    }
    o.pass = raw_same && snapshots > 0 && differing == 0;
    o.detail = std::string("raw.csv ") + (raw_same ? "byte-identical" : "differs") + ", " + std::to_string(snapshots) +
               " snapshots compared, " + std::to_string(differing) + " differ";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    fs::path out_root = "acceptance_out";
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    bool strict = false;
    std::vector<int> only;
    app.add_option("--out", out_root, "scratch output directory");
    app.add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
    app.add_flag("--strict", strict, "exit nonzero when any criterion fails");
    app.add_option("--only", only, "run a subset of criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    const auto wanted = [&only](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Outcome> outcomes;
    bool errors = false;
    const auto attempt = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
        if (!wanted(id)) return;
        try {
            outcomes.push_back(fn());
        } catch (const std::exception& e) {
            errors = true;
            outcomes.push_back({id, title, false, std::string("error: ") + e.what()});
        }
        const auto& o = outcomes.back();
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << o.id << ": " << o.title << ": " << o.detail
                  << std::endl;
    };

    fs::create_directories(out_root);
    attempt(1, "gradient integrity of every loss", criterion1);
    attempt(2, "risk-estimator properties", criterion2);
    attempt(3, "DJS oracle values", criterion3);

    // The long runs are shared between criteria 4 through 8.
    std::optional<Benchmark> synthetic, digits, upu;
    std::vector<harness::SplitAnalysisRow> analysis;
    double tau_default = 0.92;
    const bool need_runs = wanted(4) || wanted(5) || wanted(6) || wanted(7) || wanted(8);
    try {
        if (need_runs) {
            auto spec = load_config("synthetic", out_root, jobs);
            tau_default = spec.train.tau;
            if (wanted(4) || wanted(5)) {
                spec.out_dir = out_root / "synthetic_analysis";
                spec.analysis = true;
                spec.analysis_accuracy = false;
                spec.analysis_taus = {0.7, 0.8, 0.9};
                std::cerr << "running split analysis\n";
                analysis = harness::analyze_split(spec);
            }
            if (wanted(4) || wanted(6) || wanted(8)) {
                synthetic = run_benchmark("synthetic", out_root, jobs);
                digits = run_benchmark("digits", out_root, jobs);
            }
            if (wanted(4) || wanted(7)) upu = run_benchmark("synthetic_upu", out_root, jobs);
        }
    } catch (const std::exception& e) {
        errors = true;
        std::cout << "[FAIL] benchmark runs aborted: " << e.what() << std::endl;
    }

    attempt(4, "split invariants on every run", [&] {
        std::vector<const Benchmark*> benches;
        for (const auto* b : {&synthetic, &digits, &upu})
            if (*b) benches.push_back(&**b);
        return criterion4(benches, analysis, tau_default);
    });
    attempt(5, "split quality on synthetic Gaussians", [&] { return criterion5(analysis); });
    attempt(6, "end-to-end improvement over the nnPU baseline", [&] {
        if (!synthetic || !digits) throw std::runtime_error("benchmark runs missing");
        return criterion6(*synthetic, *digits);
    });
    attempt(7, "uPU compatibility", [&] {
        if (!upu) throw std::runtime_error("uPU runs missing");
        return criterion7(*upu);
    });
    attempt(8, "iteration behavior", [&] {
        if (!synthetic || !digits) throw std::runtime_error("benchmark runs missing");
        return criterion8(*synthetic, *digits);
    });
    attempt(9, "ablation grid structure", [&] { return criterion9(out_root, jobs); });
    attempt(10, "determinism", [&] { return criterion10(out_root); });

    const auto passed = std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.pass; });
    std::ostringstream tally;
    tally << passed << "/" << outcomes.size() << " criteria passed in "
          << std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0).count() << " s";
    std::cout << tally.str() << std::endl;
    // ctest hides the output of passing tests, so keep a copy next to the run outputs
    std::ofstream summary(out_root / "acceptance.txt");
    for (const auto& o : outcomes)
        summary << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << o.id << ": " << o.title << ": " << o.detail << '\n';
    summary << tally.str() << '\n';
    if (errors) return 2;
    return strict && passed != static_cast<long>(outcomes.size()) ? 1 : 0;
}
