// splitpu: train, sweep and analyze split-PU experiments from a JSON config.

#include <iostream>

#include <CLI11.hpp>

#include "splitpu/harness.hpp"

namespace {

using splitpu::harness::ExperimentSpec;

struct Flags {
    std::string config;
    std::string out;
    std::size_t jobs = 0;
    bool analysis = false;
};

ExperimentSpec load(const Flags& f) {
    ExperimentSpec spec = splitpu::harness::validate_config(f.config);
    if (!f.out.empty()) spec.out_dir = f.out;
    if (f.jobs > 0) spec.jobs = f.jobs;
    if (f.analysis) spec.analysis = true;
    return spec;
}

void print_summary(const std::vector<splitpu::harness::CellResult>& results) {
    for (const auto& row : splitpu::harness::summarize(results)) {
        std::cout << row.cell << "  mean " << row.mean << "  std " << row.stddev << "  n " << row.n << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"split-PU positive-unlabeled learning experiments"};
    app.require_subcommand(1);
    Flags flags;

    const auto add_common = [&flags](CLI::App* sub, bool with_run_flags) {
        sub->add_option("--config", flags.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
        if (with_run_flags) {
            sub->add_option("--out", flags.out, "output directory (overrides config and SPLITPU_OUT)");
            sub->add_option("--jobs", flags.jobs, "parallel runs (overrides config and SPLITPU_JOBS)")
                ->check(CLI::PositiveNumber);
            sub->add_flag("--analysis", flags.analysis, "unlock oracle labels (analysis only)");
        }
    };
    auto* train = app.add_subcommand("train", "run one configuration over all seeds");
    auto* sweep = app.add_subcommand("sweep", "run the configured ablation grid");
    auto* analyze = app.add_subcommand("analyze-split", "oracle split-quality study over tau (needs --analysis)");
    auto* validate = app.add_subcommand("validate", "check a config and print its normalized form");
    add_common(train, true);
    add_common(sweep, true);
    add_common(analyze, true);
    add_common(validate, false);

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentSpec spec = load(flags);
        if (validate->parsed()) {
            std::cout << splitpu::harness::to_json(spec).dump(2) << '\n';
        } else if (train->parsed()) {
            if (!spec.sweep.empty()) {
                std::cerr << "error: config defines sweep axes; use the sweep subcommand\n";
                return 2;
            }
            print_summary(splitpu::harness::run(spec));
        } else if (sweep->parsed()) {
            print_summary(splitpu::harness::run(spec));
        } else if (analyze->parsed()) {
            for (const auto& row : splitpu::harness::analyze_split(spec)) {
                const auto& q = row.quality;
                std::cout << "seed " << row.seed << " tau " << q.tau << ": hard " << q.n_hard << " easy " << q.n_easy
                          << "  noise rate hard " << q.noise_rate_hard() << " easy " << q.noise_rate_easy() << " all "
                          << q.noise_rate_all();
                if (row.test_accuracy) std::cout << "  accuracy " << *row.test_accuracy;
                std::cout << '\n';
            }
            std::cout << "wrote " << (spec.out_dir / "split_quality.csv").string() << '\n';
        }
    } catch (const splitpu::harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const splitpu::data::LabelLeakError& e) {
        std::cerr << "refused: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
