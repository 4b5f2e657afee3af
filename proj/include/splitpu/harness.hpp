#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "splitpu/pipeline.hpp"

namespace splitpu::harness {

using json = nlohmann::json;

/// A config problem; the message starts with the offending key path.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

enum class DatasetKind { Gaussians, Idx, Cifar10 };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Gaussians;

    // gaussians: train = n_pos + n_neg samples, test drawn from the same law
    std::size_t dim = 2;
    double separation = 3.0;
    std::size_t n_pos = 2050;
    std::size_t n_neg = 3000;
    std::size_t test_pos = 4000;
    std::size_t test_neg = 6000;

    // idx
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    int positive_below = 5;
    // cifar10
    std::vector<std::filesystem::path> train_batches;
    std::filesystem::path test_batch;

    /// Overrides the prior computed from class counts.
    std::optional<double> prior;
};

/// Optional lists; every non-empty axis multiplies the grid.
struct SweepAxes {
    std::vector<risk::Estimator> risk;
    std::vector<bool> early_stop;
    std::vector<pipeline::EasyLoss> easy_loss;
    std::vector<pipeline::HardLoss> hard_loss;
    std::vector<pipeline::ConsistencyScope> consistency_scope;
    std::vector<std::size_t> iterations;
    std::vector<double> tau, rho, alpha, beta;

    bool empty() const;
    /// Names of the non-empty axes in grid order.
    std::vector<std::string> active() const;
};

struct ExperimentSpec {
    std::string name = "experiment";
    DatasetSpec dataset;
    std::size_t n_p = 50;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    pipeline::TrainPhaseConfig train;
    SweepAxes sweep;
    std::vector<double> analysis_taus{0.7, 0.8, 0.9, 0.92, 0.95};
    bool analysis_accuracy = true;  // also train a student per tau in analyze-split
    std::filesystem::path out_dir = "runs";
    bool analysis = false;
    std::size_t jobs = 1;
    bool snapshots = true;
};

/// Parses and validates a config object. Missing keys take defaults, unknown
/// keys are errors. Relative dataset paths resolve against `base_dir`.
ExperimentSpec parse_spec(const json& config, const std::filesystem::path& base_dir = {});
/// Reads a JSON file and parses it; SPLITPU_OUT / SPLITPU_JOBS override
/// the output directory and worker count.
ExperimentSpec validate_config(const std::filesystem::path& path);
/// Normalized form: every field spelled out.
json to_json(const ExperimentSpec& spec);

struct Cell {
    std::string name;  // "base" or "axis=value,axis=value"
    std::vector<std::pair<std::string, std::string>> coords;
    pipeline::TrainPhaseConfig config;
};

/// Cartesian product of the sweep axes, in a fixed axis order.
std::vector<Cell> expand_grid(const ExperimentSpec& spec);

/// Full labeled training set (before the PU split) and test set.
struct SourceData {
    data::LabeledSet train;
    data::LabeledSet test;
};
SourceData load_source(const DatasetSpec& spec, std::uint64_t seed);
/// PU dataset for one seed: the labeled positives depend on the seed.
data::PUDataset build_dataset(const ExperimentSpec& spec, std::uint64_t seed);

struct CellResult {
    Cell cell;
    std::vector<pipeline::RunReport> reports;  // one per seed, in seed order
};

struct SummaryRow {
    std::string cell;  // "<cell>/iter<k>"
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 when n < 2
    std::size_t n = 0;
};

/// Mean/std per (cell, iteration) over completed seeds.
std::vector<SummaryRow> summarize(const std::vector<CellResult>& results);

/// Runs every (cell, seed) on a bounded worker pool and writes raw.csv,
/// summary.csv, timing.csv, spec.json, per-axis tables and per-run reports
/// under spec.out_dir.
std::vector<CellResult> run(const ExperimentSpec& spec);

struct SplitAnalysisRow {
    std::uint64_t seed = 0;
    splitter::SplitQuality quality;
    double stop_accuracy = 1.0;
    bool reached_tau = true;
    std::optional<double> test_accuracy;
};

/// Oracle split-quality study over spec.analysis_taus. Throws
/// data::LabelLeakError unless spec.analysis is set.
std::vector<SplitAnalysisRow> analyze_split(const ExperimentSpec& spec);

// exposed for tests
void write_raw_csv(const std::filesystem::path& path, const std::vector<CellResult>& results);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows,
                       const std::vector<CellResult>& results);
json report_to_json(const pipeline::RunReport& report);
/// Parses raw.csv rows back into (cell, seed, iteration, accuracy).
struct RawRow {
    std::string cell;
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
    double accuracy = 0.0;
};
std::vector<RawRow> read_raw_csv(const std::filesystem::path& path);
/// The same statistics summarize() computes, from raw rows.
std::vector<SummaryRow> summarize_raw(const std::vector<RawRow>& rows);

}  // namespace splitpu::harness
