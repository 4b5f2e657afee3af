#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitpu/data.hpp"
#include "splitpu/losses.hpp"
#include "splitpu/models.hpp"
#include "splitpu/risk.hpp"
#include "splitpu/splitter.hpp"

namespace splitpu::pipeline {

enum class EasyLoss { SoftDJS, HardDJS, SoftCE, HardCE };
enum class HardLoss { None, NnPU, Self, Cross, Dual };
enum class ConsistencyScope { Hard, All };

std::string to_string(EasyLoss v);
std::string to_string(HardLoss v);
std::string to_string(ConsistencyScope v);
std::string to_string(risk::Estimator v);
std::string to_string(losses::KlDirection v);
EasyLoss parse_easy_loss(const std::string& s);
HardLoss parse_hard_loss(const std::string& s);
ConsistencyScope parse_scope(const std::string& s);
risk::Estimator parse_estimator(const std::string& s);
losses::KlDirection parse_kl_direction(const std::string& s);

struct TrainPhaseConfig {
    // base model
    risk::Estimator estimator = risk::Estimator::NnPU;
    risk::PositiveNegNorm positive_norm = risk::PositiveNegNorm::ByPositives;
    std::size_t base_epochs = 50;
    double base_lr = 1e-4;
    bool augment_base = true;

    // splitting
    bool early_stop = true;
    double tau = 0.92;
    std::size_t temp_max_epochs = 200;
    double temp_lr = 1e-3;
    double temp_momentum = 0.9;
    bool augment_temp = false;

    // student
    std::size_t student_epochs = 100;
    double student_lr = 5e-5;
    EasyLoss easy_loss = EasyLoss::SoftDJS;
    HardLoss hard_loss = HardLoss::Dual;
    ConsistencyScope consistency_scope = ConsistencyScope::Hard;
    losses::ConsistencyWeights weights;
    losses::KlDirection kl_direction = losses::KlDirection::WeakTarget;
    bool feat_stop_gradient = true;
    bool include_positives = true;
    bool augment_student = true;

    std::size_t iterations = 2;
    std::size_t batch_size = 64;
    std::size_t mlp_hidden = 64;
    data::AugmentParams augment;

    void validate() const;
};

class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    std::size_t iteration = 0;  // 0 = base phase
    std::string phase;          // base | temp | student
    std::size_t epoch = 0;
    double loss = 0.0;
    std::optional<double> metric;  // agreement for temp
};

struct IterationReport {
    std::size_t iteration = 0;
    double test_accuracy = 0.0;
    std::size_t n_easy = 0;
    std::size_t n_hard = 0;
    std::size_t stop_epoch = 0;
    double stop_accuracy = 1.0;
    bool reached_tau = true;
};

struct RunReport {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double base_accuracy = 0.0;
    std::vector<IterationReport> iterations;
    std::vector<EpochRecord> curve;
    std::vector<std::string> warnings;
    double wall_seconds = 0.0;

    /// Accuracy after `iteration` rounds (0 = base model).
    double accuracy_at(std::size_t iteration) const;
    double final_accuracy() const { return accuracy_at(iterations.size()); }
};

/// Fraction of samples with sign(logit) equal to the label; logit 0 counts positive.
double evaluate(const Network& model, const data::LabeledSet& test);

Architecture architecture_for(const data::PUDataset& dataset, const TrainPhaseConfig& config);

/// Trains a fresh network on the PU risk with Adam. Appends one record per
/// epoch (epoch 0 = full-data risk at initialization).
Network train_base(const data::PUDataset& dataset, const TrainPhaseConfig& config, std::uint64_t seed,
                   std::vector<EpochRecord>* curve = nullptr);

struct StudentResult {
    Network student;
    PredictorHead head;
};

/// Trains a fresh student from the teacher's pseudo-labels: the easy loss on
/// easy samples (plus labeled positives with one-hot targets) and the hard
/// loss on hard samples, one batch of each per step.
StudentResult train_student(const Network& teacher, const splitter::SplitResult& split,
                            const splitter::PseudoLabeledSet& pseudo, const data::PUDataset& dataset,
                            const TrainPhaseConfig& config, std::uint64_t seed, std::size_t iteration = 1,
                            std::vector<EpochRecord>* curve = nullptr, std::vector<std::string>* warnings = nullptr);

struct RunOptions {
    std::optional<std::filesystem::path> snapshot_dir;
};

/// base -> (pseudo-label -> split -> student) x iterations, each student
/// becoming the next teacher. Failures are caught into the report.
RunReport run_split_pu(const data::PUDataset& dataset, const TrainPhaseConfig& config, std::uint64_t seed,
                       const RunOptions& options = {});

}  // namespace splitpu::pipeline
