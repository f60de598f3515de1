#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mixcd/budget.hpp"
#include "mixcd/damage.hpp"
#include "mixcd/dataset.hpp"
#include "mixcd/estimator.hpp"
#include "mixcd/model.hpp"
#include "mixcd/partition.hpp"
#include "mixcd/sampler.hpp"

namespace mixcd {

struct ModelConfig {
    std::size_t hidden = 16;
    int pretrain_epochs = 20;
    double pretrain_lr = 0.1;
    std::uint64_t init_seed = 7;
};

struct ExperimentConfig {
    GenConfig data;
    std::uint64_t data_seed = 1;
    // Fraction of each task held out for evaluation.
    double holdout_fraction = 0.25;
    // Fraction of the prior training data reserved for the unbiased estimator.
    double estimator_holdout_fraction = 0.05;
    ModelConfig model;
};

void validate(const ExperimentConfig& config);

// Everything shared read-only by the runs of one experiment: generated tasks,
// their splits, the trained base model and its prediction cache.
class Experiment {
public:
    explicit Experiment(const ExperimentConfig& config);

    const ExperimentConfig& config() const noexcept { return config_; }
    const TaskDataset& prior_all() const noexcept { return prior_all_; }
    // Rehearsal pool Z_p.
    const TaskDataset& prior_pool() const noexcept { return prior_pool_; }
    const TaskDataset& prior_test() const noexcept { return prior_test_; }
    const TaskDataset& estimator_holdout() const noexcept { return estimator_holdout_; }
    const TaskDataset& finetune_pool() const noexcept { return finetune_pool_; }
    const TaskDataset& finetune_test() const noexcept { return finetune_test_; }
    const Model& base() const noexcept { return base_; }
    // Base predictions on every prior sample (pool, tests and estimator holdout).
    const PredictionCache& cache() const noexcept { return cache_; }

    // Partition of the rehearsal pool described by `spec`, built once and
    // memoised. Grammar: term ('*' term)*, term = name[':'K] with names
    // loss_quantile (K=5), meta_label, kmeans (K=8), random (K=2).
    std::shared_ptr<const Partition> partition(std::string_view spec) const;

private:
    struct Prepared;
    Experiment(const ExperimentConfig& config, Prepared&& prepared);

    ExperimentConfig config_;
    TaskDataset prior_all_;
    TaskDataset finetune_all_;
    TaskDataset prior_pool_;
    TaskDataset prior_test_;
    TaskDataset estimator_holdout_;
    TaskDataset finetune_pool_;
    TaskDataset finetune_test_;
    Model base_;
    PredictionCache cache_;
    mutable std::mutex partitions_mutex_;
    mutable std::map<std::string, std::shared_ptr<const Partition>, std::less<>> partitions_;
};

// Throws std::invalid_argument for malformed specs.
void validate_partition_spec(std::string_view spec);

enum class EstimatorMode { biased, unbiased };

std::string to_string(EstimatorMode mode);
EstimatorMode parse_estimator_mode(std::string_view name);
std::string to_string(DamageMode mode);
DamageMode parse_damage_mode(std::string_view name);

struct RunConfig {
    int iterations = 10;
    std::size_t samples_per_iteration = 500;
    double beta = 0.1;
    SamplerConfig sampler;
    std::string partition = "meta_label";
    DamageConfig damage;
    EstimatorMode estimator = EstimatorMode::biased;
    // Holdout samples inferred per iteration in unbiased mode; 0 means the
    // whole estimator holdout.
    std::size_t unbiased_holdout = 0;
    // Keeps every alpha at its initial value (diagnostic).
    bool freeze_estimator = false;
    double lr = 0.05;
    double weight_decay = 0.0;
    std::size_t minibatch = 32;
    std::uint64_t seed = 1;
};

void validate(const RunConfig& config);

// Per-iteration budget of a run: every sample of an iteration costs one training unit.
double iteration_budget(const RunConfig& config);
double total_budget(const RunConfig& config);

// Model inferences performed on the fine-tuned model, by purpose.
struct ForwardMeter {
    std::size_t training = 0;    // forward half of each training step
    std::size_t scoring = 0;     // online-baseline candidate scoring
    std::size_t estimation = 0;  // unbiased-estimator holdout inference
    std::size_t evaluation = 0;  // metrics, outside the budget

    std::size_t method_total() const noexcept { return training + scoring + estimation; }
};

struct RehearsalEvent {
    const Sample* sample = nullptr;
    int bin = 0;
    Prediction current;
    bool damaged = false;
};

// Called once per minibatch with the model before its update and the rehearsal
// samples of that minibatch together with their recorded damage flags.
using MinibatchObserver = std::function<void(const Model& before, std::span<const RehearsalEvent> rehearsed)>;

struct IterationRecord {
    int iteration = 0;
    std::size_t finetune_count = 0;
    std::size_t rehearsal_count = 0;
    std::size_t draws_attempted = 0;
    bool fallback = false;
    std::size_t cd_count = 0;
    double cd_proportion = 0.0;  // NaN without rehearsal
    double sampling_units = 0.0;
    double prior_accuracy = 0.0;
    double finetune_accuracy = 0.0;
    std::array<double, 3> consumed{};  // indexed by BudgetCategory
    ForwardMeter meter;
    std::vector<double> sampling_alpha;  // ratios the sampler used this iteration
    std::vector<std::uint64_t> n;
    std::vector<std::uint64_t> u;
    std::vector<double> alpha;          // after this iteration's update
    std::vector<double> unbiased_alpha;  // unbiased mode only
    std::vector<double> bin_accuracy;    // prior test accuracy per bin, NaN for empty bins
};

struct FlagRecord {
    SampleId id = 0;
    bool damaged = false;
};

struct RunResult {
    RunConfig config;
    double total_budget = 0.0;
    std::size_t num_bins = 0;
    double tau = 0.0;
    double base_prior_accuracy = 0.0;
    double base_finetune_accuracy = 0.0;
    std::vector<double> base_bin_accuracy;
    std::vector<IterationRecord> iterations;
    // Damage flags of the rehearsal samples trained in the first iteration.
    std::vector<FlagRecord> first_iteration_flags;
    std::array<double, 3> allocated{};
    std::array<double, 3> consumed{};
    ForwardMeter meter;
    std::size_t rehearsed_total = 0;
    std::size_t cd_total = 0;
    std::shared_ptr<const Model> final_model;

    double prior_perf() const { return iterations.back().prior_accuracy; }
    double finetune_perf() const { return iterations.back().finetune_accuracy; }
    // Damaged fraction over every rehearsed sample of the run; NaN without rehearsal.
    double cd_proportion() const;
    double total_consumed() const noexcept { return consumed[0] + consumed[1] + consumed[2]; }
};

// Executes the fine-tuning loop: per iteration draw (1-beta) n fine-tune
// samples, the budget-matched rehearsal set from the configured strategy, train
// one shuffled minibatch pass on their union, then update the damage counts
// from the forward passes of that pass.
RunResult run(const Experiment& experiment, const RunConfig& config, const MinibatchObserver& observer = {});

// Per-bin damage ratios implied by the first-iteration flags of `result` under
// an arbitrary partition of the pool, and their KL effectiveness.
Effectiveness first_iteration_effectiveness(const RunResult& result, const Partition& partition,
                                            double threshold = kEffectivenessThreshold);
std::vector<double> first_iteration_alpha(const RunResult& result, const Partition& partition);

class SweepError : public std::runtime_error {
public:
    SweepError(const std::string& what, double beta, std::uint64_t seed) : std::runtime_error(what), beta(beta), seed(seed) {}
    double beta;
    std::uint64_t seed;
};

struct SweepOptions {
    std::size_t parallel = 1;
    // Invoked (serialised) as each run completes.
    std::function<void(const RunResult&)> on_complete;
};

// Cross product of betas x seeds in beta-major order. The first failing cell
// stops scheduling and is rethrown as SweepError after in-flight runs finish.
std::vector<RunResult> sweep(const Experiment& experiment, const RunConfig& base, std::span<const double> betas,
                             std::span<const std::uint64_t> seeds, const SweepOptions& options = {});

struct ParetoPoint {
    double finetune = 0.0;
    double prior = 0.0;
};

// Indices of points not dominated (>= in both, > in one) by any other point.
std::vector<std::size_t> pareto_frontier_indices(std::span<const ParetoPoint> points);
std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points);
// a >= b componentwise with at least one strict improvement.
bool dominates(const ParetoPoint& a, const ParetoPoint& b) noexcept;

// One line of a sweep summary.
struct SummaryRow {
    std::string strategy;
    double beta = 0.0;
    std::uint64_t seed = 0;
    double total_budget = 0.0;
    double consumed = 0.0;
    double prior_perf = 0.0;
    double finetune_perf = 0.0;
    double cd_proportion = 0.0;
};

SummaryRow summary_row(const RunResult& result);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean; 0 for a single value
    std::size_t count = 0;
};

// Mean and standard error ignoring NaNs; mean is NaN when nothing remains.
MeanSe mean_se(std::span<const double> values);

struct CellSummary {
    std::string strategy;
    double beta = 0.0;
    MeanSe prior;
    MeanSe finetune;
    MeanSe cd_proportion;
};

// Seed-averaged (strategy, beta) cells, ordered by strategy then beta.
std::vector<CellSummary> aggregate(std::span<const SummaryRow> rows);

struct CdProportionRow {
    std::string strategy;
    double beta = 0.0;
    MeanSe proportion;  // NaN mean when no run rehearsed anything
};

std::vector<CdProportionRow> cd_proportion_report(std::span<const SummaryRow> rows);

struct BinDelta {
    std::size_t bin = 0;
    double base_accuracy = 0.0;
    double final_accuracy = 0.0;
    double delta = 0.0;
};

struct PerBinReport {
    std::vector<BinDelta> bins;
    // Population standard deviation of the deltas over non-empty bins.
    double delta_std = 0.0;
};

PerBinReport per_bin_report(std::span<const double> base_accuracy, std::span<const double> final_accuracy);
PerBinReport per_bin_report(const RunResult& result);

// Accuracy of `model` on the prior test samples of each partition bin.
std::vector<double> per_bin_accuracy(const Model& model, const Experiment& experiment, const Partition& partition);

}  // namespace mixcd
