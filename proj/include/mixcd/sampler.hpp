#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mixcd/dataset.hpp"
#include "mixcd/estimator.hpp"
#include "mixcd/model.hpp"
#include "mixcd/partition.hpp"

namespace mixcd {

// mixcd: collateral-damage weighted accept/reject (mix-cd)
// uniform: uniform rehearsal (mix-review)
// uncertainty: entropy-filtered online baseline (mix-uncertainty)
// mirpp: loss-increase-filtered online baseline (mix-mir++)
enum class Strategy { mixcd, uniform, uncertainty, mirpp };

std::string to_string(Strategy strategy);
Strategy parse_strategy(std::string_view name);
bool is_online_filtered(Strategy strategy) noexcept;

struct SamplerConfig {
    Strategy strategy = Strategy::mixcd;
    double filter_ratio = 0.5;
    int max_draw_factor = 50;
};

void validate(const SamplerConfig& config);

using Rng = std::mt19937_64;

struct RehearsalBatch {
    std::vector<const Sample*> samples;
    std::size_t draws_attempted = 0;
    double sampling_flops_units = 0.0;
    // mix-cd exhausted max_draw_factor * m draws and topped up uniformly.
    bool fallback = false;
};

// m i.i.d. uniform draws with replacement; free.
RehearsalBatch sample_uniform(const TaskDataset& pool, std::size_t m, Rng& rng);

// Accept/reject: draw uniformly (so bin k arrives with probability P(k)) and
// accept with probability alpha[bin]. Selection weight is alpha_b * P(b).
// Needs no model inference. Ratios above one are treated as one.
RehearsalBatch sample_mixcd(const TaskDataset& pool, const Partition& partition, std::span<const double> alpha,
                            std::size_t m, Rng& rng, const SamplerConfig& config);
RehearsalBatch sample_mixcd(const TaskDataset& pool, const Partition& partition, const CdEstimator& estimator,
                            std::size_t m, Rng& rng, const SamplerConfig& config);

// Prediction entropy under the current model.
double priority_uncertainty(const Model& model, const Sample& sample);
double entropy(const Eigen::VectorXd& probs);

// loss(current, z) - cached base loss(z). Throws std::out_of_range without a cache entry.
double priority_mirpp(const Model& model, const PredictionCache& cache, const Sample& sample);

// ceil(m / filter_ratio), robust to representation error in the ratio.
std::size_t candidate_count(std::size_t m, double filter_ratio);

using PriorityFn = std::function<double(const Sample&)>;

// Scores ceil(m / filter_ratio) uniform candidates (one forward unit each) and
// keeps the m highest; ties go to the lower sample id.
RehearsalBatch sample_online_filtered(const TaskDataset& pool, const PriorityFn& priority, std::size_t m,
                                      double filter_ratio, Rng& rng);

}  // namespace mixcd
