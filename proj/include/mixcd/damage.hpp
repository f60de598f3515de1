#pragma once

#include "mixcd/dataset.hpp"
#include "mixcd/model.hpp"

namespace mixcd {

enum class DamageMode { classification, loss_threshold };

struct DamageConfig {
    DamageMode mode = DamageMode::classification;
    // Loss threshold; only read in loss_threshold mode.
    double tau = 0.0;
    double tau_percentile = 90.0;
};

void validate(const DamageConfig& config);

// Correct under the base model, wrong under the current one.
bool cd_classification(int prior_pred, int current_pred, int label) noexcept;

// Strictly below tau before and strictly above after; ties are not damage.
bool cd_threshold(double prior_loss, double current_loss, double tau) noexcept;

// Nearest-rank percentile of the cached base losses: the value at 1-based rank
// ceil(percentile / 100 * n) of the sorted losses. percentile in (0, 100].
double compute_tau(const PredictionCache& cache, double percentile = 90.0);

// Reads the base side from the cache only. Throws std::out_of_range when the
// sample has no cache entry.
bool cd_flag(const Sample& sample, const PredictionCache& cache, const Prediction& current, const DamageConfig& config);

// Same dispatch with the cache entry already looked up.
bool cd_flag(const Sample& sample, const CacheEntry& entry, const Prediction& current, const DamageConfig& config) noexcept;

}  // namespace mixcd
