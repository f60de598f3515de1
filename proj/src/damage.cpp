#include "mixcd/damage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

namespace mixcd {

void validate(const DamageConfig& c) {
    if (!(c.tau_percentile > 0.0 && c.tau_percentile <= 100.0))
        throw std::invalid_argument(fmt::format("tau percentile {} outside (0, 100]", c.tau_percentile));
    if (c.mode == DamageMode::loss_threshold && !std::isfinite(c.tau)) throw std::invalid_argument("tau must be finite");
}

bool cd_classification(int prior_pred, int current_pred, int label) noexcept {
    return prior_pred == label && current_pred != label;
}

bool cd_threshold(double prior_loss, double current_loss, double tau) noexcept {
    return prior_loss < tau && current_loss > tau;
}

double compute_tau(const PredictionCache& cache, double percentile) {
    if (cache.size() == 0) throw std::invalid_argument("tau of an empty cache");
    if (!(percentile > 0.0 && percentile <= 100.0)) throw std::invalid_argument(fmt::format("percentile {} outside (0, 100]", percentile));
    std::vector<double> losses;
    losses.reserve(cache.size());
    for (const auto& e : cache.entries()) losses.push_back(e.base.loss);
    std::sort(losses.begin(), losses.end());
    const auto n = static_cast<double>(losses.size());
    // Rounding guard: 90 / 100 * 10 must give rank 9, not 10.
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, losses.size());
    return losses[rank - 1];
}

bool cd_flag(const Sample& sample, const CacheEntry& entry, const Prediction& current, const DamageConfig& config) noexcept {
    switch (config.mode) {
        case DamageMode::classification: return cd_classification(entry.base.predicted, current.predicted, sample.label);
        case DamageMode::loss_threshold: return cd_threshold(entry.base.loss, current.loss, config.tau);
    }
    return false;
}

bool cd_flag(const Sample& sample, const PredictionCache& cache, const Prediction& current, const DamageConfig& config) {
    return cd_flag(sample, cache.at(sample.id), current, config);
}

}  // namespace mixcd
