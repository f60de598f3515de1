#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixcd/damage.hpp"
#include "mixcd/dataset.hpp"
#include "mixcd/model.hpp"
#include "mixcd/partition.hpp"

namespace mixcd {

class BudgetLedger;

struct RehearsalFlag {
    int bin = 0;
    bool damaged = false;
};

// Running per-bin counts of rehearsed samples (n) and damaged rehearsed
// samples (u). alpha_hat(k) = u_k / n_k, or alpha_init while n_k = 0.
// Counts are cumulative over the whole run.
class CdEstimator {
public:
    explicit CdEstimator(std::size_t num_bins, double alpha_init = 0.5);

    std::size_t num_bins() const noexcept { return n_.size(); }
    double alpha_init() const noexcept { return alpha_init_; }
    std::span<const std::uint64_t> n() const noexcept { return n_; }
    std::span<const std::uint64_t> u() const noexcept { return u_; }

    // Throws std::out_of_range for a bin >= K; the estimator is left untouched.
    void update(std::span<const RehearsalFlag> rehearsed);
    double alpha_hat(std::size_t k) const;
    std::vector<double> alpha_hat() const;

private:
    std::vector<std::uint64_t> n_;
    std::vector<std::uint64_t> u_;
    double alpha_init_;
};

CdEstimator init_estimator(std::size_t num_bins);

struct UnbiasedEstimate {
    std::vector<double> alpha;
    // Bins without any holdout sample; their alpha falls back to 0.5.
    std::vector<bool> fallback;
    std::vector<std::size_t> counts;
    // One forward unit per holdout sample.
    double forward_units = 0.0;
};

// Per-bin damaged fraction on a holdout, evaluating the current model on every
// holdout sample. Charges the forward passes to the ledger's sampling category
// when a ledger is given. The holdout must be disjoint from the partition's
// rehearsal pool.
UnbiasedEstimate unbiased_estimate(const Model& current, const PredictionCache& cache, const TaskDataset& holdout,
                                   const Partition& partition, const DamageConfig& config, BudgetLedger* ledger = nullptr);

}  // namespace mixcd
