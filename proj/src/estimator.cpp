#include "mixcd/estimator.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "mixcd/budget.hpp"

namespace mixcd {

CdEstimator::CdEstimator(std::size_t num_bins, double alpha_init) : n_(num_bins, 0), u_(num_bins, 0), alpha_init_(alpha_init) {
    if (num_bins < 1) throw std::invalid_argument("estimator needs K >= 1");
    if (!(alpha_init >= 0.0 && alpha_init <= 1.0)) throw std::invalid_argument("alpha_init outside [0, 1]");
}

void CdEstimator::update(std::span<const RehearsalFlag> rehearsed) {
    for (const auto& r : rehearsed)
        if (r.bin < 0 || static_cast<std::size_t>(r.bin) >= n_.size())
            throw std::out_of_range(fmt::format("bin {} outside [0, {})", r.bin, n_.size()));
    for (const auto& r : rehearsed) {
        const auto k = static_cast<std::size_t>(r.bin);
        ++n_[k];
        if (r.damaged) ++u_[k];
    }
}

double CdEstimator::alpha_hat(std::size_t k) const {
    if (k >= n_.size()) throw std::out_of_range(fmt::format("bin {} outside [0, {})", k, n_.size()));
    if (n_[k] == 0) return alpha_init_;
    return static_cast<double>(u_[k]) / static_cast<double>(n_[k]);
}

std::vector<double> CdEstimator::alpha_hat() const {
    std::vector<double> out(n_.size());
    for (std::size_t k = 0; k < n_.size(); ++k) out[k] = alpha_hat(k);
    return out;
}

CdEstimator init_estimator(std::size_t num_bins) { return CdEstimator(num_bins); }

UnbiasedEstimate unbiased_estimate(const Model& current, const PredictionCache& cache, const TaskDataset& holdout,
                                   const Partition& partition, const DamageConfig& config, BudgetLedger* ledger) {
    const std::size_t k = partition.num_bins();
    std::vector<std::size_t> damaged(k, 0);
    UnbiasedEstimate est;
    est.counts.assign(k, 0);
    for (const auto& s : holdout.samples()) {
        if (partition.contains(s.id)) throw std::invalid_argument(fmt::format("holdout sample {} belongs to the rehearsal pool", s.id));
        const auto& entry = cache.at(s.id);
        const int bin = partition.classify(s, entry);
        const Eigen::VectorXd z = current.logits(s.features);
        est.forward_units += unit_costs().forward;
        if (bin < 0) continue;
        const Prediction now{argmax(z), cross_entropy(z, s.label)};
        ++est.counts[static_cast<std::size_t>(bin)];
        if (cd_flag(s, entry, now, config)) ++damaged[static_cast<std::size_t>(bin)];
    }
    est.alpha.resize(k);
    est.fallback.resize(k);
    for (std::size_t b = 0; b < k; ++b) {
        est.fallback[b] = est.counts[b] == 0;
        est.alpha[b] = est.fallback[b] ? 0.5 : static_cast<double>(damaged[b]) / static_cast<double>(est.counts[b]);
    }
    if (ledger) ledger->charge(BudgetCategory::sampling, est.forward_units);
    return est;
}

}  // namespace mixcd
