#include "mixcd/budget.hpp"

#include <cmath>

#include <fmt/format.h>

namespace mixcd {

namespace {
constexpr double kRoundingGuard = 1e-9;
}

BudgetSplit split(double c, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument(fmt::format("beta {} outside (0, 1)", beta));
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("budget must be finite and non-negative");
    const double c_p = beta * c;
    return {c_p, c - c_p};
}

std::size_t trainable_samples(double units) {
    if (units <= 0.0) return 0;
    return static_cast<std::size_t>(std::floor(units / unit_costs().train_sample + kRoundingGuard));
}

std::size_t effective_rehearsal_count(double c_p, const SamplerConfig& strategy, double reserved_sampling_units) {
    if (!(c_p >= 0.0)) throw std::invalid_argument("rehearsal budget must be non-negative");
    const double available = c_p - reserved_sampling_units;
    if (available <= 0.0) return 0;
    if (!is_online_filtered(strategy.strategy)) return trainable_samples(available);

    const auto costs = unit_costs();
    auto cost = [&](std::size_t m) {
        return static_cast<double>(candidate_count(m, strategy.filter_ratio)) * costs.forward +
               static_cast<double>(m) * costs.train_sample;
    };
    const double per_sample = costs.train_sample + costs.forward / strategy.filter_ratio;
    auto m = static_cast<std::size_t>(std::floor(available / per_sample + kRoundingGuard)) + 1;
    while (m > 0 && cost(m) > available + kRoundingGuard) --m;
    return m;
}

std::string to_string(BudgetCategory c) {
    switch (c) {
        case BudgetCategory::sampling: return "sampling";
        case BudgetCategory::rehearsal_training: return "rehearsal_training";
        case BudgetCategory::finetune_training: return "finetune_training";
    }
    return "unknown";
}

BudgetLedger::BudgetLedger(double total_c, double beta, double sampling_allocation) : total_c_(total_c), beta_(beta) {
    if (!(beta >= 0.01 && beta <= 0.9)) throw std::invalid_argument(fmt::format("beta {} outside [0.01, 0.9]", beta));
    const auto parts = split(total_c, beta);
    c_p_ = parts.rehearsal;
    c_f_ = parts.finetune;
    if (!(sampling_allocation >= 0.0 && sampling_allocation <= c_p_ + kRoundingGuard))
        throw std::invalid_argument(fmt::format("sampling allocation {} exceeds rehearsal budget {}", sampling_allocation, c_p_));
    allocated_[index(BudgetCategory::sampling)] = sampling_allocation;
    allocated_[index(BudgetCategory::rehearsal_training)] = c_p_ - sampling_allocation;
    allocated_[index(BudgetCategory::finetune_training)] = c_f_;
}

double BudgetLedger::total_consumed() const noexcept { return consumed_[0] + consumed_[1] + consumed_[2]; }

void BudgetLedger::charge(BudgetCategory category, double units) {
    if (!(units >= 0.0) || !std::isfinite(units)) throw std::invalid_argument("charged units must be finite and non-negative");
    const auto i = index(category);
    const double after = consumed_[i] + units;
    if (after > allocated_[i] + unit_costs().train_sample + kRoundingGuard)
        throw BudgetOverdraft(fmt::format("{} overdraft: {} consumed of {} allocated", to_string(category), after, allocated_[i]));
    consumed_[i] = after;
}

}  // namespace mixcd
