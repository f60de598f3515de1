#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "mixcd/sampler.hpp"

namespace mixcd {

// Compute is measured in forward passes of one sample.
struct UnitCosts {
    double forward = 1.0;
    double backward = 2.0;
    double train_sample = 3.0;
};

constexpr UnitCosts unit_costs() noexcept { return {}; }

struct BudgetSplit {
    double rehearsal = 0.0;
    double finetune = 0.0;
};

// (beta * c, c - beta * c). beta in (0, 1), c >= 0.
BudgetSplit split(double c, double beta);

// Samples trainable from a rehearsal budget after the strategy's sampling
// cost and any reserved sampling units (e.g. holdout inference) are paid.
// uniform / mix-cd: floor(c_p / 3); online filtered: the largest m with
// ceil(m / filter_ratio) + 3 m <= c_p, i.e. floor(c_p / 5) at ratio 0.5.
std::size_t effective_rehearsal_count(double c_p, const SamplerConfig& strategy, double reserved_sampling_units = 0.0);

// floor(units / 3) with a guard against representation error.
std::size_t trainable_samples(double units);

enum class BudgetCategory { sampling = 0, rehearsal_training = 1, finetune_training = 2 };

std::string to_string(BudgetCategory category);

class BudgetOverdraft : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-run allocation of total_c into rehearsal (sampling + training) and
// fine-tuning, with consumption tracking. Charging more than one training
// sample's cost beyond a category's allocation raises BudgetOverdraft.
class BudgetLedger {
public:
    BudgetLedger(double total_c, double beta, double sampling_allocation = 0.0);

    double total_c() const noexcept { return total_c_; }
    double beta() const noexcept { return beta_; }
    double c_p() const noexcept { return c_p_; }
    double c_f() const noexcept { return c_f_; }
    double c_p_sampling() const noexcept { return allocated(BudgetCategory::sampling); }
    double c_p_training() const noexcept { return allocated(BudgetCategory::rehearsal_training); }

    double allocated(BudgetCategory category) const noexcept { return allocated_[index(category)]; }
    double consumed(BudgetCategory category) const noexcept { return consumed_[index(category)]; }
    double total_consumed() const noexcept;

    void charge(BudgetCategory category, double units);

private:
    static std::size_t index(BudgetCategory c) noexcept { return static_cast<std::size_t>(c); }

    double total_c_;
    double beta_;
    double c_p_;
    double c_f_;
    std::array<double, 3> allocated_{};
    std::array<double, 3> consumed_{};
};

}  // namespace mixcd
