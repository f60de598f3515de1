#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mixcd/budget.hpp"
#include "mixcd/harness.hpp"
#include "support.hpp"

using namespace mixcd;

namespace {

SamplerConfig strategy(Strategy s) {
    SamplerConfig c;
    c.strategy = s;
    return c;
}

// Largest m whose scoring and training cost fits c_p, by exhaustive search.
std::size_t brute_force_filtered_m(double c_p, double ratio) {
    std::size_t best = 0;
    for (std::size_t m = 0; m < 100000; ++m) {
        const double cost = std::ceil(static_cast<double>(m) / ratio - 1e-9) + 3.0 * static_cast<double>(m);
        if (cost <= c_p + 1e-9) best = m;
        else break;
    }
    return best;
}

}  // namespace

TEST_CASE("split of 100 at beta 0.1") {
    const auto s = split(100.0, 0.1);
    CHECK(s.rehearsal == doctest::Approx(10.0));
    CHECK(s.finetune == doctest::Approx(90.0));
}

TEST_CASE("split components sum to the budget") {
    for (double beta : {0.01, 0.1, 0.3, 1.0 / 3.0, 0.5, 0.9})
        for (double c : {0.0, 1.0, 99.7, 30000.0}) {
            const auto s = split(c, beta);
            CHECK(s.rehearsal + s.finetune == c);
        }
    const auto zero = split(0.0, 0.4);
    CHECK(zero.rehearsal == 0.0);
    CHECK(zero.finetune == 0.0);
    CHECK_THROWS_AS(split(10.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(split(10.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(split(-1.0, 0.5), std::invalid_argument);
}

TEST_CASE("unit cost ratios") {
    constexpr auto c = unit_costs();
    CHECK(c.forward / c.train_sample == doctest::Approx(1.0 / 3.0));
    CHECK(c.backward == 2.0 * c.forward);
    CHECK(c.train_sample == 3.0);
    CHECK(c.train_sample == c.forward + c.backward);
}

TEST_CASE("effective rehearsal counts at c_p = 30") {
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::uniform)) == 10);
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::mixcd)) == 10);
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::uncertainty)) == 6);
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::mirpp)) == 6);
}

TEST_CASE("effective rehearsal counts follow floor(c_p / 3) and floor(c_p / 5)") {
    for (int i = 0; i <= 400; ++i) {
        const double c_p = 0.75 * i;
        CAPTURE(c_p);
        CHECK(effective_rehearsal_count(c_p, strategy(Strategy::uniform)) == static_cast<std::size_t>(std::floor(c_p / 3.0 + 1e-12)));
        CHECK(effective_rehearsal_count(c_p, strategy(Strategy::mirpp)) == static_cast<std::size_t>(std::floor(c_p / 5.0 + 1e-12)));
    }
}

TEST_CASE("filtered counts at other ratios match an exhaustive search") {
    for (double ratio : {0.1, 0.25, 0.3, 0.7, 1.0}) {
        SamplerConfig c = strategy(Strategy::uncertainty);
        c.filter_ratio = ratio;
        for (double c_p : {0.0, 4.0, 17.0, 99.0, 300.5, 1234.0}) {
            CAPTURE(ratio);
            CAPTURE(c_p);
            CHECK(effective_rehearsal_count(c_p, c) == brute_force_filtered_m(c_p, ratio));
        }
    }
}

TEST_CASE("reserved sampling units reduce the trainable count") {
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::mixcd), 9.0) == 7);
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::mixcd), 30.0) == 0);
    CHECK(effective_rehearsal_count(30.0, strategy(Strategy::mixcd), 45.0) == 0);
    CHECK(trainable_samples(2.9999999999) == 1);
    CHECK(trainable_samples(-3.0) == 0);
}

TEST_CASE("ledger allocation") {
    const BudgetLedger ledger(300.0, 0.2, 12.0);
    CHECK(ledger.c_p() == doctest::Approx(60.0));
    CHECK(ledger.c_f() == doctest::Approx(240.0));
    CHECK(ledger.c_p_sampling() == 12.0);
    CHECK(ledger.c_p_training() == doctest::Approx(48.0));
    CHECK(ledger.total_consumed() == 0.0);
    CHECK_THROWS_AS(BudgetLedger(300.0, 0.2, 61.0), std::invalid_argument);
    CHECK_THROWS_AS(BudgetLedger(300.0, 0.95), std::invalid_argument);
}

TEST_CASE("charging three units per trained sample tracks the sample count") {
    BudgetLedger ledger(3000.0, 0.5);
    for (int i = 1; i <= 400; ++i) {
        ledger.charge(BudgetCategory::finetune_training, unit_costs().train_sample);
        CHECK(ledger.consumed(BudgetCategory::finetune_training) == 3.0 * i);
    }
    CHECK(ledger.total_consumed() == 1200.0);
    CHECK_THROWS_AS(ledger.charge(BudgetCategory::sampling, -1.0), std::invalid_argument);
}

TEST_CASE("overdraft by more than one training sample is an error") {
    BudgetLedger ledger(300.0, 0.1);
    ledger.charge(BudgetCategory::rehearsal_training, 30.0);
    ledger.charge(BudgetCategory::rehearsal_training, 3.0);
    CHECK(ledger.consumed(BudgetCategory::rehearsal_training) == 33.0);
    CHECK_THROWS_AS(ledger.charge(BudgetCategory::rehearsal_training, 0.5), BudgetOverdraft);
    CHECK(ledger.consumed(BudgetCategory::rehearsal_training) == 33.0);

    BudgetLedger sampling(300.0, 0.1, 5.0);
    CHECK_THROWS_AS(sampling.charge(BudgetCategory::sampling, 8.5), BudgetOverdraft);
}

TEST_CASE("every strategy consumes the same budget at fixed c and beta") {
    const auto& exp = test::benchmark();
    for (double beta : {0.1, 0.3}) {
        std::vector<double> consumed;
        for (auto s : {Strategy::uniform, Strategy::mixcd, Strategy::uncertainty, Strategy::mirpp}) {
            RunConfig c;
            c.iterations = 3;
            c.samples_per_iteration = 500;
            c.beta = beta;
            c.sampler.strategy = s;
            const auto r = run(exp, c);
            CHECK(r.total_consumed() <= r.total_budget + 1e-9);
            consumed.push_back(r.total_consumed());
        }
        const auto [lo, hi] = std::minmax_element(consumed.begin(), consumed.end());
        CAPTURE(beta);
        CHECK(*hi - *lo <= unit_costs().train_sample);
    }
}
