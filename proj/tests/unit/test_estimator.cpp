#include <doctest.h>

#include <random>

#include "mixcd/budget.hpp"
#include "mixcd/estimator.hpp"
#include "mixcd/harness.hpp"
#include "support.hpp"

using namespace mixcd;

namespace {

TaskDataset without_meta_label(const TaskDataset& data, int excluded) {
    std::vector<Sample> kept;
    for (const auto& s : data.samples())
        if (s.meta_label != excluded) kept.push_back(s);
    return TaskDataset(std::move(kept), data.num_classes(), data.role());
}

Model finetuned(const Experiment& exp) {
    Model m = exp.base();
    fit(m, exp.finetune_pool(), FitConfig{1, 0.05, 0.0, 32, 4});
    return m;
}

}  // namespace

TEST_CASE("fresh estimator starts every ratio at 0.5") {
    const auto est = init_estimator(3);
    CHECK(est.num_bins() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(est.alpha_hat(k) == 0.5);
        CHECK(est.n()[k] == 0);
        CHECK(est.u()[k] == 0);
    }
    CHECK(init_estimator(1).alpha_hat(0) == 0.5);
    CHECK_THROWS_AS(init_estimator(0), std::invalid_argument);
}

TEST_CASE("update counts rehearsed and damaged samples per bin") {
    auto est = init_estimator(3);
    const std::vector<RehearsalFlag> flags{{0, true}, {0, false}, {1, true}};
    est.update(flags);
    CHECK(est.n()[0] == 2);
    CHECK(est.n()[1] == 1);
    CHECK(est.n()[2] == 0);
    CHECK(est.u()[0] == 1);
    CHECK(est.u()[1] == 1);
    CHECK(est.u()[2] == 0);
    CHECK(est.alpha_hat(0) == 0.5);
    CHECK(est.alpha_hat(1) == 1.0);
    CHECK(est.alpha_hat(2) == 0.5);
}

TEST_CASE("empty update leaves the estimator unchanged") {
    auto est = init_estimator(2);
    est.update(std::vector<RehearsalFlag>{{1, true}});
    const auto before = est.alpha_hat();
    est.update({});
    CHECK(est.alpha_hat() == before);
    CHECK(est.n()[1] == 1);
}

TEST_CASE("alpha_hat is u over n") {
    auto est = init_estimator(2);
    est.update(std::vector<RehearsalFlag>{{0, true}, {0, false}, {0, false}, {0, false}});
    CHECK(est.alpha_hat(0) == 0.25);
    CHECK(est.alpha_hat(1) == 0.5);
    est.update(std::vector<RehearsalFlag>{{1, true}, {1, true}, {1, true}, {1, true}});
    CHECK(est.alpha_hat(1) == 1.0);
    CHECK_THROWS_AS(est.alpha_hat(2), std::out_of_range);
}

TEST_CASE("counts accumulate across updates") {
    auto est = init_estimator(1);
    est.update(std::vector<RehearsalFlag>{{0, true}, {0, false}});
    est.update(std::vector<RehearsalFlag>{{0, false}, {0, false}});
    CHECK(est.n()[0] == 4);
    CHECK(est.u()[0] == 1);
    CHECK(est.alpha_hat(0) == 0.25);
}

TEST_CASE("an out-of-range bin is rejected atomically") {
    auto est = init_estimator(2);
    CHECK_THROWS_AS(est.update(std::vector<RehearsalFlag>{{0, true}, {2, true}}), std::out_of_range);
    CHECK(est.n()[0] == 0);
    CHECK(est.u()[0] == 0);
}

TEST_CASE("estimator state is a deterministic function of the update stream") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> bin(0, 3);
    std::bernoulli_distribution damaged(0.3);
    std::vector<std::vector<RehearsalFlag>> stream(20);
    for (auto& batch : stream)
        for (int i = 0; i < 25; ++i) batch.push_back({bin(rng), damaged(rng)});
    auto a = init_estimator(4), b = init_estimator(4);
    for (const auto& batch : stream) {
        a.update(batch);
        b.update(batch);
    }
    CHECK(a.alpha_hat() == b.alpha_hat());
}

TEST_CASE("unbiased estimate without fine-tuning finds no damage") {
    const auto& exp = test::benchmark();
    const auto partition = exp.partition("meta_label");
    const auto est = unbiased_estimate(exp.base(), exp.cache(), exp.estimator_holdout(), *partition, DamageConfig{});
    REQUIRE(est.alpha.size() == partition->num_bins());
    for (std::size_t k = 0; k < est.alpha.size(); ++k) {
        CHECK(est.alpha[k] == 0.0);
        CHECK_FALSE(est.fallback[k]);
    }
    CHECK(est.forward_units == static_cast<double>(exp.estimator_holdout().size()));
}

TEST_CASE("unbiased estimate matches brute-force double inference") {
    const auto& exp = test::benchmark();
    const auto partition = exp.partition("meta_label");
    const auto current = finetuned(exp);
    const auto& holdout = exp.estimator_holdout();

    std::vector<double> damaged(partition->num_bins()), total(partition->num_bins());
    for (const auto& s : holdout.samples()) {
        const int bin = partition->classify(s, exp.cache().at(s.id));
        REQUIRE(bin >= 0);
        const bool before = argmax(exp.base().forward(s.features)) == s.label;
        const bool after = argmax(current.forward(s.features)) == s.label;
        total[static_cast<std::size_t>(bin)] += 1.0;
        damaged[static_cast<std::size_t>(bin)] += (before && !after) ? 1.0 : 0.0;
    }

    BudgetLedger ledger(3.0 * 10000, 0.5, static_cast<double>(holdout.size()));
    const auto est = unbiased_estimate(current, exp.cache(), holdout, *partition, DamageConfig{}, &ledger);
    double any = 0.0;
    for (std::size_t k = 0; k < total.size(); ++k) {
        REQUIRE(total[k] > 0.0);
        CHECK(est.alpha[k] == damaged[k] / total[k]);
        CHECK(est.counts[k] == static_cast<std::size_t>(total[k]));
        any += damaged[k];
    }
    CHECK(any > 0.0);
    CHECK(ledger.consumed(BudgetCategory::sampling) == static_cast<double>(holdout.size()));
}

TEST_CASE("unbiased estimate falls back to 0.5 for bins without holdout samples") {
    const auto& exp = test::benchmark();
    const auto partition = exp.partition("meta_label");
    const auto holdout = without_meta_label(exp.estimator_holdout(), 3);
    const auto est = unbiased_estimate(finetuned(exp), exp.cache(), holdout, *partition, DamageConfig{});
    CHECK(est.alpha[3] == 0.5);
    CHECK(est.fallback[3]);
    CHECK(est.counts[3] == 0);
    CHECK_FALSE(est.fallback[0]);
}

TEST_CASE("unbiased estimate rejects holdout samples from the rehearsal pool") {
    const auto& exp = test::benchmark();
    const auto partition = exp.partition("meta_label");
    CHECK_THROWS_AS(unbiased_estimate(exp.base(), exp.cache(), exp.prior_pool(), *partition, DamageConfig{}), std::invalid_argument);
}
