#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mixcd/harness.hpp"
#include "support.hpp"

using namespace mixcd;

namespace {

RunConfig small_run(Strategy s, double beta, std::uint64_t seed, int iterations = 5) {
    RunConfig c;
    c.iterations = iterations;
    c.samples_per_iteration = 500;
    c.beta = beta;
    c.sampler.strategy = s;
    c.seed = seed;
    return c;
}

bool brute_force_flag(const Model& base, const Model& current, const Sample& s) {
    return argmax(base.forward(s.features)) == s.label && argmax(current.forward(s.features)) != s.label;
}

std::vector<ParetoPoint> brute_force_frontier(const std::vector<ParetoPoint>& pts) {
    std::vector<ParetoPoint> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            const bool ge = pts[j].finetune >= pts[i].finetune && pts[j].prior >= pts[i].prior;
            const bool gt = pts[j].finetune > pts[i].finetune || pts[j].prior > pts[i].prior;
            if (ge && gt) dominated = true;
        }
        if (!dominated) out.push_back(pts[i]);
    }
    return out;
}

bool same_points(std::vector<ParetoPoint> a, std::vector<ParetoPoint> b) {
    auto key = [](const ParetoPoint& x, const ParetoPoint& y) { return std::tie(x.finetune, x.prior) < std::tie(y.finetune, y.prior); };
    std::sort(a.begin(), a.end(), key);
    std::sort(b.begin(), b.end(), key);
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].finetune != b[i].finetune || a[i].prior != b[i].prior) return false;
    return true;
}

struct Interval {
    double lo, hi;
};

Interval ci95(const std::vector<double>& v) {
    const auto s = mean_se(v);
    return {s.mean - 1.96 * s.se, s.mean + 1.96 * s.se};
}

bool overlap(Interval a, Interval b) { return a.lo <= b.hi && b.lo <= a.hi; }

}  // namespace

TEST_CASE("run budget sizes") {
    const auto c = small_run(Strategy::uniform, 0.3, 1, 7);
    CHECK(iteration_budget(c) == 1500.0);
    CHECK(total_budget(c) == 10500.0);
}

TEST_CASE("invalid run configs are rejected") {
    auto rejects = [](auto mutate) {
        RunConfig c;
        mutate(c);
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
    };
    rejects([](RunConfig& c) { c.iterations = 0; });
    rejects([](RunConfig& c) { c.samples_per_iteration = 0; });
    rejects([](RunConfig& c) { c.minibatch = 0; });
    rejects([](RunConfig& c) { c.beta = 0.0; });
    rejects([](RunConfig& c) { c.beta = 0.95; });
    rejects([](RunConfig& c) { c.lr = -1.0; });
    rejects([](RunConfig& c) { c.partition = "meta_label:3"; });
    rejects([](RunConfig& c) { c.partition = "bogus"; });
    rejects([](RunConfig& c) { c.partition = "kmeans:0"; });
    rejects([](RunConfig& c) { c.sampler.filter_ratio = 2.0; });
}

TEST_CASE("partition specs build memoised partitions of the pool") {
    const auto& exp = test::benchmark();
    const auto meta = exp.partition("meta_label");
    CHECK(meta == exp.partition("meta_label"));
    CHECK(meta->num_bins() == static_cast<std::size_t>(exp.config().data.num_components));
    CHECK(meta->ids().size() == exp.prior_pool().size());
    const auto lq = exp.partition("loss_quantile:3");
    const auto prod = exp.partition("loss_quantile:3*meta_label");
    CHECK(prod->kind() == PartitionKind::product);
    CHECK(prod->num_bins() <= lq->num_bins() * meta->num_bins());
    CHECK(exp.partition("loss_quantile")->num_bins() == 5);
    CHECK(exp.partition("random")->num_bins() == 2);
    CHECK_THROWS_AS(exp.partition("meta_label*"), std::invalid_argument);
}

TEST_CASE("a run is a deterministic function of its config") {
    const auto& exp = test::benchmark();
    const auto c = small_run(Strategy::mixcd, 0.3, 4);
    const auto a = run(exp, c);
    const auto b = run(exp, c);
    REQUIRE(a.iterations.size() == b.iterations.size());
    for (std::size_t i = 0; i < a.iterations.size(); ++i) {
        CHECK(a.iterations[i].prior_accuracy == b.iterations[i].prior_accuracy);
        CHECK(a.iterations[i].finetune_accuracy == b.iterations[i].finetune_accuracy);
        CHECK(a.iterations[i].n == b.iterations[i].n);
        CHECK(a.iterations[i].u == b.iterations[i].u);
    }
    CHECK(a.final_model->params().flatten() == b.final_model->params().flatten());
    const auto other = run(exp, small_run(Strategy::mixcd, 0.3, 5));
    CHECK(other.final_model->params().flatten() != a.final_model->params().flatten());
}

TEST_CASE("iteration records follow the budget split") {
    const auto& exp = test::benchmark();
    const auto r = run(exp, small_run(Strategy::mixcd, 0.3, 1));
    REQUIRE(r.iterations.size() == 5);
    // Forward meters are cumulative over the run.
    for (std::size_t i = 0; i < r.iterations.size(); ++i) {
        const auto& it = r.iterations[i];
        CHECK(it.rehearsal_count == 150);
        CHECK(it.finetune_count == 350);
        CHECK(it.meter.scoring == 0);
        CHECK(it.meter.estimation == 0);
        CHECK(it.meter.training == 500 * (i + 1));
    }
    CHECK(r.iterations.front().sampling_alpha == std::vector<double>(r.num_bins, 0.5));
    CHECK(r.rehearsed_total == 750);
}

TEST_CASE("zero rehearsal is pure fine-tuning and damages the prior task") {
    const auto& exp = test::benchmark();
    RunConfig c = small_run(Strategy::mixcd, 0.01, 1, 20);
    c.samples_per_iteration = 50;
    const auto r = run(exp, c);
    CHECK(r.rehearsed_total == 0);
    for (const auto& it : r.iterations) {
        CHECK(it.rehearsal_count == 0);
        CHECK(std::isnan(it.cd_proportion));
    }
    CHECK(r.prior_perf() < r.base_prior_accuracy);
    CHECK(std::isnan(r.cd_proportion()));
}

TEST_CASE("fine-tune samples cycle when the pool is exhausted") {
    const auto& exp = test::benchmark();
    RunConfig c = small_run(Strategy::uniform, 0.1, 2, 30);
    const auto r = run(exp, c);
    std::size_t trained = 0;
    for (const auto& it : r.iterations) trained += it.finetune_count;
    CHECK(trained > exp.finetune_pool().size());
    CHECK(r.iterations.back().finetune_count == r.iterations.front().finetune_count);
}

TEST_CASE("damage flags used by the estimator equal double-inference flags") {
    const auto& exp = test::benchmark();
    for (auto s : {Strategy::mixcd, Strategy::uniform}) {
        const auto c = small_run(s, 0.5, 3);
        const auto partition = exp.partition(c.partition);
        std::vector<std::uint64_t> n(partition->num_bins()), u(partition->num_bins());
        std::size_t mismatches = 0, flags = 0;
        const auto r = run(exp, c, [&](const Model& before, std::span<const RehearsalEvent> events) {
            for (const auto& e : events) {
                if (e.damaged != brute_force_flag(exp.base(), before, *e.sample)) ++mismatches;
                CHECK(e.bin == partition->bin_of(e.sample->id));
                ++n[static_cast<std::size_t>(e.bin)];
                u[static_cast<std::size_t>(e.bin)] += e.damaged;
                flags += e.damaged;
            }
        });
        CHECK(mismatches == 0);
        CHECK(flags > 0);
        CHECK(r.iterations.back().n == n);
        CHECK(r.iterations.back().u == u);
    }
}

TEST_CASE("mix-cd with frozen equal ratios is indistinguishable from uniform") {
    const auto& exp = test::benchmark();
    std::vector<double> frozen_prior, frozen_ft, uniform_prior, uniform_ft;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RunConfig f = small_run(Strategy::mixcd, 0.3, seed, 6);
        f.freeze_estimator = true;
        const auto a = run(exp, f);
        const auto b = run(exp, small_run(Strategy::uniform, 0.3, seed, 6));
        for (const auto& it : a.iterations) CHECK(it.sampling_alpha == std::vector<double>(a.num_bins, 0.5));
        frozen_prior.push_back(a.prior_perf());
        frozen_ft.push_back(a.finetune_perf());
        uniform_prior.push_back(b.prior_perf());
        uniform_ft.push_back(b.finetune_perf());
    }
    CHECK(overlap(ci95(frozen_prior), ci95(uniform_prior)));
    CHECK(overlap(ci95(frozen_ft), ci95(uniform_ft)));
}

TEST_CASE("unbiased mode charges holdout inference to the rehearsal budget") {
    const auto& exp = test::benchmark();
    RunConfig c = small_run(Strategy::mixcd, 0.5, 1, 3);
    c.estimator = EstimatorMode::unbiased;
    c.unbiased_holdout = 150;
    const auto r = run(exp, c);
    for (std::size_t i = 0; i < r.iterations.size(); ++i) {
        const auto& it = r.iterations[i];
        CHECK(it.meter.estimation == 150 * (i + 1));
        CHECK(it.rehearsal_count == 200);
        CHECK(it.unbiased_alpha.size() == r.num_bins);
    }
    CHECK(r.consumed[static_cast<std::size_t>(BudgetCategory::sampling)] == 450.0);

    c.beta = 0.1;
    c.unbiased_holdout = 151;
    CHECK_THROWS_AS(run(exp, c), std::invalid_argument);
}

TEST_CASE("sweep of three seeds at one beta has identical ledger totals") {
    const auto& exp = test::benchmark();
    const std::vector<double> betas{0.1};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t completed = 0;
    SweepOptions options;
    options.on_complete = [&](const RunResult&) { ++completed; };
    const auto results = sweep(exp, small_run(Strategy::uniform, 0.1, 1, 3), betas, seeds, options);
    REQUIRE(results.size() == 3);
    CHECK(completed == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(results[i].config.seed == seeds[i]);
        CHECK(results[i].total_budget == results[0].total_budget);
        CHECK(results[i].allocated == results[0].allocated);
        CHECK(results[i].total_consumed() == results[0].total_consumed());
    }

    options.parallel = 3;
    const auto parallel = sweep(exp, small_run(Strategy::uniform, 0.1, 1, 3), betas, seeds, options);
    for (std::size_t i = 0; i < 3; ++i) CHECK(parallel[i].prior_perf() == results[i].prior_perf());
}

TEST_CASE("a failing sweep cell is reported with its coordinates") {
    const auto& exp = test::benchmark();
    RunConfig c = small_run(Strategy::mixcd, 0.5, 1, 1);
    c.estimator = EstimatorMode::unbiased;
    c.unbiased_holdout = 200;
    const std::vector<double> betas{0.5, 0.1};
    const std::vector<std::uint64_t> seeds{1};
    try {
        sweep(exp, c, betas, seeds);
        FAIL("expected SweepError");
    } catch (const SweepError& e) {
        CHECK(e.beta == 0.1);
        CHECK(e.seed == 1);
    }
    CHECK_THROWS_AS(sweep(exp, c, std::vector<double>{}, seeds), std::invalid_argument);
}

TEST_CASE("small beta favours fine-tune accuracy over large beta") {
    const auto& exp = test::benchmark();
    std::vector<double> low, high;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        low.push_back(run(exp, small_run(Strategy::uniform, 0.01, seed)).finetune_perf());
        high.push_back(run(exp, small_run(Strategy::uniform, 0.9, seed)).finetune_perf());
    }
    CHECK(mean_se(low).mean >= mean_se(high).mean);
}

TEST_CASE("mean and standard error") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto s = mean_se(v);
    CHECK(s.mean == 2.5);
    CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(s.count == 4);
    const std::vector<double> with_nan{1.0, std::nan(""), 3.0};
    CHECK(mean_se(with_nan).mean == 2.0);
    CHECK(mean_se(with_nan).count == 2);
    CHECK(mean_se(std::vector<double>{7.0}).se == 0.0);
    CHECK(std::isnan(mean_se(std::vector<double>{}).mean));
}

TEST_CASE("Pareto frontier examples") {
    const std::vector<ParetoPoint> three{{1, 0}, {0, 1}, {0.5, 0.5}};
    CHECK(pareto_frontier_indices(three).size() == 3);
    const std::vector<ParetoPoint> two{{1, 1}, {0.5, 0.5}};
    const auto f = pareto_frontier(two);
    REQUIRE(f.size() == 1);
    CHECK(f[0].finetune == 1.0);
    CHECK(f[0].prior == 1.0);
    const std::vector<ParetoPoint> ties{{0.5, 0.5}, {0.5, 0.5}, {0.2, 0.9}};
    CHECK(pareto_frontier(ties).size() == 3);
    CHECK(pareto_frontier(std::vector<ParetoPoint>{}).empty());
    CHECK(dominates({1, 1}, {1, 0.5}));
    CHECK_FALSE(dominates({1, 1}, {1, 1}));
    CHECK_FALSE(dominates({1, 0}, {0, 1}));
}

TEST_CASE("Pareto frontier equals a brute-force dominance scan") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> grid(0, 12);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ParetoPoint> pts(static_cast<std::size_t>(1 + trial % 25));
        for (auto& p : pts) p = {grid(rng) / 12.0, grid(rng) / 12.0};
        CHECK(same_points(pareto_frontier(pts), brute_force_frontier(pts)));
    }
}

TEST_CASE("uniform CD proportion matches the pool-wide damage rate within 3 sigma") {
    const auto& exp = test::benchmark();
    // Each rehearsed sample is a uniform draw from the pool, so its flag is
    // Bernoulli with the pool-wide damage rate under the model that trains it.
    double expected = 0.0, variance = 0.0, observed = 0.0;
    const auto c = small_run(Strategy::uniform, 0.3, 2, 4);
    run(exp, c, [&](const Model& before, std::span<const RehearsalEvent> events) {
        if (events.empty()) return;
        double damaged = 0.0;
        for (const auto& s : exp.prior_pool().samples()) damaged += brute_force_flag(exp.base(), before, s);
        const double p = damaged / static_cast<double>(exp.prior_pool().size());
        for (const auto& e : events) {
            expected += p;
            variance += p * (1.0 - p);
            observed += e.damaged;
        }
    });
    CHECK(expected > 0.0);
    CHECK(std::abs(observed - expected) <= 3.0 * std::sqrt(variance));
}

TEST_CASE("CD proportion report") {
    const auto& exp = test::benchmark();
    std::vector<SummaryRow> rows;
    for (auto s : {Strategy::uniform, Strategy::mixcd})
        for (double beta : {0.1, 0.5})
            for (std::uint64_t seed = 1; seed <= 3; ++seed) rows.push_back(summary_row(run(exp, small_run(s, beta, seed, 8))));
    RunConfig none = small_run(Strategy::uniform, 0.01, 1, 2);
    none.samples_per_iteration = 50;
    rows.push_back(summary_row(run(exp, none)));

    const auto report = cd_proportion_report(rows);
    REQUIRE(report.size() == 5);
    auto find = [&](const std::string& s, double beta) {
        for (const auto& r : report)
            if (r.strategy == s && r.beta == beta) return r;
        FAIL("missing row");
        return report.front();
    };
    for (double beta : {0.1, 0.5}) CHECK(find("mixcd", beta).proportion.mean >= find("uniform", beta).proportion.mean);
    const auto empty = find("uniform", 0.01);
    CHECK(std::isnan(empty.proportion.mean));
    CHECK(empty.proportion.count == 0);
}

TEST_CASE("aggregate groups rows by strategy and beta") {
    std::vector<SummaryRow> rows{{"uniform", 0.1, 1, 30, 30, 0.8, 0.6, 0.1},
                                 {"uniform", 0.1, 2, 30, 30, 0.6, 0.8, 0.3},
                                 {"mixcd", 0.3, 1, 30, 30, 0.9, 0.5, 0.4}};
    const auto cells = aggregate(rows);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].strategy == "mixcd");
    CHECK(cells[1].strategy == "uniform");
    CHECK(cells[1].prior.mean == doctest::Approx(0.7));
    CHECK(cells[1].finetune.mean == doctest::Approx(0.7));
    CHECK(cells[1].prior.count == 2);
}

TEST_CASE("per-bin report without fine-tuning has zero deltas") {
    const auto& exp = test::benchmark();
    const auto partition = exp.partition("meta_label");
    const auto acc = per_bin_accuracy(exp.base(), exp, *partition);
    const auto report = per_bin_report(acc, acc);
    REQUIRE(report.bins.size() == partition->num_bins());
    for (const auto& b : report.bins) CHECK(b.delta == 0.0);
    CHECK(report.delta_std == 0.0);
}

TEST_CASE("per-bin deltas match direct evaluation of base and final models") {
    const auto& exp = test::benchmark();
    const auto r = run(exp, small_run(Strategy::mixcd, 0.3, 6));
    const std::size_t k = r.num_bins;
    std::vector<double> base_hits(k), final_hits(k), count(k);
    for (const auto& s : exp.prior_test().samples()) {
        // Meta-label bins are the component indices.
        const auto b = static_cast<std::size_t>(s.meta_label);
        count[b] += 1.0;
        base_hits[b] += argmax(exp.base().forward(s.features)) == s.label;
        final_hits[b] += argmax(r.final_model->forward(s.features)) == s.label;
    }
    const auto report = per_bin_report(r);
    REQUIRE(report.bins.size() == k);
    double mean = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
        CHECK(report.bins[b].base_accuracy == doctest::Approx(base_hits[b] / count[b]).epsilon(1e-12));
        CHECK(report.bins[b].final_accuracy == doctest::Approx(final_hits[b] / count[b]).epsilon(1e-12));
        CHECK(report.bins[b].delta == doctest::Approx((final_hits[b] - base_hits[b]) / count[b]).epsilon(1e-12));
        mean += report.bins[b].delta;
    }
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (const auto& b : report.bins) var += (b.delta - mean) * (b.delta - mean);
    CHECK(report.delta_std == doctest::Approx(std::sqrt(var / static_cast<double>(k))).epsilon(1e-12));
}

TEST_CASE("per-bin report skips empty bins") {
    const std::vector<double> base{0.9, std::nan(""), 0.5}, fin{0.7, std::nan(""), 0.5};
    const auto report = per_bin_report(base, fin);
    CHECK(std::isnan(report.bins[1].delta));
    CHECK(report.delta_std == doctest::Approx(0.1));
}
