#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mixcd/dataset.hpp"
#include "mixcd/harness.hpp"
#include "support.hpp"

using namespace mixcd;
using mixcd::test::TempDir;

namespace {

std::set<SampleId> ids_of(const TaskDataset& d) {
    std::set<SampleId> out;
    for (const auto& s : d.samples()) out.insert(s.id);
    return out;
}

TaskDataset hundred_samples() {
    std::vector<Sample> v;
    for (int i = 0; i < 100; ++i) v.push_back(mixcd::test::make_sample(i, Eigen::VectorXd::Constant(2, i), i % 2));
    return TaskDataset(std::move(v), 2, TaskRole::prior);
}

// Prior accuracy change per meta-label bin after fine-tuning without rehearsal.
PerBinReport pure_finetune_report(const GenConfig& data) {
    ExperimentConfig ec;
    ec.data = data;
    const Experiment exp(ec);
    RunConfig rc;
    rc.iterations = 60;
    rc.samples_per_iteration = 50;
    rc.beta = 0.01;
    rc.sampler.strategy = Strategy::uniform;
    const auto result = run(exp, rc);
    REQUIRE(result.rehearsed_total == 0);
    return per_bin_report(result);
}

}  // namespace

TEST_CASE("generation is a pure function of config and seed") {
    const GenConfig config;
    const auto [p1, f1] = generate_two_task(config, 11);
    const auto [p2, f2] = generate_two_task(config, 11);
    TempDir dir("gen");
    write_dataset_csv(p1, dir / "p1.csv");
    write_dataset_csv(p2, dir / "p2.csv");
    write_dataset_csv(f1, dir / "f1.csv");
    write_dataset_csv(f2, dir / "f2.csv");
    CHECK(test::read_file(dir / "p1.csv") == test::read_file(dir / "p2.csv"));
    CHECK(test::read_file(dir / "f1.csv") == test::read_file(dir / "f2.csv"));

    const auto [p3, f3] = generate_two_task(config, 12);
    write_dataset_csv(p3, dir / "p3.csv");
    CHECK(test::read_file(dir / "p1.csv") != test::read_file(dir / "p3.csv"));
}

TEST_CASE("generated tasks have the configured shape") {
    GenConfig config;
    config.prior_size = 300;
    config.finetune_size = 200;
    const auto [prior, finetune] = generate_two_task(config, 3);
    CHECK(prior.size() == 300);
    CHECK(finetune.size() == 200);
    CHECK(prior.dim() == static_cast<std::size_t>(config.dim));
    CHECK(prior.role() == TaskRole::prior);
    CHECK(finetune.role() == TaskRole::finetune);
    for (const auto& s : prior.samples()) {
        CHECK(s.meta_label >= 0);
        CHECK(s.meta_label < config.num_components);
        CHECK(s.label == s.meta_label % config.num_classes);
    }
}

TEST_CASE("invalid generator configs are rejected") {
    auto rejects = [](auto mutate) {
        GenConfig c;
        mutate(c);
        CHECK_THROWS_AS(generate_two_task(c, 1), std::invalid_argument);
    };
    rejects([](GenConfig& c) { c.dim = 0; });
    rejects([](GenConfig& c) { c.prior_size = 0; });
    rejects([](GenConfig& c) { c.finetune_size = 0; });
    rejects([](GenConfig& c) { c.num_classes = 1; });
    rejects([](GenConfig& c) { c.cluster_std = 0.0; });
    rejects([](GenConfig& c) { c.overlap = 1.5; });
    rejects([](GenConfig& c) { c.forgetting_pressure = -0.1; });
    rejects([](GenConfig& c) { c.pressure_meta_label = c.num_components; });
}

TEST_CASE("class and meta-label marginals match configured proportions within 3 sigma") {
    GenConfig config;
    config.prior_size = 20000;
    config.finetune_size = 20000;
    const auto [prior, finetune] = generate_two_task(config, 5);

    auto within_3_sigma = [](std::size_t count, std::size_t n, double p) {
        const double expected = static_cast<double>(n) * p;
        const double sigma = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
        return std::abs(static_cast<double>(count) - expected) <= 3.0 * sigma;
    };

    std::vector<std::size_t> meta(static_cast<std::size_t>(config.num_components)), cls(static_cast<std::size_t>(config.num_classes));
    for (const auto& s : prior.samples()) {
        ++meta[static_cast<std::size_t>(s.meta_label)];
        ++cls[static_cast<std::size_t>(s.label)];
    }
    for (auto c : meta) CHECK(within_3_sigma(c, prior.size(), 1.0 / config.num_components));
    for (auto c : cls) CHECK(within_3_sigma(c, prior.size(), 1.0 / config.num_classes));

    // Pressured samples all take the conflict class; the rest are uniform.
    const int conflict = (config.pressure_meta_label % config.num_classes + 1) % config.num_classes;
    std::vector<std::size_t> ft(static_cast<std::size_t>(config.num_classes));
    std::size_t pressured = 0;
    for (const auto& s : finetune.samples()) {
        ++ft[static_cast<std::size_t>(s.label)];
        if (s.meta_label == config.num_classes) ++pressured;
    }
    const double rho = config.forgetting_pressure;
    CHECK(within_3_sigma(pressured, finetune.size(), rho));
    for (int k = 0; k < config.num_classes; ++k) {
        const double p = (1.0 - rho) / config.num_classes + (k == conflict ? rho : 0.0);
        CHECK(within_3_sigma(ft[static_cast<std::size_t>(k)], finetune.size(), p));
    }
}

TEST_CASE("split_holdout halves 100 samples into disjoint exhaustive parts") {
    const auto data = hundred_samples();
    const auto [rest, held] = split_holdout(data, 0.5, 9);
    CHECK(rest.size() == 50);
    CHECK(held.size() == 50);
    const auto a = ids_of(rest), b = ids_of(held);
    std::vector<SampleId> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    CHECK(common.empty());
    std::set<SampleId> all = a;
    all.insert(b.begin(), b.end());
    CHECK(all == ids_of(data));
}

TEST_CASE("split_holdout is deterministic per seed and differs across seeds") {
    const auto data = hundred_samples();
    CHECK(ids_of(split_holdout(data, 0.3, 4).second) == ids_of(split_holdout(data, 0.3, 4).second));
    CHECK(ids_of(split_holdout(data, 0.3, 4).second) != ids_of(split_holdout(data, 0.3, 5).second));
}

TEST_CASE("split_holdout rejects fractions outside (0, 1)") {
    const auto data = hundred_samples();
    CHECK_THROWS_AS(split_holdout(data, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_holdout(data, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_holdout(data, -0.2, 1), std::invalid_argument);
}

TEST_CASE("dataset invariants are enforced at construction") {
    using test::make_sample;
    CHECK_THROWS_AS(TaskDataset({}, 2, TaskRole::prior), std::invalid_argument);
    CHECK_THROWS_AS(TaskDataset({make_sample(0, Eigen::VectorXd::Zero(2), 0), make_sample(0, Eigen::VectorXd::Zero(2), 1)}, 2, TaskRole::prior),
                    std::invalid_argument);
    CHECK_THROWS_AS(TaskDataset({make_sample(0, Eigen::VectorXd::Zero(2), 0), make_sample(1, Eigen::VectorXd::Zero(3), 1)}, 2, TaskRole::prior),
                    std::invalid_argument);
    CHECK_THROWS_AS(TaskDataset({make_sample(0, Eigen::VectorXd::Zero(2), 2)}, 2, TaskRole::prior), std::invalid_argument);
    Eigen::VectorXd bad = Eigen::VectorXd::Zero(2);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(TaskDataset({make_sample(0, bad, 0)}, 2, TaskRole::prior), std::invalid_argument);
}

TEST_CASE("dataset CSV export round-trips exactly") {
    GenConfig config;
    config.prior_size = 200;
    config.finetune_size = 50;
    const auto [prior, finetune] = generate_two_task(config, 2);
    TempDir dir("csv");
    write_dataset_csv(prior, dir / "prior.csv");
    const auto header = test::lines_of(test::read_file(dir / "prior.csv")).front();
    CHECK(header == "id,label,meta_label,f0,f1,f2,f3,f4,f5,f6,f7");
    const auto back = read_dataset_csv(dir / "prior.csv", config.num_classes, TaskRole::prior);
    REQUIRE(back.size() == prior.size());
    for (std::size_t i = 0; i < prior.size(); ++i) {
        CHECK(back[i].id == prior[i].id);
        CHECK(back[i].label == prior[i].label);
        CHECK(back[i].meta_label == prior[i].meta_label);
        CHECK(back[i].features == prior[i].features);
    }
}

TEST_CASE("malformed dataset CSV is rejected naming the file") {
    TempDir dir("badcsv");
    test::write_file(dir / "bad.csv", "id,label,meta_label,f0\n1,0,0\n");
    try {
        read_dataset_csv(dir / "bad.csv", 2, TaskRole::prior);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("bad.csv") != std::string::npos);
    }
}

TEST_CASE("without overlap fine-tuning leaves the pressured prior bin nearly intact") {
    GenConfig data;
    data.overlap = 0.0;
    const auto report = pure_finetune_report(data);
    const auto& target = report.bins[static_cast<std::size_t>(data.pressure_meta_label)];
    CHECK(target.base_accuracy - target.final_accuracy < 0.02);
}

TEST_CASE("forgetting pressure on meta_label 0 makes bin 0 drop the most") {
    const GenConfig data;
    REQUIRE(data.pressure_meta_label == 0);
    const auto report = pure_finetune_report(data);
    const double drop0 = report.bins[0].base_accuracy - report.bins[0].final_accuracy;
    CHECK(drop0 > 0.0);
    for (std::size_t b = 1; b < report.bins.size(); ++b) {
        CAPTURE(b);
        CHECK(drop0 > report.bins[b].base_accuracy - report.bins[b].final_accuracy);
    }
}
