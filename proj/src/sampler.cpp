#include "mixcd/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mixcd/budget.hpp"

namespace mixcd {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::mixcd: return "mixcd";
        case Strategy::uniform: return "uniform";
        case Strategy::uncertainty: return "uncertainty";
        case Strategy::mirpp: return "mirpp";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "mixcd" || name == "mix-cd") return Strategy::mixcd;
    if (name == "uniform" || name == "mix-review") return Strategy::uniform;
    if (name == "uncertainty" || name == "mix-uncertainty") return Strategy::uncertainty;
    if (name == "mirpp" || name == "mix-mir++") return Strategy::mirpp;
    throw std::invalid_argument(fmt::format("unknown strategy '{}'", name));
}

bool is_online_filtered(Strategy s) noexcept { return s == Strategy::uncertainty || s == Strategy::mirpp; }

void validate(const SamplerConfig& c) {
    if (!(c.filter_ratio > 0.0 && c.filter_ratio <= 1.0)) throw std::invalid_argument(fmt::format("filter ratio {} outside (0, 1]", c.filter_ratio));
    if (c.max_draw_factor < 1) throw std::invalid_argument("max_draw_factor must be >= 1");
}

namespace {

std::uniform_int_distribution<std::size_t> pool_index(const TaskDataset& pool) {
    return std::uniform_int_distribution<std::size_t>(0, pool.size() - 1);
}

}  // namespace

RehearsalBatch sample_uniform(const TaskDataset& pool, std::size_t m, Rng& rng) {
    RehearsalBatch batch;
    if (m == 0) return batch;
    auto pick = pool_index(pool);
    batch.samples.reserve(m);
    for (std::size_t i = 0; i < m; ++i) batch.samples.push_back(&pool[pick(rng)]);
    batch.draws_attempted = m;
    return batch;
}

RehearsalBatch sample_mixcd(const TaskDataset& pool, const Partition& partition, std::span<const double> alpha,
                            std::size_t m, Rng& rng, const SamplerConfig& config) {
    if (alpha.size() != partition.num_bins())
        throw std::invalid_argument(fmt::format("{} ratios for a partition of {} bins", alpha.size(), partition.num_bins()));
    RehearsalBatch batch;
    if (m == 0) return batch;
    auto pick = pool_index(pool);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const std::size_t max_draws = static_cast<std::size_t>(config.max_draw_factor) * m;
    batch.samples.reserve(m);
    while (batch.samples.size() < m && batch.draws_attempted < max_draws) {
        const Sample& z = pool[pick(rng)];
        ++batch.draws_attempted;
        const double accept = std::clamp(alpha[static_cast<std::size_t>(partition.bin_of(z.id))], 0.0, 1.0);
        if (coin(rng) < accept) batch.samples.push_back(&z);
    }
    if (batch.samples.size() < m) {
        batch.fallback = true;
        while (batch.samples.size() < m) batch.samples.push_back(&pool[pick(rng)]);
    }
    return batch;
}

RehearsalBatch sample_mixcd(const TaskDataset& pool, const Partition& partition, const CdEstimator& estimator,
                            std::size_t m, Rng& rng, const SamplerConfig& config) {
    const auto alpha = estimator.alpha_hat();
    return sample_mixcd(pool, partition, alpha, m, rng, config);
}

double entropy(const Eigen::VectorXd& probs) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i)
        if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
    return h;
}

double priority_uncertainty(const Model& model, const Sample& sample) { return entropy(model.forward(sample.features)); }

double priority_mirpp(const Model& model, const PredictionCache& cache, const Sample& sample) {
    const double base = cache.at(sample.id).base.loss;
    return loss(model, sample) - base;
}

std::size_t candidate_count(std::size_t m, double filter_ratio) {
    if (!(filter_ratio > 0.0 && filter_ratio <= 1.0)) throw std::invalid_argument(fmt::format("filter ratio {} outside (0, 1]", filter_ratio));
    return static_cast<std::size_t>(std::ceil(static_cast<double>(m) / filter_ratio - 1e-9));
}

RehearsalBatch sample_online_filtered(const TaskDataset& pool, const PriorityFn& priority, std::size_t m,
                                      double filter_ratio, Rng& rng) {
    const std::size_t n_candidates = candidate_count(m, filter_ratio);
    RehearsalBatch batch;
    if (m == 0) return batch;
    auto pick = pool_index(pool);
    struct Scored {
        const Sample* sample;
        double score;
    };
    std::vector<Scored> scored;
    scored.reserve(n_candidates);
    for (std::size_t i = 0; i < n_candidates; ++i) {
        const Sample* z = &pool[pick(rng)];
        scored.push_back({z, priority(*z)});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score > b.score : a.sample->id < b.sample->id;
    });
    batch.samples.reserve(m);
    for (std::size_t i = 0; i < m; ++i) batch.samples.push_back(scored[i].sample);
    batch.draws_attempted = n_candidates;
    batch.sampling_flops_units = static_cast<double>(n_candidates) * unit_costs().forward;
    return batch;
}

}  // namespace mixcd
