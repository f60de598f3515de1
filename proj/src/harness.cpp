#include "mixcd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "csv.hpp"

namespace mixcd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Independent generator per purpose so that swapping the rehearsal sampler
// leaves fine-tune draws and minibatch order untouched for a given seed.
Rng stream(std::uint64_t seed, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(purpose)};
    return Rng(seq);
}

enum StreamPurpose : std::uint64_t { kFinetuneStream = 1, kRehearsalStream = 2, kShuffleStream = 3 };

}  // namespace

void validate(const ExperimentConfig& c) {
    validate(c.data);
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) throw std::invalid_argument("holdout_fraction outside (0, 1)");
    if (!(c.estimator_holdout_fraction > 0.0 && c.estimator_holdout_fraction < 1.0))
        throw std::invalid_argument("estimator_holdout_fraction outside (0, 1)");
    if (c.model.pretrain_epochs < 0) throw std::invalid_argument("pretrain_epochs must be >= 0");
    if (!(c.model.pretrain_lr > 0.0)) throw std::invalid_argument("pretrain_lr must be positive");
}

struct Experiment::Prepared {
    TaskDataset prior_all;
    TaskDataset finetune_all;
    TaskDataset prior_pool;
    TaskDataset prior_test;
    TaskDataset estimator_holdout;
    TaskDataset finetune_pool;
    TaskDataset finetune_test;
    Model base;
    PredictionCache cache;

    static Prepared make(const ExperimentConfig& c) {
        validate(c);
        auto [prior, finetune] = generate_two_task(c.data, c.data_seed);
        auto [prior_train, prior_test] = split_holdout(prior, c.holdout_fraction, c.data_seed + 101);
        auto [prior_pool, estimator_holdout] = split_holdout(prior_train, c.estimator_holdout_fraction, c.data_seed + 202);
        auto [finetune_pool, finetune_test] = split_holdout(finetune, c.holdout_fraction, c.data_seed + 303);

        const Architecture arch{prior.dim(), c.model.hidden, static_cast<std::size_t>(prior.num_classes())};
        Model base = Model::random(arch, c.model.init_seed);
        fit(base, prior_pool, FitConfig{c.model.pretrain_epochs, c.model.pretrain_lr, 0.0, 32, c.model.init_seed + 1});
        PredictionCache cache(base, prior);
        return Prepared{std::move(prior), std::move(finetune), std::move(prior_pool), std::move(prior_test),
                        std::move(estimator_holdout), std::move(finetune_pool), std::move(finetune_test),
                        std::move(base), std::move(cache)};
    }
};

Experiment::Experiment(const ExperimentConfig& config) : Experiment(config, Prepared::make(config)) {}

Experiment::Experiment(const ExperimentConfig& config, Prepared&& p)
    : config_(config),
      prior_all_(std::move(p.prior_all)),
      finetune_all_(std::move(p.finetune_all)),
      prior_pool_(std::move(p.prior_pool)),
      prior_test_(std::move(p.prior_test)),
      estimator_holdout_(std::move(p.estimator_holdout)),
      finetune_pool_(std::move(p.finetune_pool)),
      finetune_test_(std::move(p.finetune_test)),
      base_(std::move(p.base)),
      cache_(std::move(p.cache)) {}

namespace {

struct TermSpec {
    std::string name;
    std::size_t k = 0;
};

std::vector<TermSpec> parse_partition_spec(std::string_view spec) {
    std::vector<TermSpec> terms;
    for (const auto& raw : csv::split(spec, '*')) {
        std::string_view term(raw);
        while (!term.empty() && term.front() == ' ') term.remove_prefix(1);
        while (!term.empty() && term.back() == ' ') term.remove_suffix(1);
        TermSpec t;
        const auto colon = term.find(':');
        t.name = std::string(term.substr(0, colon));
        if (t.name == "loss_quantile") t.k = 5;
        else if (t.name == "kmeans") t.k = 8;
        else if (t.name == "random") t.k = 2;
        else if (t.name == "meta_label") t.k = 0;
        else throw std::invalid_argument(fmt::format("unknown partition '{}' in '{}'", t.name, spec));
        if (colon != std::string_view::npos) {
            if (t.name == "meta_label") throw std::invalid_argument("meta_label partition takes no bin count");
            t.k = csv::parse<std::size_t>(term.substr(colon + 1));
            if (t.k < 1) throw std::invalid_argument(fmt::format("partition '{}' needs at least one bin", t.name));
        }
        terms.push_back(std::move(t));
    }
    return terms;
}

}  // namespace

void validate_partition_spec(std::string_view spec) { parse_partition_spec(spec); }

std::shared_ptr<const Partition> Experiment::partition(std::string_view spec) const {
    std::lock_guard lock(partitions_mutex_);
    if (auto it = partitions_.find(spec); it != partitions_.end()) return it->second;

    std::optional<Partition> combined;
    for (const auto& t : parse_partition_spec(spec)) {
        Partition p = [&] {
            if (t.name == "loss_quantile") {
                // Quantiles over the pool's cached losses only.
                PredictionCache pool_cache(base_, prior_pool_);
                return by_loss_quantile(pool_cache, t.k);
            }
            if (t.name == "meta_label") return by_meta_label(prior_pool_);
            if (t.name == "kmeans") {
                PredictionCache pool_cache(base_, prior_pool_);
                return by_kmeans(pool_cache, t.k, config_.data_seed, 100);
            }
            std::vector<SampleId> ids;
            for (const auto& s : prior_pool_.samples()) ids.push_back(s.id);
            return by_random(ids, t.k, config_.data_seed);
        }();
        combined = combined ? product(*combined, p) : std::move(p);
    }
    auto shared = std::make_shared<const Partition>(std::move(*combined));
    partitions_.emplace(std::string(spec), shared);
    return shared;
}

std::string to_string(EstimatorMode m) { return m == EstimatorMode::biased ? "biased" : "unbiased"; }

EstimatorMode parse_estimator_mode(std::string_view name) {
    if (name == "biased") return EstimatorMode::biased;
    if (name == "unbiased") return EstimatorMode::unbiased;
    throw std::invalid_argument(fmt::format("unknown estimator mode '{}'", name));
}

std::string to_string(DamageMode m) { return m == DamageMode::classification ? "classification" : "loss_threshold"; }

DamageMode parse_damage_mode(std::string_view name) {
    if (name == "classification") return DamageMode::classification;
    if (name == "loss_threshold") return DamageMode::loss_threshold;
    throw std::invalid_argument(fmt::format("unknown damage mode '{}'", name));
}

void validate(const RunConfig& c) {
    if (c.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (c.samples_per_iteration < 1) throw std::invalid_argument("samples_per_iteration must be >= 1");
    if (!(c.beta >= 0.01 && c.beta <= 0.9)) throw std::invalid_argument(fmt::format("beta {} outside [0.01, 0.9]", c.beta));
    if (c.minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
    if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw std::invalid_argument("lr must be positive");
    if (!(c.weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
    validate(c.sampler);
    validate(c.damage);
    validate_partition_spec(c.partition);
}

double iteration_budget(const RunConfig& c) { return static_cast<double>(c.samples_per_iteration) * unit_costs().train_sample; }
double total_budget(const RunConfig& c) { return iteration_budget(c) * c.iterations; }

double RunResult::cd_proportion() const {
    return rehearsed_total == 0 ? kNaN : static_cast<double>(cd_total) / static_cast<double>(rehearsed_total);
}

std::vector<double> per_bin_accuracy(const Model& model, const Experiment& experiment, const Partition& partition) {
    std::vector<std::size_t> correct(partition.num_bins(), 0), total(partition.num_bins(), 0);
    for (const auto& s : experiment.prior_test().samples()) {
        const int bin = partition.classify(s, experiment.cache().at(s.id));
        if (bin < 0) continue;
        const auto b = static_cast<std::size_t>(bin);
        ++total[b];
        if (argmax(model.logits(s.features)) == s.label) ++correct[b];
    }
    std::vector<double> acc(partition.num_bins());
    for (std::size_t b = 0; b < acc.size(); ++b)
        acc[b] = total[b] == 0 ? kNaN : static_cast<double>(correct[b]) / static_cast<double>(total[b]);
    return acc;
}

namespace {

// Uniform draws without replacement from the fine-tune pool, reshuffling
// whenever the pool is exhausted.
class FinetuneCycler {
public:
    FinetuneCycler(const TaskDataset& pool, Rng rng) : pool_(pool), rng_(std::move(rng)), order_(pool.size()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    std::vector<const Sample*> take(std::size_t count) {
        std::vector<const Sample*> out;
        out.reserve(count);
        while (out.size() < count) {
            if (next_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                next_ = 0;
            }
            out.push_back(&pool_[order_[next_++]]);
        }
        return out;
    }

private:
    const TaskDataset& pool_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t next_ = 0;
};

TaskDataset first_samples(const TaskDataset& dataset, std::size_t count) {
    if (count == 0 || count >= dataset.size()) return dataset;
    std::vector<Sample> kept(dataset.samples().begin(), dataset.samples().begin() + static_cast<std::ptrdiff_t>(count));
    return TaskDataset(std::move(kept), dataset.num_classes(), dataset.role());
}

}  // namespace

RunResult run(const Experiment& experiment, const RunConfig& config, const MinibatchObserver& observer) {
    validate(config);
    const auto partition_ptr = experiment.partition(config.partition);
    const Partition& partition = *partition_ptr;
    const auto& cache = experiment.cache();
    const auto& pool = experiment.prior_pool();
    const auto costs = unit_costs();

    DamageConfig damage = config.damage;
    if (damage.mode == DamageMode::loss_threshold) damage.tau = compute_tau(cache, damage.tau_percentile);

    const bool unbiased = config.estimator == EstimatorMode::unbiased;
    const TaskDataset estimator_holdout = first_samples(experiment.estimator_holdout(), config.unbiased_holdout);
    const double reserved = unbiased ? static_cast<double>(estimator_holdout.size()) * costs.forward : 0.0;

    const auto parts = split(iteration_budget(config), config.beta);
    if (reserved > parts.rehearsal)
        throw std::invalid_argument(fmt::format("unbiased holdout of {} samples exceeds the per-iteration rehearsal budget {}",
                                                estimator_holdout.size(), parts.rehearsal));
    const std::size_t m = effective_rehearsal_count(parts.rehearsal, config.sampler, reserved);
    const std::size_t m_f = trainable_samples(parts.finetune);
    const double scoring_units =
        is_online_filtered(config.sampler.strategy) ? static_cast<double>(candidate_count(m, config.sampler.filter_ratio)) * costs.forward : 0.0;

    BudgetLedger ledger(total_budget(config), config.beta, (scoring_units + reserved) * config.iterations);

    RunResult result;
    result.config = config;
    result.total_budget = ledger.total_c();
    result.num_bins = partition.num_bins();
    result.tau = damage.tau;
    result.base_prior_accuracy = cached_accuracy(cache, experiment.prior_test());
    result.base_finetune_accuracy = accuracy(experiment.base(), experiment.finetune_test());
    result.base_bin_accuracy = per_bin_accuracy(experiment.base(), experiment, partition);

    Model model = experiment.base();
    CdEstimator estimator(partition.num_bins());
    std::vector<double> unbiased_alpha(partition.num_bins(), estimator.alpha_init());
    FinetuneCycler cycler(experiment.finetune_pool(), stream(config.seed, kFinetuneStream));
    Rng rehearsal_rng = stream(config.seed, kRehearsalStream);
    Rng shuffle_rng = stream(config.seed, kShuffleStream);
    ForwardMeter meter;

    const PriorityFn score_uncertainty = [&](const Sample& z) {
        ++meter.scoring;
        return priority_uncertainty(model, z);
    };
    const PriorityFn score_mirpp = [&](const Sample& z) {
        ++meter.scoring;
        return priority_mirpp(model, cache, z);
    };

    for (int it = 0; it < config.iterations; ++it) {
        IterationRecord rec;
        rec.iteration = it + 1;

        RehearsalBatch rehearsal;
        switch (config.sampler.strategy) {
            case Strategy::uniform:
                rehearsal = sample_uniform(pool, m, rehearsal_rng);
                break;
            case Strategy::mixcd:
                rec.sampling_alpha = unbiased ? unbiased_alpha : estimator.alpha_hat();
                // First iteration: nothing observed yet, draw uniformly.
                rehearsal = it == 0 ? sample_uniform(pool, m, rehearsal_rng)
                                    : sample_mixcd(pool, partition, rec.sampling_alpha, m, rehearsal_rng, config.sampler);
                break;
            case Strategy::uncertainty:
                rehearsal = sample_online_filtered(pool, score_uncertainty, m, config.sampler.filter_ratio, rehearsal_rng);
                break;
            case Strategy::mirpp:
                rehearsal = sample_online_filtered(pool, score_mirpp, m, config.sampler.filter_ratio, rehearsal_rng);
                break;
        }
        ledger.charge(BudgetCategory::sampling, rehearsal.sampling_flops_units);
        rec.draws_attempted = rehearsal.draws_attempted;
        rec.fallback = rehearsal.fallback;
        rec.sampling_units = rehearsal.sampling_flops_units;

        const auto finetune = cycler.take(m_f);
        rec.finetune_count = finetune.size();
        rec.rehearsal_count = rehearsal.samples.size();

        struct Item {
            const Sample* sample;
            bool rehearsal;
        };
        std::vector<Item> items;
        items.reserve(finetune.size() + rehearsal.samples.size());
        for (const auto* z : finetune) items.push_back({z, false});
        for (const auto* z : rehearsal.samples) items.push_back({z, true});
        std::shuffle(items.begin(), items.end(), shuffle_rng);

        std::vector<RehearsalFlag> flags;
        flags.reserve(rehearsal.samples.size());
        std::vector<const Sample*> batch;
        std::vector<RehearsalEvent> events;
        for (std::size_t start = 0; start < items.size(); start += config.minibatch) {
            const std::size_t len = std::min(config.minibatch, items.size() - start);
            batch.clear();
            events.clear();
            for (std::size_t i = start; i < start + len; ++i) batch.push_back(items[i].sample);

            const BatchPass pass = forward_backward(model, batch);
            meter.training += len;
            std::size_t rehearsed_here = 0;
            for (std::size_t i = 0; i < len; ++i) {
                if (!items[start + i].rehearsal) continue;
                ++rehearsed_here;
                RehearsalEvent ev;
                ev.sample = batch[i];
                ev.bin = partition.bin_of(ev.sample->id);
                ev.current = {pass.predicted[i], pass.losses[i]};
                ev.damaged = cd_flag(*ev.sample, cache.at(ev.sample->id), ev.current, damage);
                flags.push_back({ev.bin, ev.damaged});
                if (it == 0) result.first_iteration_flags.push_back({ev.sample->id, ev.damaged});
                events.push_back(ev);
            }
            if (observer) observer(model, events);
            sgd_step(model, pass.gradient, config.lr, config.weight_decay);
            ledger.charge(BudgetCategory::rehearsal_training, static_cast<double>(rehearsed_here) * costs.train_sample);
            ledger.charge(BudgetCategory::finetune_training, static_cast<double>(len - rehearsed_here) * costs.train_sample);
        }

        rec.cd_count = static_cast<std::size_t>(std::count_if(flags.begin(), flags.end(), [](const RehearsalFlag& f) { return f.damaged; }));
        rec.cd_proportion = flags.empty() ? kNaN : static_cast<double>(rec.cd_count) / static_cast<double>(flags.size());
        result.rehearsed_total += flags.size();
        result.cd_total += rec.cd_count;
        if (!config.freeze_estimator) estimator.update(flags);

        if (unbiased) {
            const auto est = unbiased_estimate(model, cache, estimator_holdout, partition, damage, &ledger);
            meter.estimation += estimator_holdout.size();
            if (!config.freeze_estimator) unbiased_alpha = est.alpha;
            rec.unbiased_alpha = est.alpha;
        }

        rec.n.assign(estimator.n().begin(), estimator.n().end());
        rec.u.assign(estimator.u().begin(), estimator.u().end());
        rec.alpha = estimator.alpha_hat();

        rec.prior_accuracy = accuracy(model, experiment.prior_test());
        rec.finetune_accuracy = accuracy(model, experiment.finetune_test());
        rec.bin_accuracy = per_bin_accuracy(model, experiment, partition);
        meter.evaluation += experiment.prior_test().size() * 2 + experiment.finetune_test().size();
        for (auto c : {BudgetCategory::sampling, BudgetCategory::rehearsal_training, BudgetCategory::finetune_training})
            rec.consumed[static_cast<std::size_t>(c)] = ledger.consumed(c);
        rec.meter = meter;
        result.iterations.push_back(std::move(rec));
    }

    for (auto c : {BudgetCategory::sampling, BudgetCategory::rehearsal_training, BudgetCategory::finetune_training}) {
        result.allocated[static_cast<std::size_t>(c)] = ledger.allocated(c);
        result.consumed[static_cast<std::size_t>(c)] = ledger.consumed(c);
    }
    result.meter = meter;
    result.final_model = std::make_shared<const Model>(std::move(model));
    return result;
}

std::vector<double> first_iteration_alpha(const RunResult& result, const Partition& partition) {
    CdEstimator est(partition.num_bins());
    std::vector<RehearsalFlag> flags;
    flags.reserve(result.first_iteration_flags.size());
    for (const auto& f : result.first_iteration_flags) flags.push_back({partition.bin_of(f.id), f.damaged});
    est.update(flags);
    return est.alpha_hat();
}

Effectiveness first_iteration_effectiveness(const RunResult& result, const Partition& partition, double threshold) {
    const auto alpha = first_iteration_alpha(result, partition);
    return effectiveness_kl(alpha, threshold);
}

std::vector<RunResult> sweep(const Experiment& experiment, const RunConfig& base, std::span<const double> betas,
                             std::span<const std::uint64_t> seeds, const SweepOptions& options) {
    if (betas.empty() || seeds.empty()) throw std::invalid_argument("sweep needs at least one beta and one seed");
    struct Cell {
        double beta;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (double b : betas)
        for (auto s : seeds) cells.push_back({b, s});
    for (const auto& cell : cells) {
        RunConfig c = base;
        c.beta = cell.beta;
        c.seed = cell.seed;
        validate(c);
    }

    std::vector<std::optional<RunResult>> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mutex;
    std::optional<SweepError> error;

    auto worker = [&] {
        for (;;) {
            if (failed.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            RunConfig c = base;
            c.beta = cells[i].beta;
            c.seed = cells[i].seed;
            try {
                RunResult r = run(experiment, c);
                std::lock_guard lock(mutex);
                if (options.on_complete) options.on_complete(r);
                results[i] = std::move(r);
            } catch (const std::exception& e) {
                std::lock_guard lock(mutex);
                failed = true;
                if (!error) error.emplace(e.what(), c.beta, c.seed);
            }
        }
    };

    const std::size_t threads = std::clamp<std::size_t>(options.parallel, 1, cells.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (error) throw *error;

    std::vector<RunResult> out;
    out.reserve(cells.size());
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) noexcept {
    return a.finetune >= b.finetune && a.prior >= b.prior && (a.finetune > b.finetune || a.prior > b.prior);
}

std::vector<std::size_t> pareto_frontier_indices(std::span<const ParetoPoint> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Sweep by finetune descending, prior descending: a point is on the
    // frontier iff its prior beats every point with strictly larger finetune
    // and ties every point with equal finetune.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].finetune != points[b].finetune) return points[a].finetune > points[b].finetune;
        return points[a].prior > points[b].prior;
    });
    std::vector<std::size_t> frontier;
    double best_prior_strictly_right = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        const double f = points[order[i]].finetune;
        while (j < order.size() && points[order[j]].finetune == f) ++j;
        const double group_best = points[order[i]].prior;
        for (std::size_t k = i; k < j; ++k) {
            const double p = points[order[k]].prior;
            if (p == group_best && p > best_prior_strictly_right) frontier.push_back(order[k]);
        }
        best_prior_strictly_right = std::max(best_prior_strictly_right, group_best);
        i = j;
    }
    std::sort(frontier.begin(), frontier.end());
    return frontier;
}

std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points) {
    std::vector<ParetoPoint> out;
    for (auto i : pareto_frontier_indices(points)) out.push_back(points[i]);
    return out;
}

SummaryRow summary_row(const RunResult& r) {
    return {to_string(r.config.sampler.strategy), r.config.beta, r.config.seed, r.total_budget, r.total_consumed(),
            r.prior_perf(), r.finetune_perf(), r.cd_proportion()};
}

MeanSe mean_se(std::span<const double> values) {
    MeanSe out;
    double sum = 0.0;
    for (double v : values)
        if (!std::isnan(v)) {
            sum += v;
            ++out.count;
        }
    if (out.count == 0) return {kNaN, kNaN, 0};
    out.mean = sum / static_cast<double>(out.count);
    if (out.count > 1) {
        double ss = 0.0;
        for (double v : values)
            if (!std::isnan(v)) ss += (v - out.mean) * (v - out.mean);
        out.se = std::sqrt(ss / static_cast<double>(out.count - 1) / static_cast<double>(out.count));
    }
    return out;
}

std::vector<CellSummary> aggregate(std::span<const SummaryRow> rows) {
    std::map<std::pair<std::string, double>, std::vector<const SummaryRow*>> groups;
    for (const auto& r : rows) groups[{r.strategy, r.beta}].push_back(&r);
    std::vector<CellSummary> out;
    for (const auto& [key, members] : groups) {
        std::vector<double> prior, finetune, cd;
        for (const auto* r : members) {
            prior.push_back(r->prior_perf);
            finetune.push_back(r->finetune_perf);
            cd.push_back(r->cd_proportion);
        }
        out.push_back({key.first, key.second, mean_se(prior), mean_se(finetune), mean_se(cd)});
    }
    return out;
}

std::vector<CdProportionRow> cd_proportion_report(std::span<const SummaryRow> rows) {
    std::vector<CdProportionRow> out;
    for (const auto& cell : aggregate(rows)) out.push_back({cell.strategy, cell.beta, cell.cd_proportion});
    return out;
}

PerBinReport per_bin_report(std::span<const double> base_accuracy, std::span<const double> final_accuracy) {
    if (base_accuracy.size() != final_accuracy.size()) throw std::invalid_argument("per-bin accuracy vectors differ in length");
    PerBinReport rep;
    std::vector<double> deltas;
    for (std::size_t b = 0; b < base_accuracy.size(); ++b) {
        const double d = final_accuracy[b] - base_accuracy[b];
        rep.bins.push_back({b, base_accuracy[b], final_accuracy[b], d});
        if (!std::isnan(d)) deltas.push_back(d);
    }
    if (!deltas.empty()) {
        const double mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
        double ss = 0.0;
        for (double d : deltas) ss += (d - mean) * (d - mean);
        rep.delta_std = std::sqrt(ss / static_cast<double>(deltas.size()));
    }
    return rep;
}

PerBinReport per_bin_report(const RunResult& result) {
    return per_bin_report(result.base_bin_accuracy, result.iterations.back().bin_accuracy);
}

}  // namespace mixcd
