#include "mixcd/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace mixcd {

std::string to_string(PartitionKind kind) {
    switch (kind) {
        case PartitionKind::loss_quantile: return "loss_quantile";
        case PartitionKind::meta_label: return "meta_label";
        case PartitionKind::product: return "product";
        case PartitionKind::kmeans: return "kmeans";
        case PartitionKind::random: return "random";
    }
    return "unknown";
}

std::vector<std::int64_t> Partition::finalize(std::vector<SampleId> ids, const std::vector<std::int64_t>& raw) {
    std::vector<std::int64_t> labels(raw);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    raw_to_bin_.clear();
    for (std::size_t k = 0; k < labels.size(); ++k) raw_to_bin_.emplace(labels[k], static_cast<int>(k));

    ids_ = std::move(ids);
    bins_.resize(ids_.size());
    std::vector<std::size_t> counts(labels.size(), 0);
    position_.clear();
    position_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        bins_[i] = raw_to_bin_.at(raw[i]);
        ++counts[static_cast<std::size_t>(bins_[i])];
        if (!position_.emplace(ids_[i], i).second) throw std::invalid_argument(fmt::format("duplicate sample id {} in partition", ids_[i]));
    }
    bin_mass_.resize(labels.size());
    const auto n = static_cast<double>(ids_.size());
    for (std::size_t k = 0; k < labels.size(); ++k) bin_mass_[k] = static_cast<double>(counts[k]) / n;
    return labels;
}

int Partition::bin_of(SampleId id) const {
    auto it = position_.find(id);
    if (it == position_.end()) throw std::out_of_range(fmt::format("sample {} is not covered by the partition", id));
    return bins_[it->second];
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::int64_t random_bucket(SampleId id, std::uint64_t seed, std::size_t k) {
    return static_cast<std::int64_t>(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(id)) % k);
}

std::size_t nearest(std::span<const Eigen::VectorXd> centroids, const Eigen::VectorXd& x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = (centroids[c] - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

int Partition::classify(const Sample& sample, const CacheEntry& entry) const {
    if (auto it = position_.find(sample.id); it != position_.end()) return bins_[it->second];
    auto lookup = [this](std::int64_t raw) {
        auto it = raw_to_bin_.find(raw);
        return it == raw_to_bin_.end() ? -1 : it->second;
    };
    switch (kind_) {
        case PartitionKind::loss_quantile: {
            const auto it = std::lower_bound(loss_bounds_.begin(), loss_bounds_.end(), entry.base.loss);
            return static_cast<int>(it - loss_bounds_.begin());
        }
        case PartitionKind::meta_label:
            return sample.meta_label < 0 ? -1 : lookup(sample.meta_label);
        case PartitionKind::kmeans:
            return static_cast<int>(nearest(centroids_, entry.embedding));
        case PartitionKind::random:
            return lookup(random_bucket(sample.id, random_seed_, random_k_));
        case PartitionKind::product: {
            const int a = left_->classify(sample, entry);
            const int b = right_->classify(sample, entry);
            if (a < 0 || b < 0) return -1;
            return lookup(static_cast<std::int64_t>(a) * static_cast<std::int64_t>(right_->num_bins()) + b);
        }
    }
    return -1;
}

Partition by_loss_quantile(const PredictionCache& cache, std::size_t k) {
    const std::size_t n = cache.size();
    if (k < 1) throw std::invalid_argument("loss-quantile partition needs K >= 1");
    if (k > n) throw std::invalid_argument(fmt::format("K = {} exceeds the {} cached samples", k, n));

    std::vector<const CacheEntry*> order;
    order.reserve(n);
    for (const auto& e : cache.entries()) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const CacheEntry* a, const CacheEntry* b) {
        return a->base.loss != b->base.loss ? a->base.loss < b->base.loss : a->id < b->id;
    });

    std::vector<SampleId> ids(n);
    std::vector<std::int64_t> raw(n);
    Partition p;
    p.kind_ = PartitionKind::loss_quantile;
    p.loss_bounds_.assign(k - 1, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto bin = static_cast<std::int64_t>(r * k / n);
        ids[r] = order[r]->id;
        raw[r] = bin;
        if (static_cast<std::size_t>(bin) < k - 1) p.loss_bounds_[static_cast<std::size_t>(bin)] = order[r]->base.loss;
    }
    p.finalize(std::move(ids), raw);
    return p;
}

Partition by_meta_label(const TaskDataset& dataset) {
    std::vector<SampleId> ids;
    std::vector<std::int64_t> raw;
    ids.reserve(dataset.size());
    raw.reserve(dataset.size());
    for (const auto& s : dataset.samples()) {
        if (s.meta_label < 0) throw std::invalid_argument(fmt::format("sample {} has no meta_label", s.id));
        ids.push_back(s.id);
        raw.push_back(s.meta_label);
    }
    Partition p;
    p.kind_ = PartitionKind::meta_label;
    p.finalize(std::move(ids), raw);
    return p;
}

Partition product(const Partition& a, const Partition& b) {
    if (a.ids().size() != b.ids().size()) throw std::invalid_argument("product of partitions over different sample sets");
    const auto kb = static_cast<std::int64_t>(b.num_bins());
    std::vector<SampleId> ids(a.ids().begin(), a.ids().end());
    std::vector<std::int64_t> raw(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!b.contains(ids[i])) throw std::invalid_argument(fmt::format("sample {} missing from the second partition", ids[i]));
        raw[i] = static_cast<std::int64_t>(a.bins()[i]) * kb + b.bin_of(ids[i]);
    }
    Partition p;
    p.kind_ = PartitionKind::product;
    p.left_ = std::make_shared<const Partition>(a);
    p.right_ = std::make_shared<const Partition>(b);
    const auto labels = p.finalize(std::move(ids), raw);
    for (auto cell : labels) p.cells_.emplace_back(static_cast<int>(cell / kb), static_cast<int>(cell % kb));
    return p;
}

KMeansResult kmeans(std::span<const Eigen::VectorXd> points, std::size_t k, std::uint64_t seed, int max_iters) {
    if (k < 1) throw std::invalid_argument("k-means needs K >= 1");
    if (points.empty()) throw std::invalid_argument("k-means over an empty point set");
    {
        std::vector<std::vector<double>> keys;
        keys.reserve(points.size());
        for (const auto& x : points) keys.emplace_back(x.data(), x.data() + x.size());
        std::sort(keys.begin(), keys.end());
        const auto distinct = static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
        if (k > distinct) throw std::invalid_argument(fmt::format("K = {} exceeds the {} distinct points", k, distinct));
    }

    std::mt19937_64 rng(seed);
    KMeansResult res;
    std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
    res.centroids.push_back(points[first(rng)]);
    std::vector<double> d2(points.size());
    while (res.centroids.size() < k) {
        for (std::size_t i = 0; i < points.size(); ++i) d2[i] = (points[i] - res.centroids[nearest(res.centroids, points[i])]).squaredNorm();
        std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
        res.centroids.push_back(points[pick(rng)]);
    }

    auto assign = [&]() {
        bool changed = false;
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int c = static_cast<int>(nearest(res.centroids, points[i]));
            changed |= c != res.assignment[i];
            res.assignment[i] = c;
            total += (points[i] - res.centroids[static_cast<std::size_t>(c)]).squaredNorm();
        }
        res.objective.push_back(total);
        return changed;
    };

    res.assignment.assign(points.size(), -1);
    assign();
    for (res.iterations = 0; res.iterations < max_iters;) {
        std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(points.front().size()));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            sums[static_cast<std::size_t>(res.assignment[i])] += points[i];
            ++counts[static_cast<std::size_t>(res.assignment[i])];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0) res.centroids[c] = sums[c] / static_cast<double>(counts[c]);
        ++res.iterations;
        if (!assign()) {
            res.converged = true;
            break;
        }
    }
    return res;
}

Partition by_kmeans(const PredictionCache& cache, std::size_t k, std::uint64_t seed, int max_iters) {
    std::vector<Eigen::VectorXd> points;
    std::vector<SampleId> ids;
    points.reserve(cache.size());
    for (const auto& e : cache.entries()) {
        if (e.embedding.size() == 0) throw std::invalid_argument(fmt::format("sample {} has no cached embedding", e.id));
        points.push_back(e.embedding);
        ids.push_back(e.id);
    }
    const auto km = kmeans(points, k, seed, max_iters);
    std::vector<std::int64_t> raw(km.assignment.begin(), km.assignment.end());
    Partition p;
    p.kind_ = PartitionKind::kmeans;
    const auto kept = p.finalize(std::move(ids), raw);
    for (auto c : kept) p.centroids_.push_back(km.centroids[static_cast<std::size_t>(c)]);
    return p;
}

Partition by_random(std::span<const SampleId> ids, std::size_t k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("random partition needs K >= 1");
    if (ids.empty()) throw std::invalid_argument("random partition over no samples");
    std::vector<std::int64_t> raw(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) raw[i] = random_bucket(ids[i], seed, k);
    Partition p;
    p.kind_ = PartitionKind::random;
    p.random_seed_ = seed;
    p.random_k_ = k;
    p.finalize(std::vector<SampleId>(ids.begin(), ids.end()), raw);
    return p;
}

Effectiveness effectiveness_kl(std::span<const double> alpha, double threshold) {
    if (alpha.empty()) throw std::invalid_argument("effectiveness of an empty ratio vector");
    double total = 0.0;
    for (double a : alpha) {
        if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument(fmt::format("CD ratio {} outside [0, 1]", a));
        total += a;
    }
    if (total == 0.0) return {0.0, false};
    const auto k = static_cast<double>(alpha.size());
    double kl = 0.0;
    for (double a : alpha) {
        const double p = a / total;
        if (p > 0.0) kl += p * std::log(k * p);
    }
    kl = std::max(kl, 0.0);
    return {kl, kl > threshold};
}

namespace {

void check_pair(std::span<const double> alpha, std::span<const double> mass, const char* which) {
    if (alpha.size() != mass.size() || alpha.empty())
        throw std::invalid_argument(fmt::format("partition {}: ratio and mass vectors differ in length", which));
}

double overall_ratio(std::span<const double> alpha, std::span<const double> mass) {
    double overall = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) overall += alpha[i] * mass[i];
    return overall;
}

}  // namespace

Eigen::MatrixXd factored_alpha_independent(std::span<const double> alpha_a, std::span<const double> alpha_b,
                                           std::span<const double> mass_a, std::span<const double> mass_b) {
    check_pair(alpha_a, mass_a, "A");
    check_pair(alpha_b, mass_b, "B");
    const auto na = static_cast<Eigen::Index>(alpha_a.size());
    const auto nb = static_cast<Eigen::Index>(alpha_b.size());
    Eigen::MatrixXd joint(na, nb);
    double implied = 0.0;
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < nb; ++j) {
            joint(i, j) = alpha_a[static_cast<std::size_t>(i)] * alpha_b[static_cast<std::size_t>(j)];
            implied += joint(i, j) * mass_a[static_cast<std::size_t>(i)] * mass_b[static_cast<std::size_t>(j)];
        }
    const double overall = overall_ratio(alpha_a, mass_a);
    if (overall == 0.0 || implied == 0.0) return Eigen::MatrixXd::Zero(na, nb);
    return joint * (overall / implied);
}

Eigen::MatrixXd factored_alpha_conditional(std::span<const double> alpha_a, std::span<const double> alpha_b,
                                           std::span<const double> mass_a, std::span<const double> mass_b,
                                           const Eigen::MatrixXd& mass_joint,
                                           const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* occupied) {
    check_pair(alpha_a, mass_a, "A");
    check_pair(alpha_b, mass_b, "B");
    const auto na = static_cast<Eigen::Index>(alpha_a.size());
    const auto nb = static_cast<Eigen::Index>(alpha_b.size());
    if (mass_joint.rows() != na || mass_joint.cols() != nb) throw std::invalid_argument("joint mass matrix has the wrong shape");
    if (occupied && (occupied->rows() != na || occupied->cols() != nb)) throw std::invalid_argument("occupancy mask has the wrong shape");

    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(na, nb);
    double implied = 0.0;
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < nb; ++j) {
            const double pj = mass_joint(i, j);
            if (pj <= 0.0) {
                if (occupied && (*occupied)(i, j)) throw std::invalid_argument(fmt::format("occupied cell ({}, {}) has zero joint mass", i, j));
                continue;
            }
            const auto ia = static_cast<std::size_t>(i);
            const auto jb = static_cast<std::size_t>(j);
            joint(i, j) = mass_a[ia] * mass_b[jb] / pj * alpha_a[ia] * alpha_b[jb];
            implied += joint(i, j) * pj;
        }
    const double overall = overall_ratio(alpha_a, mass_a);
    if (overall == 0.0 || implied == 0.0) return Eigen::MatrixXd::Zero(na, nb);
    return joint * (overall / implied);
}

Eigen::MatrixXd joint_mass(const Partition& p) {
    if (p.kind() != PartitionKind::product) throw std::invalid_argument("joint mass of a non-product partition");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.left()->num_bins()), static_cast<Eigen::Index>(p.right()->num_bins()));
    for (std::size_t k = 0; k < p.num_bins(); ++k) m(p.cells()[k].first, p.cells()[k].second) = p.bin_mass()[k];
    return m;
}

std::vector<double> product_bin_alpha(const Partition& p, const Eigen::MatrixXd& joint) {
    if (p.kind() != PartitionKind::product) throw std::invalid_argument("product-bin ratios of a non-product partition");
    std::vector<double> out(p.num_bins());
    for (std::size_t k = 0; k < p.num_bins(); ++k) out[k] = joint(p.cells()[k].first, p.cells()[k].second);
    return out;
}

void write_partition_csv(const Partition& partition, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
    out << "id,bin\n";
    for (std::size_t i = 0; i < partition.ids().size(); ++i) out << partition.ids()[i] << ',' << partition.bins()[i] << '\n';
}

}  // namespace mixcd
