#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixcd/dataset.hpp"
#include "mixcd/model.hpp"

namespace mixcd {

enum class PartitionKind { loss_quantile, meta_label, product, kmeans, random };

std::string to_string(PartitionKind kind);

// A binning b(z) in [0, K) of the prior samples with empirical bin masses.
// Every member sample has exactly one bin, masses sum to one and no bin is
// empty. Besides the fitted assignment, each partition keeps the rule that
// produced it so unseen samples (holdouts) can be binned with `classify`.
class Partition {
public:
    PartitionKind kind() const noexcept { return kind_; }
    std::size_t num_bins() const noexcept { return bin_mass_.size(); }
    std::span<const double> bin_mass() const noexcept { return bin_mass_; }
    std::span<const SampleId> ids() const noexcept { return ids_; }
    std::span<const int> bins() const noexcept { return bins_; }

    bool contains(SampleId id) const { return position_.count(id) != 0; }
    // Bin of a member sample; throws std::out_of_range otherwise.
    int bin_of(SampleId id) const;
    // Bin of an arbitrary prior sample, using its cached base-model prediction.
    // Returns -1 when the rule cannot place it (e.g. an unseen meta_label or an
    // empty product cell).
    int classify(const Sample& sample, const CacheEntry& entry) const;

    // Product partitions only: the (a, b) component bins of each product bin.
    std::span<const std::pair<int, int>> cells() const noexcept { return cells_; }
    const Partition* left() const noexcept { return left_.get(); }
    const Partition* right() const noexcept { return right_.get(); }

    // Loss-quantile partitions only: inclusive upper loss bound of bins 0..K-2.
    std::span<const double> loss_bounds() const noexcept { return loss_bounds_; }
    // k-means partitions only: centroids in bin order.
    std::span<const Eigen::VectorXd> centroids() const noexcept { return centroids_; }

    friend Partition by_loss_quantile(const PredictionCache& cache, std::size_t k);
    friend Partition by_meta_label(const TaskDataset& dataset);
    friend Partition product(const Partition& a, const Partition& b);
    friend Partition by_kmeans(const PredictionCache& cache, std::size_t k, std::uint64_t seed, int max_iters);
    friend Partition by_random(std::span<const SampleId> ids, std::size_t k, std::uint64_t seed);

private:
    Partition() = default;
    // Compacts raw labels (dropping unused values) into bins 0..K-1 ordered by
    // raw label and fills masses. Returns the raw label of each bin.
    std::vector<std::int64_t> finalize(std::vector<SampleId> ids, const std::vector<std::int64_t>& raw);

    PartitionKind kind_ = PartitionKind::meta_label;
    std::vector<SampleId> ids_;
    std::vector<int> bins_;
    std::vector<double> bin_mass_;
    std::unordered_map<SampleId, std::size_t> position_;

    // Raw rule label (meta_label, hash bucket, flattened product cell) -> bin.
    std::unordered_map<std::int64_t, int> raw_to_bin_;
    std::vector<double> loss_bounds_;
    std::vector<Eigen::VectorXd> centroids_;
    std::uint64_t random_seed_ = 0;
    std::size_t random_k_ = 0;
    std::shared_ptr<const Partition> left_;
    std::shared_ptr<const Partition> right_;
    std::vector<std::pair<int, int>> cells_;
};

// Contiguous loss intervals of floor(n/K) or ceil(n/K) samples, ordered by
// (loss, id). Throws when K < 1 or K exceeds the cache size.
Partition by_loss_quantile(const PredictionCache& cache, std::size_t k);

// One bin per distinct meta_label, ascending. Throws when a sample lacks one.
Partition by_meta_label(const TaskDataset& dataset);

// Set product; bin index follows (a, b) in row-major order with empty cells
// dropped. Throws when the two partitions cover different samples.
Partition product(const Partition& a, const Partition& b);

// Lloyd's algorithm on cached embeddings with seeded k-means++ initialisation.
Partition by_kmeans(const PredictionCache& cache, std::size_t k, std::uint64_t seed, int max_iters);

// Hash-assigned bins independent of any sample property.
Partition by_random(std::span<const SampleId> ids, std::size_t k, std::uint64_t seed);

struct KMeansResult {
    std::vector<Eigen::VectorXd> centroids;
    std::vector<int> assignment;
    // Sum of squared distances after initialisation and after every iteration.
    std::vector<double> objective;
    int iterations = 0;
    bool converged = false;
};

// Throws when k < 1 or k exceeds the number of distinct points.
KMeansResult kmeans(std::span<const Eigen::VectorXd> points, std::size_t k, std::uint64_t seed, int max_iters);

struct Effectiveness {
    double kl = 0.0;
    bool effective = false;
};

inline constexpr double kEffectivenessThreshold = 0.01;

// KL(p || uniform) of the normalised CD ratios p_k = alpha_k / sum(alpha).
Effectiveness effectiveness_kl(std::span<const double> alpha, double threshold = kEffectivenessThreshold);

// Joint CD ratios of a product partition, rows indexed by A bins and columns by
// B bins. Values are scaled so the implied overall CD ratio
// sum_ij joint_ij * P(a_i) * P(b_j) matches sum_i alphaA_i * P(a_i).
Eigen::MatrixXd factored_alpha_independent(std::span<const double> alpha_a, std::span<const double> alpha_b,
                                           std::span<const double> mass_a, std::span<const double> mass_b);

// Conditional-independence variant: cell (i, j) proportional to
// P(a_i) P(b_j) / P(a_i, b_j) * alphaA_i * alphaB_j, zero for unoccupied cells,
// scaled so sum_ij joint_ij * P(a_i, b_j) matches sum_i alphaA_i * P(a_i).
// `occupied`, when given, marks product cells that exist; a zero joint mass
// there is an error.
Eigen::MatrixXd factored_alpha_conditional(std::span<const double> alpha_a, std::span<const double> alpha_b,
                                           std::span<const double> mass_a, std::span<const double> mass_b,
                                           const Eigen::MatrixXd& mass_joint,
                                           const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* occupied = nullptr);

// P(a_i, b_j) of a product partition as a (K_A x K_B) matrix.
Eigen::MatrixXd joint_mass(const Partition& product_partition);
// Reads a (K_A x K_B) joint CD matrix back into product-bin order.
std::vector<double> product_bin_alpha(const Partition& product_partition, const Eigen::MatrixXd& joint);

// Writes `id,bin` rows.
void write_partition_csv(const Partition& partition, const std::filesystem::path& path);

}  // namespace mixcd
