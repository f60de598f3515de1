#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mixcd {

using SampleId = std::int64_t;

struct Sample {
    SampleId id = 0;
    Eigen::VectorXd features;
    int label = 0;
    // Mixture component the sample was drawn from; negative means absent.
    int meta_label = -1;
    // Defaults to the feature vector; replaced by hidden activations when a
    // base model with a hidden layer is available.
    Eigen::VectorXd embedding;
};

enum class TaskRole { prior, finetune };

// Immutable labeled sample collection. Construction validates every invariant
// (non-empty, shared dimension, finite features, label < num_classes, unique ids).
class TaskDataset {
public:
    TaskDataset(std::vector<Sample> samples, int num_classes, TaskRole role);

    std::span<const Sample> samples() const noexcept { return samples_; }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }
    std::size_t size() const noexcept { return samples_.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(samples_.front().features.size()); }
    int num_classes() const noexcept { return num_classes_; }
    TaskRole role() const noexcept { return role_; }

    bool contains(SampleId id) const { return index_.count(id) != 0; }
    // Position of `id` within samples(); throws std::out_of_range when absent.
    std::size_t index_of(SampleId id) const;

private:
    std::vector<Sample> samples_;
    int num_classes_;
    TaskRole role_;
    std::unordered_map<SampleId, std::size_t> index_;
};

// Two-task Gaussian-mixture benchmark.
//
// The feature space is split into a prior block (first dim/2 coordinates) and
// a fine-tune block (the rest). Prior component j sits on a signed axis of the
// prior block, carries class j % num_classes and meta_label j. Fine-tune class k
// sits on a signed axis of the fine-tune block. A `forgetting_pressure`
// fraction of fine-tune samples is relabelled to (class(t) + 1) % C and moved
// towards the prior component t = pressure_meta_label, interpolating
// `overlap` of the way from the fine-tune centre to the prior centre. With
// overlap = 0 the tasks share no support.
struct GenConfig {
    int dim = 8;
    int num_classes = 4;
    int num_components = 16;
    int prior_size = 8000;
    int finetune_size = 8000;
    double cluster_std = 0.5;
    double separation = 3.0;
    double overlap = 0.5;
    double forgetting_pressure = 0.8;
    int pressure_meta_label = 0;
};

void validate(const GenConfig& config);

// Pure function of (config, seed). Returns (prior, finetune).
std::pair<TaskDataset, TaskDataset> generate_two_task(const GenConfig& config, std::uint64_t seed);

// Centre of prior mixture component `component`.
Eigen::VectorXd prior_component_center(const GenConfig& config, int component);

// Disjoint, exhaustive split. Returns (remainder, holdout) where the holdout
// holds round(fraction * n) samples. Both parts keep the input order.
std::pair<TaskDataset, TaskDataset> split_holdout(const TaskDataset& dataset, double fraction, std::uint64_t seed);

// CSV with header id,label,meta_label,f0..f{d-1}.
void write_dataset_csv(const TaskDataset& dataset, const std::filesystem::path& path);
TaskDataset read_dataset_csv(const std::filesystem::path& path, int num_classes, TaskRole role);

}  // namespace mixcd
