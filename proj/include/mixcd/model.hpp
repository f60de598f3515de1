#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "mixcd/dataset.hpp"

namespace mixcd {

struct Architecture {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;  // 0: plain softmax regression
    std::size_t num_classes = 0;

    bool has_hidden() const noexcept { return hidden > 0; }
    friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Weights of one model, also used as the gradient structure.
// hidden layer: w1 (hidden x input), b1 (hidden); output: w2 (classes x fan_in), b2 (classes).
// Without a hidden layer w1 and b1 are empty.
struct Parameters {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;

    static Parameters zeros(const Architecture& arch);

    bool all_finite() const;
    double squared_norm() const;
    std::size_t size() const;
    // Layer order w1, b1, w2, b2; matrices row-major.
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);

    Parameters& operator+=(const Parameters& other);
    Parameters& operator*=(double scale);
};

class Model {
public:
    explicit Model(Architecture arch);
    Model(Architecture arch, Parameters params);

    // Glorot-uniform weights, zero biases.
    static Model random(Architecture arch, std::uint64_t seed);

    const Architecture& arch() const noexcept { return arch_; }
    const Parameters& params() const noexcept { return params_; }
    Parameters& params() noexcept { return params_; }

    // Hidden activations (tanh); the input itself when there is no hidden layer.
    Eigen::VectorXd hidden(const Eigen::VectorXd& x) const;
    Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
    // Softmax class probabilities. Throws std::invalid_argument on dimension mismatch.
    Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

private:
    void check_input(const Eigen::VectorXd& x) const;

    Architecture arch_;
    Parameters params_;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Predicted class (lowest index wins ties) and cross-entropy of a probability vector.
int argmax(const Eigen::VectorXd& probs);
double cross_entropy(const Eigen::VectorXd& logits, int label);

// -log p(label) under the model.
double loss(const Model& model, const Sample& sample);
double mean_loss(const Model& model, std::span<const Sample> samples);

// One forward + backward pass over a batch. Per-sample outputs come from the
// weights before any update.
struct BatchPass {
    Parameters gradient;  // mean over the batch
    std::vector<int> predicted;
    std::vector<double> losses;
};

BatchPass forward_backward(const Model& model, std::span<const Sample* const> batch);

// Mean cross-entropy gradient. Throws on an empty batch.
Parameters grad(const Model& model, std::span<const Sample* const> batch);
Parameters grad(const Model& model, std::span<const Sample> batch);

// w <- w - lr * (grad + weight_decay * w). Rejects lr < 0 and non-finite gradients.
void sgd_step(Model& model, const Parameters& gradient, double lr, double weight_decay);

double accuracy(const Model& model, const TaskDataset& dataset);

struct FitConfig {
    int epochs = 20;
    double lr = 0.1;
    double weight_decay = 0.0;
    std::size_t minibatch = 32;
    std::uint64_t seed = 0;
};

// Plain minibatch SGD over shuffled epochs; used to produce the base model.
void fit(Model& model, const TaskDataset& dataset, const FitConfig& config);

struct Prediction {
    int predicted = 0;
    double loss = 0.0;
};

struct CacheEntry {
    SampleId id = 0;
    Prediction base;
    Eigen::VectorXd embedding;
};

// Base-model predictions for every sample of a dataset, evaluated once.
class PredictionCache {
public:
    PredictionCache(const Model& model, const TaskDataset& dataset);

    std::span<const CacheEntry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const CacheEntry* find(SampleId id) const;
    // Throws std::out_of_range for unknown ids.
    const CacheEntry& at(SampleId id) const;

private:
    std::vector<CacheEntry> entries_;
    std::unordered_map<SampleId, std::size_t> index_;
};

PredictionCache build_prediction_cache(const Model& model, const TaskDataset& dataset);

// Accuracy of the cached base predictions on `dataset`.
double cached_accuracy(const PredictionCache& cache, const TaskDataset& dataset);

// Text checkpoint: header line `mixcd-checkpoint,1,input_dim,hidden,classes`,
// then one line per tensor in layer order (w1, b1, w2, b2):
// `name,rows,cols,v0,v1,...` with matrices row-major.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mixcd
