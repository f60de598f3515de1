#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "mixcd/dataset.hpp"
#include "mixcd/harness.hpp"

namespace mixcd::test {

// Default forgetting-biased benchmark, built once per test binary.
inline const Experiment& benchmark() {
    static const Experiment experiment{ExperimentConfig{}};
    return experiment;
}

// Fresh scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mixcd_unit_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

inline Sample make_sample(SampleId id, Eigen::VectorXd features, int label, int meta_label = 0) {
    Sample s;
    s.id = id;
    s.embedding = features;
    s.features = std::move(features);
    s.label = label;
    s.meta_label = meta_label;
    return s;
}

inline Eigen::VectorXd random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
    return v;
}

// Two-class model whose loss on feature x with label 1 is log(1 + e^x), so
// x = log(e^L - 1) yields base loss L.
inline Model loss_model() {
    Parameters p = Parameters::zeros(Architecture{1, 0, 2});
    p.w2(0, 0) = 1.0;
    return Model(Architecture{1, 0, 2}, p);
}

inline Eigen::VectorXd feature_for_loss(double l) { return Eigen::VectorXd::Constant(1, std::log(std::expm1(l))); }

struct LossFixture {
    TaskDataset data;
    PredictionCache cache;
};

// Samples with ids first_id, first_id + 1, ... whose base losses are `losses`.
inline LossFixture with_losses(const std::vector<double>& losses, SampleId first_id = 0) {
    std::vector<Sample> v;
    for (std::size_t i = 0; i < losses.size(); ++i)
        v.push_back(make_sample(first_id + static_cast<SampleId>(i), feature_for_loss(losses[i]), 1, static_cast<int>(i % 3)));
    TaskDataset data(std::move(v), 2, TaskRole::prior);
    PredictionCache cache(loss_model(), data);
    return {std::move(data), std::move(cache)};
}

}  // namespace mixcd::test
