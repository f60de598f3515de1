#include "mixcd/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "csv.hpp"

namespace mixcd {

Parameters Parameters::zeros(const Architecture& arch) {
    Parameters p;
    const auto in = static_cast<Eigen::Index>(arch.input_dim);
    const auto h = static_cast<Eigen::Index>(arch.hidden);
    const auto c = static_cast<Eigen::Index>(arch.num_classes);
    if (arch.has_hidden()) {
        p.w1 = Eigen::MatrixXd::Zero(h, in);
        p.b1 = Eigen::VectorXd::Zero(h);
        p.w2 = Eigen::MatrixXd::Zero(c, h);
    } else {
        p.w1.resize(0, 0);
        p.b1.resize(0);
        p.w2 = Eigen::MatrixXd::Zero(c, in);
    }
    p.b2 = Eigen::VectorXd::Zero(c);
    return p;
}

bool Parameters::all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

double Parameters::squared_norm() const {
    return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm();
}

std::size_t Parameters::size() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

namespace {

template <typename Fn>
void for_each_entry(Eigen::MatrixXd& m, Fn&& fn) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) fn(m(r, c));
}

template <typename Fn>
void for_each_entry(Eigen::VectorXd& v, Fn&& fn) {
    for (Eigen::Index i = 0; i < v.size(); ++i) fn(v[i]);
}

template <typename Fn>
void for_each_entry(Parameters& p, Fn&& fn) {
    for_each_entry(p.w1, fn);
    for_each_entry(p.b1, fn);
    for_each_entry(p.w2, fn);
    for_each_entry(p.b2, fn);
}

}  // namespace

Eigen::VectorXd Parameters::flatten() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
    Eigen::Index i = 0;
    auto copy = *this;
    for_each_entry(copy, [&](double& v) { flat[i++] = v; });
    return flat;
}

void Parameters::assign(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != size()) throw std::invalid_argument("flat parameter vector has the wrong length");
    Eigen::Index i = 0;
    for_each_entry(*this, [&](double& v) { v = flat[i++]; });
}

Parameters& Parameters::operator+=(const Parameters& o) {
    w1 += o.w1;
    b1 += o.b1;
    w2 += o.w2;
    b2 += o.b2;
    return *this;
}

Parameters& Parameters::operator*=(double s) {
    w1 *= s;
    b1 *= s;
    w2 *= s;
    b2 *= s;
    return *this;
}

Model::Model(Architecture arch) : Model(arch, Parameters::zeros(arch)) {}

Model::Model(Architecture arch, Parameters params) : arch_(arch), params_(std::move(params)) {
    if (arch_.input_dim == 0 || arch_.num_classes == 0) throw std::invalid_argument("architecture needs input_dim and num_classes >= 1");
    const auto ref = Parameters::zeros(arch_);
    const bool shapes_match = ref.w1.rows() == params_.w1.rows() && ref.w1.cols() == params_.w1.cols() &&
                              ref.b1.size() == params_.b1.size() && ref.w2.rows() == params_.w2.rows() &&
                              ref.w2.cols() == params_.w2.cols() && ref.b2.size() == params_.b2.size();
    if (!shapes_match) throw std::invalid_argument("parameter shapes do not match the architecture");
}

Model Model::random(Architecture arch, std::uint64_t seed) {
    Model m(arch);
    std::mt19937_64 rng(seed);
    auto glorot = [&](Eigen::MatrixXd& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    };
    if (arch.has_hidden()) glorot(m.params_.w1);
    glorot(m.params_.w2);
    return m;
}

void Model::check_input(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != arch_.input_dim)
        throw std::invalid_argument(fmt::format("input dimension {} does not match model input {}", x.size(), arch_.input_dim));
}

Eigen::VectorXd Model::hidden(const Eigen::VectorXd& x) const {
    check_input(x);
    if (!arch_.has_hidden()) return x;
    return (params_.w1 * x + params_.b1).array().tanh().matrix();
}

Eigen::VectorXd Model::logits(const Eigen::VectorXd& x) const {
    return params_.w2 * hidden(x) + params_.b2;
}

Eigen::VectorXd Model::forward(const Eigen::VectorXd& x) const { return softmax(logits(x)); }

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
    return e / e.sum();
}

int argmax(const Eigen::VectorXd& probs) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return static_cast<int>(best);
}

double cross_entropy(const Eigen::VectorXd& z, int label) {
    const double zmax = z.maxCoeff();
    const double lse = zmax + std::log((z.array() - zmax).exp().sum());
    return std::max(0.0, lse - z[label]);
}

double loss(const Model& model, const Sample& sample) {
    return cross_entropy(model.logits(sample.features), sample.label);
}

double mean_loss(const Model& model, std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : samples) total += loss(model, s);
    return total / static_cast<double>(samples.size());
}

BatchPass forward_backward(const Model& model, std::span<const Sample* const> batch) {
    if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");
    const auto& arch = model.arch();
    const auto& p = model.params();
    const auto b = static_cast<Eigen::Index>(batch.size());
    const auto d = static_cast<Eigen::Index>(arch.input_dim);

    Eigen::MatrixXd x(d, b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const auto& f = batch[static_cast<std::size_t>(j)]->features;
        if (f.size() != d) throw std::invalid_argument(fmt::format("input dimension {} does not match model input {}", f.size(), d));
        x.col(j) = f;
    }

    Eigen::MatrixXd h;
    if (arch.has_hidden()) {
        h = ((p.w1 * x).colwise() + p.b1).array().tanh().matrix();
    }
    const Eigen::MatrixXd& fan_in = arch.has_hidden() ? h : x;
    Eigen::MatrixXd z = (p.w2 * fan_in).colwise() + p.b2;

    BatchPass out;
    out.predicted.resize(batch.size());
    out.losses.resize(batch.size());
    Eigen::MatrixXd dz(z.rows(), b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const int label = batch[static_cast<std::size_t>(j)]->label;
        const Eigen::VectorXd probs = softmax(z.col(j));
        out.predicted[static_cast<std::size_t>(j)] = argmax(probs);
        out.losses[static_cast<std::size_t>(j)] = cross_entropy(z.col(j), label);
        dz.col(j) = probs;
        dz(label, j) -= 1.0;
    }
    dz /= static_cast<double>(b);

    out.gradient = Parameters::zeros(arch);
    out.gradient.w2 = dz * fan_in.transpose();
    out.gradient.b2 = dz.rowwise().sum();
    if (arch.has_hidden()) {
        const Eigen::MatrixXd da = ((p.w2.transpose() * dz).array() * (1.0 - h.array().square())).matrix();
        out.gradient.w1 = da * x.transpose();
        out.gradient.b1 = da.rowwise().sum();
    }
    return out;
}

Parameters grad(const Model& model, std::span<const Sample* const> batch) {
    return forward_backward(model, batch).gradient;
}

Parameters grad(const Model& model, std::span<const Sample> batch) {
    std::vector<const Sample*> refs;
    refs.reserve(batch.size());
    for (const auto& s : batch) refs.push_back(&s);
    return grad(model, refs);
}

void sgd_step(Model& model, const Parameters& gradient, double lr, double weight_decay) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be a finite non-negative number");
    if (!gradient.all_finite()) throw std::invalid_argument("non-finite gradient");
    auto& w = model.params();
    const double keep = 1.0 - lr * weight_decay;
    w.w1 = keep * w.w1 - lr * gradient.w1;
    w.b1 = keep * w.b1 - lr * gradient.b1;
    w.w2 = keep * w.w2 - lr * gradient.w2;
    w.b2 = keep * w.b2 - lr * gradient.b2;
    if (!w.all_finite()) throw std::runtime_error("weights became non-finite after update");
}

double accuracy(const Model& model, const TaskDataset& dataset) {
    std::size_t correct = 0;
    for (const auto& s : dataset.samples())
        if (argmax(model.logits(s.features)) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void fit(Model& model, const TaskDataset& dataset, const FitConfig& config) {
    if (config.minibatch == 0) throw std::invalid_argument("minibatch must be >= 1");
    std::mt19937_64 rng(config.seed);
    std::vector<const Sample*> order;
    order.reserve(dataset.size());
    for (const auto& s : dataset.samples()) order.push_back(&s);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.minibatch) {
            const std::size_t len = std::min(config.minibatch, order.size() - start);
            const std::span<const Sample* const> batch(order.data() + start, len);
            sgd_step(model, grad(model, batch), config.lr, config.weight_decay);
        }
    }
}

PredictionCache::PredictionCache(const Model& model, const TaskDataset& dataset) {
    entries_.reserve(dataset.size());
    index_.reserve(dataset.size());
    for (const auto& s : dataset.samples()) {
        const Eigen::VectorXd z = model.logits(s.features);
        CacheEntry e;
        e.id = s.id;
        e.base = {argmax(z), cross_entropy(z, s.label)};
        e.embedding = model.hidden(s.features);
        index_.emplace(s.id, entries_.size());
        entries_.push_back(std::move(e));
    }
}

const CacheEntry* PredictionCache::find(SampleId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second];
}

const CacheEntry& PredictionCache::at(SampleId id) const {
    const auto* e = find(id);
    if (!e) throw std::out_of_range(fmt::format("no cached prediction for sample {}", id));
    return *e;
}

PredictionCache build_prediction_cache(const Model& model, const TaskDataset& dataset) {
    return PredictionCache(model, dataset);
}

double cached_accuracy(const PredictionCache& cache, const TaskDataset& dataset) {
    std::size_t correct = 0;
    for (const auto& s : dataset.samples())
        if (cache.at(s.id).base.predicted == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

void write_tensor(std::ofstream& out, const char* name, const Eigen::MatrixXd& m) {
    out << name << ',' << m.rows() << ',' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << csv::real(m(r, c));
    out << '\n';
}

Eigen::MatrixXd read_tensor(std::ifstream& in, const std::string& name, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{}: missing tensor {}", path.string(), name));
    const auto cells = csv::split(line);
    if (cells.size() < 3 || cells[0] != name) throw std::runtime_error(fmt::format("{}: expected tensor {}", path.string(), name));
    const auto rows = csv::parse<Eigen::Index>(cells[1]);
    const auto cols = csv::parse<Eigen::Index>(cells[2]);
    if (static_cast<Eigen::Index>(cells.size()) != 3 + rows * cols) throw std::runtime_error(fmt::format("{}: tensor {} has the wrong length", path.string(), name));
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 3;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = csv::parse<double>(cells[k++]);
    return m;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
    const auto& a = model.arch();
    const auto& p = model.params();
    out << "mixcd-checkpoint,1," << a.input_dim << ',' << a.hidden << ',' << a.num_classes << '\n';
    write_tensor(out, "w1", p.w1);
    write_tensor(out, "b1", p.b1);
    write_tensor(out, "w2", p.w2);
    write_tensor(out, "b2", p.b2);
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    std::string line;
    std::getline(in, line);
    const auto head = csv::split(line);
    if (head.size() != 5 || head[0] != "mixcd-checkpoint" || head[1] != "1")
        throw std::runtime_error(fmt::format("{}: not a version 1 checkpoint", path.string()));
    Architecture arch{csv::parse<std::size_t>(head[2]), csv::parse<std::size_t>(head[3]), csv::parse<std::size_t>(head[4])};
    Parameters p;
    p.w1 = read_tensor(in, "w1", path);
    p.b1 = read_tensor(in, "b1", path);
    p.w2 = read_tensor(in, "w2", path);
    p.b2 = read_tensor(in, "b2", path);
    return Model(arch, std::move(p));
}

}  // namespace mixcd
