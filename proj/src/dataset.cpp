#include "mixcd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "csv.hpp"

namespace mixcd {

TaskDataset::TaskDataset(std::vector<Sample> samples, int num_classes, TaskRole role)
    : samples_(std::move(samples)), num_classes_(num_classes), role_(role) {
    if (samples_.empty()) throw std::invalid_argument("dataset must be non-empty");
    if (num_classes_ < 1) throw std::invalid_argument("num_classes must be >= 1");
    const auto d = samples_.front().features.size();
    if (d == 0) throw std::invalid_argument("feature dimension must be >= 1");
    index_.reserve(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        auto& s = samples_[i];
        if (s.features.size() != d) throw std::invalid_argument(fmt::format("sample {} has dimension {}, expected {}", s.id, s.features.size(), d));
        if (!s.features.allFinite()) throw std::invalid_argument(fmt::format("sample {} has non-finite features", s.id));
        if (s.label < 0 || s.label >= num_classes_) throw std::invalid_argument(fmt::format("sample {} has label {} outside [0, {})", s.id, s.label, num_classes_));
        if (s.embedding.size() == 0) s.embedding = s.features;
        if (!index_.emplace(s.id, i).second) throw std::invalid_argument(fmt::format("duplicate sample id {}", s.id));
    }
}

std::size_t TaskDataset::index_of(SampleId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range(fmt::format("sample id {} not in dataset", id));
    return it->second;
}

void validate(const GenConfig& c) {
    if (c.dim < 2) throw std::invalid_argument("dim must be >= 2");
    if (c.num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
    if (c.num_components < 1) throw std::invalid_argument("num_components must be >= 1");
    if (c.prior_size < 1 || c.finetune_size < 1) throw std::invalid_argument("task sizes must be >= 1");
    if (!(c.cluster_std > 0.0) || !std::isfinite(c.cluster_std)) throw std::invalid_argument("cluster_std must be positive");
    if (!(c.separation > 0.0) || !std::isfinite(c.separation)) throw std::invalid_argument("separation must be positive");
    if (!(c.overlap >= 0.0 && c.overlap <= 1.0)) throw std::invalid_argument("overlap must lie in [0, 1]");
    if (!(c.forgetting_pressure >= 0.0 && c.forgetting_pressure <= 1.0)) throw std::invalid_argument("forgetting_pressure must lie in [0, 1]");
    if (c.pressure_meta_label < 0 || c.pressure_meta_label >= c.num_components) throw std::invalid_argument("pressure_meta_label must name a prior component");
}

namespace {

// Signed-axis layout: slot s -> axis offset + (s/2) % width, sign alternating,
// radius growing by one separation each time the axes wrap around.
Eigen::VectorXd axis_center(int dim, int offset, int width, int slot, double separation) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
    const int axis = offset + (slot / 2) % width;
    const double sign = slot % 2 == 0 ? 1.0 : -1.0;
    const double radius = separation * (1.0 + slot / (2 * width));
    c[axis] = sign * radius;
    return c;
}

int prior_width(const GenConfig& c) { return c.dim / 2; }
int finetune_width(const GenConfig& c) { return c.dim - c.dim / 2; }

Eigen::VectorXd finetune_center(const GenConfig& c, int cls) {
    return axis_center(c.dim, prior_width(c), finetune_width(c), cls, c.separation);
}

Eigen::VectorXd noisy(const Eigen::VectorXd& center, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    Eigen::VectorXd x(center.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = center[i] + normal(rng);
    return x;
}

}  // namespace

Eigen::VectorXd prior_component_center(const GenConfig& c, int component) {
    return axis_center(c.dim, 0, prior_width(c), component, c.separation);
}

std::pair<TaskDataset, TaskDataset> generate_two_task(const GenConfig& config, std::uint64_t seed) {
    validate(config);
    std::mt19937_64 rng(seed);

    std::vector<Eigen::VectorXd> prior_centers;
    for (int j = 0; j < config.num_components; ++j) prior_centers.push_back(prior_component_center(config, j));

    std::uniform_int_distribution<int> pick_component(0, config.num_components - 1);
    std::vector<Sample> prior;
    prior.reserve(static_cast<std::size_t>(config.prior_size));
    for (int i = 0; i < config.prior_size; ++i) {
        const int j = pick_component(rng);
        Sample s;
        s.id = i;
        s.features = noisy(prior_centers[static_cast<std::size_t>(j)], config.cluster_std, rng);
        s.label = j % config.num_classes;
        s.meta_label = j;
        prior.push_back(std::move(s));
    }

    const int target = config.pressure_meta_label;
    const int target_class = target % config.num_classes;
    const int conflict_class = (target_class + 1) % config.num_classes;
    std::uniform_int_distribution<int> pick_class(0, config.num_classes - 1);
    std::bernoulli_distribution pressured(config.forgetting_pressure);
    std::vector<Sample> finetune;
    finetune.reserve(static_cast<std::size_t>(config.finetune_size));
    for (int i = 0; i < config.finetune_size; ++i) {
        int cls = pick_class(rng);
        Sample s;
        s.id = i;
        if (pressured(rng)) {
            cls = conflict_class;
            const Eigen::VectorXd center = config.overlap * prior_centers[static_cast<std::size_t>(target)] +
                                           (1.0 - config.overlap) * finetune_center(config, cls);
            s.features = noisy(center, config.cluster_std, rng);
            s.meta_label = config.num_classes;
        } else {
            s.features = noisy(finetune_center(config, cls), config.cluster_std, rng);
            s.meta_label = cls;
        }
        s.label = cls;
        finetune.push_back(std::move(s));
    }

    return {TaskDataset(std::move(prior), config.num_classes, TaskRole::prior),
            TaskDataset(std::move(finetune), config.num_classes, TaskRole::finetune)};
}

std::pair<TaskDataset, TaskDataset> split_holdout(const TaskDataset& dataset, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument(fmt::format("holdout fraction {} outside (0, 1)", fraction));
    const std::size_t n = dataset.size();
    const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (held == 0 || held == n) throw std::invalid_argument(fmt::format("holdout fraction {} leaves an empty side of {} samples", fraction, n));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> in_holdout(n, false);
    for (std::size_t i = 0; i < held; ++i) in_holdout[order[i]] = true;

    std::vector<Sample> rest, holdout;
    rest.reserve(n - held);
    holdout.reserve(held);
    for (std::size_t i = 0; i < n; ++i) (in_holdout[i] ? holdout : rest).push_back(dataset[i]);
    return {TaskDataset(std::move(rest), dataset.num_classes(), dataset.role()),
            TaskDataset(std::move(holdout), dataset.num_classes(), dataset.role())};
}

void write_dataset_csv(const TaskDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
    out << "id,label,meta_label";
    for (std::size_t j = 0; j < dataset.dim(); ++j) out << ",f" << j;
    out << '\n';
    for (const auto& s : dataset.samples()) {
        out << s.id << ',' << s.label << ',' << s.meta_label;
        for (Eigen::Index j = 0; j < s.features.size(); ++j) out << ',' << csv::real(s.features[j]);
        out << '\n';
    }
}

TaskDataset read_dataset_csv(const std::filesystem::path& path, int num_classes, TaskRole role) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{}: missing header", path.string()));
    const auto header = csv::split(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "meta_label")
        throw std::runtime_error(fmt::format("{}: unexpected header", path.string()));
    const std::size_t d = header.size() - 3;
    for (std::size_t j = 0; j < d; ++j)
        if (header[3 + j] != fmt::format("f{}", j)) throw std::runtime_error(fmt::format("{}: unexpected column {}", path.string(), header[3 + j]));

    std::vector<Sample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = csv::split(line);
        if (cells.size() != header.size()) throw std::runtime_error(fmt::format("{}:{}: expected {} fields", path.string(), line_no, header.size()));
        Sample s;
        s.id = csv::parse<SampleId>(cells[0]);
        s.label = csv::parse<int>(cells[1]);
        s.meta_label = csv::parse<int>(cells[2]);
        s.features.resize(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) s.features[static_cast<Eigen::Index>(j)] = csv::parse<double>(cells[3 + j]);
        samples.push_back(std::move(s));
    }
    return TaskDataset(std::move(samples), num_classes, role);
}

}  // namespace mixcd
