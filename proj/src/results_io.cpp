#include "mixcd/results_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "csv.hpp"

namespace mixcd {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    return out;
}

std::string field(std::span<const double> values, std::size_t i) {
    return i < values.size() ? csv::real(values[i]) : std::string();
}

// Header-indexed CSV table; every error names the file.
class Table {
public:
    explicit Table(const fs::path& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail("cannot open");
        std::string line;
        if (!std::getline(in, line)) fail("empty file");
        header_ = csv::split(line);
        while (std::getline(in, line)) {
            if (line.empty() || line == "\r") continue;
            auto row = csv::split(line);
            if (row.size() != header_.size())
                fail(fmt::format("row {} has {} fields, expected {}", rows_.size() + 2, row.size(), header_.size()));
            rows_.push_back(std::move(row));
        }
    }

    std::size_t size() const noexcept { return rows_.size(); }

    std::size_t column(std::string_view name) const {
        const auto it = std::find(header_.begin(), header_.end(), name);
        if (it == header_.end()) fail(fmt::format("missing column '{}'", name));
        return static_cast<std::size_t>(it - header_.begin());
    }

    const std::string& text(std::size_t row, std::size_t col) const { return rows_[row][col]; }

    template <typename T>
    T get(std::size_t row, std::size_t col) const {
        try {
            return csv::parse<T>(rows_[row][col]);
        } catch (const std::invalid_argument&) {
            fail(fmt::format("row {}, column '{}': bad value '{}'", row + 2, header_[col], rows_[row][col]));
        }
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(fmt::format("{}: {}", path_.string(), what));
    }

private:
    fs::path path_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::map<std::string, std::string, std::less<>> read_key_values(const fs::path& path) {
    Table t(path);
    const auto k = t.column("key");
    const auto v = t.column("value");
    std::map<std::string, std::string, std::less<>> out;
    for (std::size_t r = 0; r < t.size(); ++r) out[t.text(r, k)] = t.text(r, v);
    return out;
}

}  // namespace

std::vector<PartitionKlRow> partition_kl_rows(const Experiment& experiment, const RunResult& result,
                                              std::span<const std::string> partition_specs) {
    std::vector<PartitionKlRow> rows;
    for (const auto& spec : partition_specs) {
        const auto partition = experiment.partition(spec);
        const auto eff = first_iteration_effectiveness(result, *partition);
        rows.push_back({spec, partition->num_bins(), eff.kl, eff.effective});
    }
    return rows;
}

std::string run_tag(const RunConfig& c) { return fmt::format("{}_beta{}_seed{}", to_string(c.sampler.strategy), c.beta, c.seed); }

void write_run(const RunResult& r, const Partition& partition, std::span<const PartitionKlRow> kl, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& c = r.config;

    {
        auto out = open_out(dir / "config.csv");
        out << "key,value\n";
        auto kv = [&](std::string_view k, const auto& v) { out << k << ',' << v << '\n'; };
        kv("schema_version", kCsvSchemaVersion);
        kv("strategy", to_string(c.sampler.strategy));
        kv("beta", csv::real(c.beta));
        kv("seed", c.seed);
        kv("iterations", c.iterations);
        kv("samples_per_iteration", c.samples_per_iteration);
        kv("partition", c.partition);
        kv("damage", to_string(c.damage.mode));
        kv("tau_percentile", csv::real(c.damage.tau_percentile));
        kv("tau", csv::real(r.tau));
        kv("estimator", to_string(c.estimator));
        kv("unbiased_holdout", c.unbiased_holdout);
        kv("freeze_estimator", c.freeze_estimator ? 1 : 0);
        kv("filter_ratio", csv::real(c.sampler.filter_ratio));
        kv("max_draw_factor", c.sampler.max_draw_factor);
        kv("lr", csv::real(c.lr));
        kv("weight_decay", csv::real(c.weight_decay));
        kv("minibatch", c.minibatch);
        kv("total_budget", csv::real(r.total_budget));
        kv("num_bins", r.num_bins);
        kv("base_prior_accuracy", csv::real(r.base_prior_accuracy));
        kv("base_finetune_accuracy", csv::real(r.base_finetune_accuracy));
        for (auto cat : {BudgetCategory::sampling, BudgetCategory::rehearsal_training, BudgetCategory::finetune_training}) {
            const auto i = static_cast<std::size_t>(cat);
            kv(fmt::format("allocated_{}", to_string(cat)), csv::real(r.allocated[i]));
            kv(fmt::format("consumed_{}", to_string(cat)), csv::real(r.consumed[i]));
        }
        kv("rehearsed_total", r.rehearsed_total);
        kv("cd_total", r.cd_total);
        kv("cd_proportion", csv::real(r.cd_proportion()));
    }

    {
        auto out = open_out(dir / "iterations.csv");
        out << "iteration,finetune_count,rehearsal_count,draws_attempted,fallback,cd_count,cd_proportion,sampling_units,"
               "prior_accuracy,finetune_accuracy,consumed_sampling,consumed_rehearsal_training,consumed_finetune_training,"
               "forward_training,forward_scoring,forward_estimation,forward_evaluation\n";
        for (const auto& it : r.iterations) {
            out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", it.iteration, it.finetune_count,
                               it.rehearsal_count, it.draws_attempted, it.fallback ? 1 : 0, it.cd_count,
                               csv::real(it.cd_proportion), csv::real(it.sampling_units), csv::real(it.prior_accuracy),
                               csv::real(it.finetune_accuracy), csv::real(it.consumed[0]), csv::real(it.consumed[1]),
                               csv::real(it.consumed[2]), it.meter.training, it.meter.scoring, it.meter.estimation,
                               it.meter.evaluation);
        }
    }

    {
        auto out = open_out(dir / "bins.csv");
        out << "iteration,bin,mass,n,u,alpha,sampling_alpha,unbiased_alpha,base_accuracy,accuracy,delta\n";
        const auto mass = partition.bin_mass();
        for (const auto& it : r.iterations) {
            for (std::size_t b = 0; b < r.num_bins; ++b) {
                out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", it.iteration, b, csv::real(mass[b]), it.n[b],
                                   it.u[b], csv::real(it.alpha[b]), field(it.sampling_alpha, b), field(it.unbiased_alpha, b),
                                   csv::real(r.base_bin_accuracy[b]), csv::real(it.bin_accuracy[b]),
                                   csv::real(it.bin_accuracy[b] - r.base_bin_accuracy[b]));
            }
        }
    }

    {
        auto out = open_out(dir / "partition_kl.csv");
        out << "partition,num_bins,kl,effective\n";
        for (const auto& row : kl) out << fmt::format("{},{},{},{}\n", row.partition, row.num_bins, csv::real(row.kl), row.effective ? 1 : 0);
    }
}

void write_summary_csv(std::span<const SummaryRow> rows, const fs::path& path) {
    auto out = open_out(path);
    out << "strategy,beta,seed,total_budget,consumed,prior_perf,finetune_perf,cd_proportion\n";
    for (const auto& r : rows)
        out << fmt::format("{},{},{},{},{},{},{},{}\n", r.strategy, csv::real(r.beta), r.seed, csv::real(r.total_budget),
                           csv::real(r.consumed), csv::real(r.prior_perf), csv::real(r.finetune_perf), csv::real(r.cd_proportion));
}

std::vector<SummaryRow> read_summary_csv(const fs::path& path) {
    Table t(path);
    const auto strategy = t.column("strategy"), beta = t.column("beta"), seed = t.column("seed"),
               budget = t.column("total_budget"), consumed = t.column("consumed"), prior = t.column("prior_perf"),
               finetune = t.column("finetune_perf"), cd = t.column("cd_proportion");
    std::vector<SummaryRow> rows;
    for (std::size_t r = 0; r < t.size(); ++r) {
        SummaryRow row;
        row.strategy = t.text(r, strategy);
        try {
            row.strategy = to_string(parse_strategy(row.strategy));
        } catch (const std::invalid_argument&) {
            t.fail(fmt::format("row {}: unknown strategy '{}'", r + 2, row.strategy));
        }
        row.beta = t.get<double>(r, beta);
        row.seed = t.get<std::uint64_t>(r, seed);
        row.total_budget = t.get<double>(r, budget);
        row.consumed = t.get<double>(r, consumed);
        row.prior_perf = t.get<double>(r, prior);
        row.finetune_perf = t.get<double>(r, finetune);
        row.cd_proportion = t.get<double>(r, cd);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ParetoCell> pareto_cells(std::span<const SummaryRow> rows) {
    std::vector<ParetoCell> cells;
    for (const auto& a : aggregate(rows)) cells.push_back({a.strategy, a.beta, {a.finetune.mean, a.prior.mean}, false});
    std::map<std::string, std::vector<std::size_t>> by_strategy;
    for (std::size_t i = 0; i < cells.size(); ++i) by_strategy[cells[i].strategy].push_back(i);
    for (const auto& [name, members] : by_strategy) {
        std::vector<ParetoPoint> points;
        for (auto i : members) points.push_back(cells[i].point);
        for (auto j : pareto_frontier_indices(points)) cells[members[j]].frontier = true;
    }
    return cells;
}

void write_pareto_svg(std::span<const ParetoCell> cells, const fs::path& path) {
    constexpr double width = 640, height = 480, margin = 60;
    double x0 = 1.0, x1 = 0.0, y0 = 1.0, y1 = 0.0;
    for (const auto& c : cells) {
        x0 = std::min(x0, c.point.finetune);
        x1 = std::max(x1, c.point.finetune);
        y0 = std::min(y0, c.point.prior);
        y1 = std::max(y1, c.point.prior);
    }
    if (cells.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
    const double px = std::max(0.01, (x1 - x0) * 0.1), py = std::max(0.01, (y1 - y0) * 0.1);
    x0 -= px, x1 += px, y0 -= py, y1 += py;
    auto sx = [&](double v) { return margin + (v - x0) / (x1 - x0) * (width - 2 * margin); };
    auto sy = [&](double v) { return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin); };

    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::map<std::string, std::string> colour;
    for (const auto& c : cells)
        if (!colour.count(c.strategy)) colour[c.strategy] = palette[colour.size() % std::size(palette)];

    auto out = open_out(path);
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n", width, height, width, height);
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", margin, height - margin, width - margin);
    out << fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", margin, height - margin, margin);
    out << fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">fine-tune accuracy</text>\n", width / 2, height - 15);
    out << fmt::format("<text x=\"15\" y=\"{0}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 15 {0})\">prior accuracy</text>\n", height / 2);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\">{:.3f}</text>\n", margin, height - margin + 15, x0);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3f}</text>\n", width - margin, height - margin + 15, x1);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3f}</text>\n", margin - 4, height - margin, y0);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3f}</text>\n", margin - 4, margin, y1);

    std::size_t legend = 0;
    for (const auto& [name, col] : colour) {
        std::vector<const ParetoCell*> front;
        for (const auto& c : cells)
            if (c.strategy == name && c.frontier) front.push_back(&c);
        std::sort(front.begin(), front.end(), [](auto* a, auto* b) { return a->point.finetune < b->point.finetune; });
        out << fmt::format("<polyline class=\"frontier-line\" data-strategy=\"{}\" fill=\"none\" stroke=\"{}\" points=\"", name, col);
        for (std::size_t i = 0; i < front.size(); ++i)
            out << fmt::format("{}{:.2f},{:.2f}", i ? " " : "", sx(front[i]->point.finetune), sy(front[i]->point.prior));
        out << "\"/>\n";
        out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>\n", width - margin - 100, margin + 15 * legend++, col, name);
    }
    for (const auto& c : cells) {
        out << fmt::format(
            "<circle class=\"{}\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{}\" fill=\"{}\" data-strategy=\"{}\" data-beta=\"{}\" "
            "data-finetune=\"{}\" data-prior=\"{}\"/>\n",
            c.frontier ? "point frontier" : "point", sx(c.point.finetune), sy(c.point.prior), c.frontier ? 5 : 3, colour[c.strategy],
            c.strategy, csv::real(c.beta), csv::real(c.point.finetune), csv::real(c.point.prior));
    }
    out << "</svg>\n";
}

RunBins read_run_bins(const fs::path& run_dir) {
    const auto config = read_key_values(run_dir / "config.csv");
    auto value = [&](std::string_view key) -> const std::string& {
        const auto it = config.find(key);
        if (it == config.end()) throw std::runtime_error(fmt::format("{}: missing key '{}'", (run_dir / "config.csv").string(), key));
        return it->second;
    };
    RunBins out;
    try {
        out.strategy = to_string(parse_strategy(value("strategy")));
        out.beta = csv::parse<double>(value("beta"));
        out.seed = csv::parse<std::uint64_t>(value("seed"));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(fmt::format("{}: {}", (run_dir / "config.csv").string(), e.what()));
    }

    Table t(run_dir / "bins.csv");
    const auto it_col = t.column("iteration"), bin_col = t.column("bin"), base_col = t.column("base_accuracy"),
               acc_col = t.column("accuracy");
    int last = 0;
    for (std::size_t r = 0; r < t.size(); ++r) last = std::max(last, t.get<int>(r, it_col));
    for (std::size_t r = 0; r < t.size(); ++r) {
        if (t.get<int>(r, it_col) != last) continue;
        const auto bin = t.get<std::size_t>(r, bin_col);
        if (bin != out.base_accuracy.size()) t.fail(fmt::format("row {}: bins out of order", r + 2));
        out.base_accuracy.push_back(t.get<double>(r, base_col));
        out.final_accuracy.push_back(t.get<double>(r, acc_col));
    }
    if (out.base_accuracy.empty()) t.fail("no bin rows");
    return out;
}

std::vector<PartitionKlRow> read_partition_kl_csv(const fs::path& path) {
    Table t(path);
    const auto p = t.column("partition"), k = t.column("num_bins"), kl = t.column("kl"), e = t.column("effective");
    std::vector<PartitionKlRow> rows;
    for (std::size_t r = 0; r < t.size(); ++r)
        rows.push_back({t.text(r, p), t.get<std::size_t>(r, k), t.get<double>(r, kl), t.get<int>(r, e) != 0});
    return rows;
}

}  // namespace mixcd
