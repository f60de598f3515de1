#include "mixcd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "csv.hpp"
#include "mixcd/experiment_spec.hpp"
#include "mixcd/harness.hpp"
#include "mixcd/results_io.hpp"

namespace mixcd {

namespace fs = std::filesystem;

namespace {

// Input problems detected while reading results; reported with exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string cell(double v) { return std::isnan(v) ? std::string() : csv::real(v); }
std::string shown(double v) { return std::isnan(v) ? std::string("-") : fmt::format("{:.4f}", v); }

struct Context {
    ExperimentSpec spec;
    fs::path out;
};

Context prepare(const fs::path& spec_path, const CliOptions& options) {
    Context ctx{load_spec(spec_path), {}};
    if (options.parallel) {
        if (*options.parallel < 1) throw SpecError("--parallel must be >= 1");
        ctx.spec.parallel = *options.parallel;
    }
    ctx.out = options.out ? *options.out : ctx.spec.output_dir;
    return ctx;
}

void save_run(const Experiment& experiment, const ExperimentSpec& spec, const RunResult& result, const fs::path& out) {
    const auto partition = experiment.partition(result.config.partition);
    const auto kl = partition_kl_rows(experiment, result, spec.kl_partitions);
    write_run(result, *partition, kl, out / "runs" / run_tag(result.config));
}

template <typename Body>
int guarded(const CliOptions& options, Body body) {
    auto& err = *options.stderr_stream;
    try {
        return body();
    } catch (const SpecError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int cmd_run(const fs::path& spec_path, const CliOptions& options) {
    return guarded(options, [&] {
        const auto ctx = prepare(spec_path, options);
        auto& log = *options.stderr_stream;
        if (options.verbose) log << "preparing experiment\n";
        const Experiment experiment(ctx.spec.experiment);
        if (options.verbose) log << fmt::format("running {}\n", run_tag(ctx.spec.run));
        const auto result = run(experiment, ctx.spec.run);
        save_run(experiment, ctx.spec, result, ctx.out);
        const SummaryRow row = summary_row(result);
        write_summary_csv(std::span(&row, 1), ctx.out / "summary.csv");
        *options.stdout_stream << fmt::format("prior_perf={} finetune_perf={}\n", csv::real(result.prior_perf()),
                                              csv::real(result.finetune_perf()));
        return kExitOk;
    });
}

int cmd_sweep(const fs::path& spec_path, const CliOptions& options) {
    return guarded(options, [&] {
        const auto ctx = prepare(spec_path, options);
        const auto& spec = ctx.spec;
        auto& log = *options.stderr_stream;
        if (options.verbose) log << "preparing experiment\n";
        const Experiment experiment(spec.experiment);
        fs::create_directories(ctx.out);
        fs::remove(ctx.out / "errors.txt");

        // Grid position of each completed run, for a stable summary order.
        using Key = std::tuple<std::size_t, std::size_t, std::size_t>;
        auto position = [&](const RunConfig& c) {
            const auto s = std::find(spec.strategies.begin(), spec.strategies.end(), c.sampler.strategy) - spec.strategies.begin();
            const auto b = std::find(spec.betas.begin(), spec.betas.end(), c.beta) - spec.betas.begin();
            const auto d = std::find(spec.seeds.begin(), spec.seeds.end(), c.seed) - spec.seeds.begin();
            return Key{static_cast<std::size_t>(s), static_cast<std::size_t>(b), static_cast<std::size_t>(d)};
        };
        std::map<Key, SummaryRow> completed;
        const std::size_t total = spec.strategies.size() * spec.betas.size() * spec.seeds.size();

        SweepOptions sweep_options;
        sweep_options.parallel = spec.parallel;
        sweep_options.on_complete = [&](const RunResult& r) {
            save_run(experiment, spec, r, ctx.out);
            completed[position(r.config)] = summary_row(r);
            if (options.verbose) log << fmt::format("[{}/{}] {}\n", completed.size(), total, run_tag(r.config));
        };

        auto write_summary = [&] {
            std::vector<SummaryRow> rows;
            for (const auto& [key, row] : completed) rows.push_back(row);
            write_summary_csv(rows, ctx.out / "summary.csv");
            return rows;
        };

        for (auto strategy : spec.strategies) {
            RunConfig base = spec.run;
            base.sampler.strategy = strategy;
            try {
                sweep(experiment, base, spec.betas, spec.seeds, sweep_options);
            } catch (const SweepError& e) {
                write_summary();
                std::ofstream manifest(ctx.out / "errors.txt", std::ios::binary);
                manifest << "strategy,beta,seed,message\n";
                manifest << fmt::format("{},{},{},\"{}\"\n", to_string(strategy), csv::real(e.beta), e.seed, e.what());
                log << fmt::format("error: run {} beta={} seed={} failed: {}\n", to_string(strategy), e.beta, e.seed, e.what());
                log << fmt::format("{} of {} runs completed; see {}\n", completed.size(), total, (ctx.out / "errors.txt").string());
                return kExitRuntime;
            }
        }

        const auto rows = write_summary();
        const auto cells = pareto_cells(rows);
        write_pareto_svg(cells, ctx.out / "pareto.svg");
        *options.stdout_stream << fmt::format("{} runs written to {}\n", rows.size(), ctx.out.string());
        return kExitOk;
    });
}

namespace {

void print_table(std::ostream& os, const std::string& title, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    os << title << '\n';
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "  " : "") << fmt::format("{:<{}}", r[c], width[c]);
        os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    os << '\n';
}

void write_table(const fs::path& path, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
}

std::vector<fs::path> run_dirs(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir / "runs")) return out;
    for (const auto& e : fs::directory_iterator(dir / "runs"))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

int cmd_report(const fs::path& dir, const CliOptions& options) {
    return guarded(options, [&]() -> int {
        auto& os = *options.stdout_stream;
        if (!fs::is_directory(dir)) throw InputError(fmt::format("results directory not found: {}", dir.string()));
        if (!fs::exists(dir / "summary.csv")) throw InputError(fmt::format("no summary.csv in {}", dir.string()));

        std::vector<SummaryRow> rows;
        std::vector<RunBins> bins;
        std::map<std::pair<std::string, std::string>, std::vector<PartitionKlRow>> kl;
        try {
            rows = read_summary_csv(dir / "summary.csv");
            for (const auto& run_dir : run_dirs(dir)) {
                bins.push_back(read_run_bins(run_dir));
                for (const auto& row : read_partition_kl_csv(run_dir / "partition_kl.csv"))
                    kl[{row.partition, bins.back().strategy}].push_back(row);
            }
        } catch (const std::runtime_error& e) {
            throw InputError(e.what());
        }
        if (rows.empty()) throw InputError(fmt::format("{} has no runs", (dir / "summary.csv").string()));

        {
            const std::vector<std::string> header{"strategy", "beta", "runs", "finetune_mean", "finetune_se", "prior_mean", "prior_se", "frontier"};
            std::vector<std::vector<std::string>> csv_rows, shown_rows;
            const auto cells = pareto_cells(rows);
            const auto agg = aggregate(rows);
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const auto& a = agg[i];
                csv_rows.push_back({a.strategy, csv::real(a.beta), std::to_string(a.finetune.count), cell(a.finetune.mean),
                                    cell(a.finetune.se), cell(a.prior.mean), cell(a.prior.se), cells[i].frontier ? "1" : "0"});
                shown_rows.push_back({a.strategy, csv::real(a.beta), std::to_string(a.finetune.count), shown(a.finetune.mean),
                                      shown(a.finetune.se), shown(a.prior.mean), shown(a.prior.se), cells[i].frontier ? "*" : ""});
            }
            write_table(dir / "report_pareto.csv", header, csv_rows);
            print_table(os, "Pareto points (seed-averaged)", header, shown_rows);
        }

        {
            const std::vector<std::string> header{"strategy", "beta", "runs", "cd_proportion_mean", "cd_proportion_se"};
            std::vector<std::vector<std::string>> csv_rows, shown_rows;
            for (const auto& r : cd_proportion_report(rows)) {
                csv_rows.push_back({r.strategy, csv::real(r.beta), std::to_string(r.proportion.count), cell(r.proportion.mean), cell(r.proportion.se)});
                shown_rows.push_back({r.strategy, csv::real(r.beta), std::to_string(r.proportion.count), shown(r.proportion.mean), shown(r.proportion.se)});
            }
            write_table(dir / "report_cd_proportion.csv", header, csv_rows);
            print_table(os, "Collateral damage among rehearsed samples", header, shown_rows);
        }

        {
            std::map<std::pair<std::string, double>, std::vector<const RunBins*>> groups;
            for (const auto& b : bins) groups[{b.strategy, b.beta}].push_back(&b);
            const std::vector<std::string> header{"strategy", "beta", "bin", "base_accuracy", "final_accuracy", "delta"};
            const std::vector<std::string> balance_header{"strategy", "beta", "runs", "delta_std_mean", "delta_std_se"};
            std::vector<std::vector<std::string>> csv_rows, shown_rows, balance_csv, balance_shown;
            for (const auto& [key, members] : groups) {
                const std::size_t k = members.front()->base_accuracy.size();
                std::vector<double> stds;
                for (const auto* m : members) {
                    if (m->base_accuracy.size() != k)
                        throw InputError(fmt::format("runs of {} beta={} disagree on the number of bins", key.first, key.second));
                    stds.push_back(per_bin_report(m->base_accuracy, m->final_accuracy).delta_std);
                }
                for (std::size_t b = 0; b < k; ++b) {
                    std::vector<double> base, fin, delta;
                    for (const auto* m : members) {
                        base.push_back(m->base_accuracy[b]);
                        fin.push_back(m->final_accuracy[b]);
                        delta.push_back(m->final_accuracy[b] - m->base_accuracy[b]);
                    }
                    const auto mb = mean_se(base).mean, mf = mean_se(fin).mean, md = mean_se(delta).mean;
                    csv_rows.push_back({key.first, csv::real(key.second), std::to_string(b), cell(mb), cell(mf), cell(md)});
                    shown_rows.push_back({key.first, csv::real(key.second), std::to_string(b), shown(mb), shown(mf), shown(md)});
                }
                const auto s = mean_se(stds);
                balance_csv.push_back({key.first, csv::real(key.second), std::to_string(s.count), cell(s.mean), cell(s.se)});
                balance_shown.push_back({key.first, csv::real(key.second), std::to_string(s.count), shown(s.mean), shown(s.se)});
            }
            write_table(dir / "report_per_bin.csv", header, csv_rows);
            write_table(dir / "report_bin_balance.csv", balance_header, balance_csv);
            print_table(os, "Per-bin prior accuracy change (final iteration, seed-averaged)", header, shown_rows);
            print_table(os, "Cross-bin standard deviation of accuracy deltas", balance_header, balance_shown);
        }

        {
            const std::vector<std::string> header{"partition", "strategy", "num_bins", "runs", "kl_mean", "kl_se", "effective_runs", "effective"};
            std::vector<std::vector<std::string>> csv_rows, shown_rows;
            for (const auto& [key, members] : kl) {
                std::vector<double> values;
                std::size_t effective_runs = 0;
                for (const auto& m : members) {
                    values.push_back(m.kl);
                    if (m.effective) ++effective_runs;
                }
                const auto s = mean_se(values);
                const bool effective = s.mean > kEffectivenessThreshold;
                csv_rows.push_back({key.first, key.second, std::to_string(members.front().num_bins), std::to_string(members.size()),
                                    cell(s.mean), cell(s.se), std::to_string(effective_runs), effective ? "1" : "0"});
                shown_rows.push_back({key.first, key.second, std::to_string(members.front().num_bins), std::to_string(members.size()),
                                      fmt::format("{:.5f}", s.mean), fmt::format("{:.5f}", s.se), std::to_string(effective_runs),
                                      effective ? "yes" : "no"});
            }
            write_table(dir / "report_partition_kl.csv", header, csv_rows);
            print_table(os, "Partition effectiveness (first-iteration KL, threshold 0.01)", header, shown_rows);
        }
        return kExitOk;
    });
}

}  // namespace mixcd
