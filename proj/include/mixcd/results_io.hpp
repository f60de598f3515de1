#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixcd/harness.hpp"

namespace mixcd {

// Column layouts are documented in docs/csv_schema.md (schema version 1).
inline constexpr int kCsvSchemaVersion = 1;

// First-iteration KL statistic of one diagnostic partition.
struct PartitionKlRow {
    std::string partition;
    std::size_t num_bins = 0;
    double kl = 0.0;
    bool effective = false;
};

std::vector<PartitionKlRow> partition_kl_rows(const Experiment& experiment, const RunResult& result,
                                              std::span<const std::string> partition_specs);

// Directory name of a run inside <out>/runs.
std::string run_tag(const RunConfig& config);

// Writes iterations.csv, bins.csv, config.csv and partition_kl.csv into `dir`.
void write_run(const RunResult& result, const Partition& partition, std::span<const PartitionKlRow> kl,
               const std::filesystem::path& dir);

void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path);
// Throws std::runtime_error naming the file on malformed content.
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

// A seed-averaged point of one (strategy, beta) cell and whether it lies on
// the Pareto frontier of its strategy.
struct ParetoCell {
    std::string strategy;
    double beta = 0.0;
    ParetoPoint point;
    bool frontier = false;
};

std::vector<ParetoCell> pareto_cells(std::span<const SummaryRow> rows);

// Scatter of every cell; frontier markers carry class "frontier".
void write_pareto_svg(std::span<const ParetoCell> cells, const std::filesystem::path& path);

// Final-iteration per-bin accuracies of one run, as stored in bins.csv.
struct RunBins {
    std::string strategy;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> base_accuracy;
    std::vector<double> final_accuracy;
};

RunBins read_run_bins(const std::filesystem::path& run_dir);
std::vector<PartitionKlRow> read_partition_kl_csv(const std::filesystem::path& path);

}  // namespace mixcd
