#pragma once

#include <cstddef>
#include <filesystem>
#include <iostream>
#include <optional>

namespace mixcd {

struct CliOptions {
    // Overrides the spec file's [output] dir.
    std::optional<std::filesystem::path> out;
    // Overrides the spec file's [sweep] parallel.
    std::optional<std::size_t> parallel;
    bool verbose = false;
    std::ostream* stdout_stream = &std::cout;
    std::ostream* stderr_stream = &std::cerr;
};

// Exit codes: 0 success, 1 validation or input error, 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

// One run of the spec file's [run] configuration into <out>/runs/<tag>, plus
// <out>/summary.csv.
int cmd_run(const std::filesystem::path& spec_path, const CliOptions& options = {});

// Every (strategy, beta, seed) cell, then <out>/summary.csv and
// <out>/pareto.svg. A failing cell stops the sweep; finished runs and the
// summary of completed cells are kept and <out>/errors.txt names the failure.
int cmd_sweep(const std::filesystem::path& spec_path, const CliOptions& options = {});

// Pareto, CD-proportion, per-bin and partition-KL tables of a results
// directory, printed and written as report_*.csv inside it.
int cmd_report(const std::filesystem::path& results_dir, const CliOptions& options = {});

}  // namespace mixcd
