#include <CLI11.hpp>

#include "mixcd/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mix-cd rehearsal experiments"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out_dir;
    std::size_t parallel = 0;
    bool verbose = false;

    auto* run = app.add_subcommand("run", "Execute the spec file's single run configuration");
    auto* sweep = app.add_subcommand("sweep", "Execute the spec file's strategy x beta x seed grid");
    auto* report = app.add_subcommand("report", "Summarise a results directory");
    for (auto* cmd : {run, sweep}) {
        cmd->add_option("--spec", spec_path, "Experiment spec file")->required();
        cmd->add_option("--out", out_dir, "Output directory (overrides the spec file)");
        cmd->add_option("--parallel", parallel, "Concurrent runs (overrides the spec file)")->check(CLI::PositiveNumber);
        cmd->add_flag("--verbose", verbose, "Progress on standard error");
    }
    report->add_option("--out", out_dir, "Results directory")->required();
    report->add_flag("--verbose", verbose, "Unused; accepted for symmetry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mixcd::kExitInvalid;
    }

    mixcd::CliOptions options;
    options.verbose = verbose;
    if (!out_dir.empty()) options.out = out_dir;
    if (parallel > 0) options.parallel = parallel;

    if (run->parsed()) return mixcd::cmd_run(spec_path, options);
    if (sweep->parsed()) return mixcd::cmd_sweep(spec_path, options);
    return mixcd::cmd_report(out_dir, options);
}
