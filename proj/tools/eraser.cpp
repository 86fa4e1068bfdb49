#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eraser/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Delayed-choice quantum eraser: analytic rates, Monte Carlo and coincidence analysis"};
    app.set_version_flag("--version", std::string(eraser::cli::kVersion));
    app.require_subcommand(1);

    std::string config, out, events, report;
    std::vector<std::string> reports;

    auto* scan = app.add_subcommand("scan", "Write analytic joint rates x_um,r01,r02,r03,r04");
    scan->add_option("config", config, "Run configuration")->required();
    scan->add_option("out", out, "Output CSV")->required();

    auto* simulate = app.add_subcommand("simulate", "Simulate time-tagged clicks to an event CSV");
    simulate->add_option("config", config, "Run configuration")->required();
    simulate->add_option("out", out, "Output event CSV")->required();

    auto* analyze = app.add_subcommand("analyze", "Match coincidences, histogram and fit fringes");
    analyze->add_option("events", events, "Event CSV")->required();
    analyze->add_option("config", config, "Run configuration")->required();
    analyze->add_option("out", out, "Output histogram CSV")->required();
    analyze->add_option("--report", report, "Report path (default <out>.report)");

    auto* rep = app.add_subcommand("report", "Summarize analysis reports with pass/fail rows");
    rep->add_option("reports", reports, "Analysis report files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return eraser::cli::kUsage;
    }

    if (*scan) return eraser::cli::cmd_scan(config, out, std::cerr);
    if (*simulate) return eraser::cli::cmd_simulate(config, out, std::cerr);
    if (*analyze) return eraser::cli::cmd_analyze(events, config, out, report, std::cerr);
    return eraser::cli::cmd_report(reports, std::cout, std::cerr);
}
