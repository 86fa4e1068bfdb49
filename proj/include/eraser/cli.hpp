#pragma once

// Command implementations behind the `eraser` tool. Each returns a process
// exit code: 0 success, 2 config/usage, 3 I/O, 4 analysis degenerate.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eraser/coincidence.hpp"
#include "eraser/config.hpp"
#include "eraser/events.hpp"
#include "eraser/fringe_model.hpp"
#include "eraser/montecarlo.hpp"

namespace eraser::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kDegenerate = 4 };

inline std::string provenance_line(const RunConfig& c) {
    return fmt::format("# biphoton-eraser v{} config_digest={}\n", kVersion, config_digest(c));
}

/// Acceptance thresholds echoed by the report.
struct Thresholds {
    double min_visibility_fringe = 0.95;   // times the expected visibility factor
    double max_visibility_flat = 0.02;
    double max_phase_error = 0.05;         // rad, |phi2 - phi1 - pi|
    double max_gap_error_ps = 10.0;
};

namespace detail {

inline bool load_config(const std::string& path, RunConfig& out, std::ostream& log) {
    std::ifstream in(path);
    if (!in) {
        log << "error: cannot read config '" << path << "'\n";
        return false;
    }
    try {
        out = parse_config(in);
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << "\n";
        return false;
    }
    return true;
}

inline std::string num(double v) { return std::isfinite(v) ? fmt::format("{}", v) : "n/a"; }

}  // namespace detail

/// Analytic joint rates on the config's x range: `x_um,r01,r02,r03,r04`.
inline int cmd_scan(const std::string& config_path, const std::string& out_path, std::ostream& log) {
    RunConfig cfg;
    if (!detail::load_config(config_path, cfg, log)) return kUsage;
    const auto g = cfg.geometry();
    const auto lo = static_cast<std::int32_t>(std::llround(cfg.x_min_mm * 1000.0));
    const auto hi = static_cast<std::int32_t>(std::llround(cfg.x_max_mm * 1000.0));
    const SimConfig sim = cfg.sim();
    const SmoothedRates rates(g, sim.aperture(), sim.divergence(), lo * kMicrometer, hi * kMicrometer);

    std::string buf = provenance_line(cfg);
    buf += "x_um,r01,r02,r03,r04\n";
    for (std::int32_t x = lo; x <= hi; x += cfg.scan_step_um) {
        const auto r = rates.at(x * kMicrometer);
        fmt::format_to(std::back_inserter(buf), "{},{},{},{},{}\n", x, r[0], r[1], r[2], r[3]);
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out || !(out << buf) || !out.flush()) {
        log << "error: cannot write '" << out_path << "'\n";
        return kIo;
    }
    return kOk;
}

/// Runs the Monte Carlo and writes the event CSV.
inline int cmd_simulate(const std::string& config_path, const std::string& out_path, std::ostream& log) {
    RunConfig cfg;
    if (!detail::load_config(config_path, cfg, log)) return kUsage;
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        log << "error: cannot write '" << out_path << "'\n";
        return kIo;
    }
    SimSummary summary;
    {
        out << provenance_line(cfg);
        EventCsvWriter writer(out);
        writer.header();
        try {
            summary = run_simulation(cfg.sim(), writer);
        } catch (const InvalidParameter& e) {
            log << "error: " << e.what() << "\n";
            return kUsage;
        }
    }
    if (!out.flush()) {
        log << "error: write to '" << out_path << "' failed\n";
        return kIo;
    }
    log << fmt::format("pairs {}\nseed {}\nsteps {}\n", summary.pairs_emitted, summary.seed, summary.steps);
    for (int d = 0; d < 5; ++d)
        log << fmt::format("clicks {} {}\n", to_string(static_cast<Detector>(d)),
                           summary.clicks[static_cast<std::size_t>(d)]);
    return kOk;
}

/// Per-channel results written by cmd_analyze.
struct ChannelReport {
    std::string name;
    std::string status = "ok";
    FringeFit fit;
    double chi2_analytic = std::nan("");
};

/// Ingest, match, histogram and fit. Writes the histogram CSV to `out_path`
/// and the report block to `report_path` (default `<out_path>.report`).
inline int cmd_analyze(const std::string& events_path, const std::string& config_path,
                       const std::string& out_path, std::string report_path, std::ostream& log) {
    RunConfig cfg;
    if (!detail::load_config(config_path, cfg, log)) return kUsage;
    if (report_path.empty()) report_path = out_path + ".report";

    std::ifstream in(events_path, std::ios::binary);
    if (!in) {
        log << "error: cannot read events '" << events_path << "'\n";
        return kIo;
    }
    std::vector<DetectionEvent> events;
    try {
        events = ingest_events(in);
    } catch (const ParseError& e) {
        log << "error: " << events_path << ": " << e.what() << "\n";
        return kIo;
    }

    const CoincidenceConfig cc = cfg.coincidence();
    const auto match = match_coincidences(events, cc);
    if (match.stats.d0_total < 1000) {
        log << "error: insufficient counts (" << match.stats.d0_total << " D0 clicks, need >= 1000)\n";
        return kDegenerate;
    }

    const SimConfig sim = cfg.sim();
    const auto settings = sim.settings();
    const auto x_lo = static_cast<std::int32_t>(std::llround(settings.front() / kMicrometer));
    const auto x_hi = static_cast<std::int32_t>(std::llround(settings.back() / kMicrometer));
    FringeHistogram hist = histogram(match.pairs, cc, x_lo, x_hi);
    hist.unmatched_d0 = match.stats.unmatched_d0;

    std::string accidental = "n/a";
    try {
        const auto acc = accidental_rate_estimate(events, cc, 10);
        hist.accidental_estimate = acc.per_d0;
        accidental = detail::num(acc.per_d0);
    } catch (const InsufficientData&) {
    }

    const auto g = cfg.geometry();
    const auto x = hist.x_m();
    const SmoothedRates model(g, sim.aperture(), sim.divergence(), settings.front(), settings.back());
    std::vector<ChannelReport> channels;
    for (std::size_t c = 0; c < 5; ++c) {
        ChannelReport r;
        r.name = c < 4 ? FringeHistogram::kPairNames[c] : "01+02";
        const auto counts = c < 4 ? hist.channel(c) : hist.sum(0, 1);
        try {
            r.fit = fit_fringe(x, counts, g);
        } catch (const FitDegenerate& e) {
            r.status = std::string("degenerate: ") + e.what();
        }
        if (r.status == "ok") {
            std::vector<double> shape(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const auto rr = model.at(x[i]);
                shape[i] = c < 4 ? rr[c] : rr[0] + rr[1];
            }
            r.chi2_analytic = chi2_against_shape(counts, shape);
        }
        channels.push_back(r);
    }

    double gap_sum = 0.0, gap_sq = 0.0;
    for (const auto& p : match.pairs) {
        const auto gap = static_cast<double>(p.gap_ps());
        gap_sum += gap;
        gap_sq += gap * gap;
    }
    const auto n_match = static_cast<double>(match.pairs.size());
    const double gap_mean = n_match > 0 ? gap_sum / n_match : std::nan("");
    const double gap_std =
        n_match > 1 ? std::sqrt(std::max(0.0, (gap_sq - n_match * gap_mean * gap_mean) / (n_match - 1)))
                    : std::nan("");

    std::string rep = provenance_line(cfg);
    auto kv = [&rep](std::string_view k, const std::string& v) {
        fmt::format_to(std::back_inserter(rep), "{} = {}\n", k, v);
    };
    kv("seed", fmt::format("{}", cfg.seed));
    kv("corrections", cfg.corrections ? "on" : "off");
    kv("visibility_factor", detail::num(cfg.visibility_factor()));
    kv("expected_delay_ps", fmt::format("{}", cc.expected_delay_ps));
    kv("window_ps", fmt::format("{}", cc.window_ps));
    kv("d0_clicks", fmt::format("{}", match.stats.d0_total));
    kv("matched", fmt::format("{}", match.stats.matched));
    kv("unmatched_d0", fmt::format("{}", match.stats.unmatched_d0));
    kv("matched_fraction", detail::num(static_cast<double>(match.stats.matched) /
                                       static_cast<double>(match.stats.d0_total)));
    kv("accidental_per_d0", accidental);
    kv("mean_gap_ps", detail::num(gap_mean));
    kv("gap_std_ps", detail::num(gap_std));
    for (const auto& r : channels) {
        const std::string p = "fit." + r.name + ".";
        kv(p + "status", r.status);
        if (r.status != "ok") continue;
        kv(p + "visibility", detail::num(r.fit.visibility));
        kv(p + "visibility_err", detail::num(r.fit.visibility_err));
        kv(p + "phase", detail::num(r.fit.phase));
        kv(p + "chi2_dof", detail::num(r.fit.chi2_dof));
        kv(p + "chi2_analytic", detail::num(r.chi2_analytic));
    }
    if (channels[0].status == "ok" && channels[1].status == "ok")
        kv("phase_diff_02_01", detail::num(wrap_phase(channels[1].fit.phase - channels[0].fit.phase)));

    std::ofstream hout(out_path, std::ios::binary);
    if (hout) {
        hout << provenance_line(cfg);
        hist.write_csv(hout);
    }
    std::ofstream rout(report_path, std::ios::binary);
    if (!hout || !hout.flush() || !rout || !(rout << rep) || !rout.flush()) {
        log << "error: cannot write analysis outputs\n";
        return kIo;
    }
    log << rep;
    return kOk;
}

/// Parsed analysis report (key = value lines).
inline std::map<std::string, std::string> read_report(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return kv;
}

/// Summary table of one or more analysis reports with pass/fail rows.
inline int cmd_report(const std::vector<std::string>& report_paths, std::ostream& out, std::ostream& log,
                      Thresholds th = {}) {
    if (report_paths.empty()) {
        log << "error: no analysis reports given\n";
        return kUsage;
    }
    std::vector<std::map<std::string, std::string>> reports;
    for (const auto& p : report_paths) {
        std::ifstream in(p);
        if (!in) {
            log << "error: missing analysis report '" << p << "'\n";
            return kUsage;
        }
        reports.push_back(read_report(in));
    }

    auto value = [](const std::map<std::string, std::string>& r, const std::string& k) {
        const auto it = r.find(k);
        if (it == r.end()) return std::nan("");
        try {
            return std::stod(it->second);
        } catch (...) {
            return std::nan("");
        }
    };

    std::string buf = fmt::format("{:<44} {:>14} {:>14}  {}\n", "criterion", "threshold", "value", "result");
    auto row = [&buf](const std::string& name, const std::string& thr, double v, bool pass) {
        fmt::format_to(std::back_inserter(buf), "{:<44} {:>14} {:>14}  {}\n", name, thr,
                       std::isfinite(v) ? fmt::format("{:.6g}", v) : "n/a",
                       pass && std::isfinite(v) ? "PASS" : "FAIL");
    };

    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        fmt::format_to(std::back_inserter(buf), "[{}] seed={} corrections={}\n", report_paths[i],
                       r.count("seed") ? r.at("seed") : "?", r.count("corrections") ? r.at("corrections") : "?");
        const double factor = std::isfinite(value(r, "visibility_factor")) ? value(r, "visibility_factor") : 1.0;
        const double vmin = th.min_visibility_fringe * factor;
        const double v01 = value(r, "fit.0-1.visibility");
        const double v02 = value(r, "fit.0-2.visibility");
        row("V01 (fringe)", fmt::format(">= {:.4g}", vmin), v01, v01 >= vmin);
        row("V02 (anti-fringe)", fmt::format(">= {:.4g}", vmin), v02, v02 >= vmin);
        const double dphi = std::abs(wrap_phase(value(r, "phase_diff_02_01") - kPi));
        row("|phi02 - phi01 - pi| (rad)", fmt::format("<= {}", th.max_phase_error), dphi,
            dphi <= th.max_phase_error);
        const std::pair<const char*, const char*> flat[] = {
            {"0-3", "V03 (which-path)"}, {"0-4", "V04 (which-path)"}, {"01+02", "V(01+02) (singles sum)"}};
        for (const auto& [key, label] : flat) {
            const double v = value(r, std::string("fit.") + key + ".visibility");
            row(label, fmt::format("<= {}", th.max_visibility_flat), v, v <= th.max_visibility_flat);
        }
        const double gap_err = std::abs(value(r, "mean_gap_ps") - value(r, "expected_delay_ps"));
        row("|mean gap - delay| (ps)", fmt::format("<= {}", th.max_gap_error_ps), gap_err,
            gap_err <= th.max_gap_error_ps);
        row("matched fraction", "info", value(r, "matched_fraction"), true);
        row("accidentals per D0", "info", value(r, "accidental_per_d0"), true);
    }
    for (std::size_t i = 0; i < reports.size(); ++i)
        for (std::size_t j = i + 1; j < reports.size(); ++j) {
            const double d = std::abs(value(reports[i], "fit.0-1.visibility") -
                                      value(reports[j], "fit.0-1.visibility"));
            const double s = std::hypot(value(reports[i], "fit.0-1.visibility_err"),
                                        value(reports[j], "fit.0-1.visibility_err"));
            row(fmt::format("V01 agreement [{}] vs [{}]", i, j), fmt::format("<= {:.3g}", 3.0 * s), d,
                d <= 3.0 * s);
        }
    out << buf;
    return kOk;
}

}  // namespace eraser::cli
