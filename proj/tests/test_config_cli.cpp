#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "gtest/gtest.h"

#include "eraser/cli.hpp"
#include "eraser/config.hpp"

using namespace eraser;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("eraser_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(file(name), std::ios::binary) << text;
        return file(name);
    }

private:
    fs::path path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct ScanRow {
    int x;
    double r[4];
};

std::vector<ScanRow> read_scan(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# biphoton-eraser v0.1.0 config_digest=", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "x_um,r01,r02,r03,r04");
    std::vector<ScanRow> rows;
    while (std::getline(in, line)) {
        ScanRow r{};
        char c;
        std::istringstream s(line);
        s >> r.x >> c >> r.r[0] >> c >> r.r[1] >> c >> r.r[2] >> c >> r.r[3];
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST(config, empty_text_gives_defaults) {
    const auto c = parse_config("# nothing\n\n");
    EXPECT_EQ(c, RunConfig{});
    const auto cc = c.coincidence();
    EXPECT_EQ(cc.expected_delay_ps, 8339);
    EXPECT_EQ(cc.window_ps, 3000);
    EXPECT_EQ(cc.x_bin_um, 50);
    const auto g = c.geometry();
    EXPECT_NEAR(g.fringe_period(), 501.57e-6, 0.01e-6);
}

TEST(config, parses_documented_keys) {
    const auto c = parse_config("slit_sep_mm = 0.7\nlambda_signal_nm=702.2 # comment\n  delay_m = 3\n"
                                "jitter_ns = 0.5\nwindow_ns = 2\nfocal_mm = 400\npairs = 10\nseed = 7\n"
                                "match_policy = first\ncorrections = on\nx_fixed_mm = 0.1\n");
    EXPECT_EQ(c.delay_m, 3.0);
    EXPECT_EQ(c.jitter_ns, 0.5);
    EXPECT_EQ(c.coincidence().window_ps, 2000);
    EXPECT_EQ(c.focal_mm, 400.0);
    EXPECT_EQ(c.pairs, 10u);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.match_policy, MatchPolicy::First);
    EXPECT_TRUE(c.corrections);
    ASSERT_TRUE(c.x_fixed_mm);
    EXPECT_NEAR(c.sim().fixed_x.value(), 1e-4, 1e-18);
}

TEST(config, errors_name_the_key) {
    auto key_of = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return e.key();
        }
        return std::string("<none>");
    };
    EXPECT_EQ(key_of("slit_spacing_mm = 0.7\n"), "slit_spacing_mm");
    EXPECT_EQ(key_of("seed = 1\nseed = 2\n"), "seed");
    EXPECT_EQ(key_of("pairs = -1\n"), "pairs");
    EXPECT_EQ(key_of("pairs = 1.5\n"), "pairs");
    EXPECT_EQ(key_of("window_ns = 0\n"), "window_ns");
    EXPECT_EQ(key_of("jitter_ns = abc\n"), "jitter_ns");
    EXPECT_EQ(key_of("efficiency = 1.5\n"), "efficiency");
    EXPECT_EQ(key_of("slit_sep_mm = 0.2\n"), "slit_sep_mm");
    EXPECT_EQ(key_of("lambda_pump_nm = 400\n"), "lambda_pump_nm");
    EXPECT_EQ(key_of("match_policy = random\n"), "match_policy");
    EXPECT_EQ(key_of("corrections = maybe\n"), "corrections");
    EXPECT_EQ(key_of("corrections = on\nscan_step_um = 20\n"), "scan_step_um");
    EXPECT_THROW(parse_config("just words\n"), ConfigError);
}

TEST(config, round_trip) {
    std::vector<std::string> texts = {
        "",
        "slit_width_mm = 0.123456789\nx_fixed_mm = -0.37\nexpected_delay_ps = 9000\n",
        "corrections = on\nmatch_policy = first\njitter_ns = 0\nseed = 18446744073709551615\n",
    };
    for (const auto& t : texts) {
        const auto c = parse_config(t);
        const auto again = parse_config(to_text(c));
        EXPECT_EQ(again, c);
        EXPECT_EQ(to_text(again), to_text(c));
        EXPECT_EQ(config_digest(again), config_digest(c));
    }
    EXPECT_NE(config_digest(parse_config("seed = 1\n")), config_digest(parse_config("seed = 2\n")));
    EXPECT_EQ(config_digest(RunConfig{}).size(), 16u);
}

TEST(cli, scan_default_has_central_maximum_and_full_period) {
    TempDir dir;
    const auto cfg = dir.write("c.conf", "");
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_scan(cfg, dir.file("scan.csv"), log), cli::kOk) << log.str();
    const auto rows = read_scan(dir.file("scan.csv"));
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows.front().x, -1250);
    EXPECT_EQ(rows.back().x, 1250);

    const ScanRow* zero = nullptr;
    double max01 = 0, min02_central = 1e300;
    const double period_um = RunConfig{}.geometry().fringe_period() * 1e6;
    for (const auto& r : rows) {
        max01 = std::max(max01, r.r[0]);
        if (std::abs(r.x) <= period_um / 2) min02_central = std::min(min02_central, r.r[1]);
        if (r.x == 0) zero = &r;
        EXPECT_NEAR(r.r[0] + r.r[1], r.r[2] + r.r[3], 1e-12 * (r.r[0] + r.r[1]) + 1e-300);
        EXPECT_EQ(r.r[2], r.r[3]);
    }
    ASSERT_NE(zero, nullptr);
    EXPECT_EQ(zero->r[0], max01);
    EXPECT_EQ(zero->r[1], min02_central);

    // Adjacent r01 maxima sit one fringe period apart once the envelope slope
    // is divided out (r01 + r02 is the envelope).
    auto fringe = [&](std::size_t i) { return rows[i].r[0] / (rows[i].r[0] + rows[i].r[1]); };
    std::vector<int> maxima;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i)
        if (fringe(i) > fringe(i - 1) && fringe(i) >= fringe(i + 1)) maxima.push_back(rows[i].x);
    ASSERT_GE(maxima.size(), 3u);
    const auto centre = std::find(maxima.begin(), maxima.end(), 0);
    ASSERT_NE(centre, maxima.end());
    EXPECT_NEAR(*(centre + 1) - *centre, 502, 5);
    EXPECT_NEAR(*centre - *(centre - 1), 502, 5);
}

TEST(cli, scan_with_corrections_lowers_contrast) {
    TempDir dir;
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_scan(dir.write("c.conf", "corrections = on\n"), dir.file("s.csv"), log), cli::kOk);
    const auto rows = read_scan(dir.file("s.csv"));
    for (const auto& r : rows)
        if (r.x == 0) {
            EXPECT_GT(r.r[1], 0.05 * r.r[0]);
        }
}

TEST(cli, config_errors_exit_2) {
    TempDir dir;
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_scan(dir.write("bad.conf", "bogus_key = 1\n"), dir.file("o.csv"), log), cli::kUsage);
    EXPECT_NE(log.str().find("bogus_key"), std::string::npos);
    EXPECT_EQ(cli::cmd_simulate(dir.file("missing.conf"), dir.file("o.csv"), log), cli::kUsage);
}

TEST(cli, io_errors_exit_3) {
    TempDir dir;
    std::ostringstream log;
    const auto cfg = dir.write("c.conf", "pairs = 10\n");
    EXPECT_EQ(cli::cmd_simulate(cfg, dir.file("no/such/dir/e.csv"), log), cli::kIo);
    EXPECT_EQ(cli::cmd_analyze(dir.file("missing.csv"), cfg, dir.file("h.csv"), "", log), cli::kIo);
    const auto bad = dir.write("bad.csv", "event_id,detector,time_ps,x_um\n0,D1,5,3\n");
    EXPECT_EQ(cli::cmd_analyze(bad, cfg, dir.file("h.csv"), "", log), cli::kIo);
}

TEST(cli, simulate_bookkeeping_and_determinism) {
    TempDir dir;
    std::ostringstream log;
    const auto cfg = dir.write("c.conf", "pairs = 1000\njitter_ns = 0\n");
    ASSERT_EQ(cli::cmd_simulate(cfg, dir.file("a.csv"), log), cli::kOk);
    ASSERT_EQ(cli::cmd_simulate(cfg, dir.file("b.csv"), log), cli::kOk);
    const auto a = slurp(dir.file("a.csv"));
    EXPECT_EQ(a, slurp(dir.file("b.csv")));
    EXPECT_EQ(a.rfind("# biphoton-eraser v0.1.0 config_digest=", 0), 0u);
    std::istringstream in(a);
    const auto ev = ingest_events(in);
    EXPECT_EQ(std::count_if(ev.begin(), ev.end(), [](const auto& e) { return e.detector == Detector::D0; }),
              1000);
    EXPECT_EQ(a.find('\r'), std::string::npos);
    EXPECT_EQ(a.find(" \n"), std::string::npos);
}

TEST(cli, analyze_empty_file_is_degenerate) {
    TempDir dir;
    std::ostringstream log;
    const auto cfg = dir.write("c.conf", "");
    const auto ev = dir.write("e.csv", "event_id,detector,time_ps,x_um\n");
    EXPECT_EQ(cli::cmd_analyze(ev, cfg, dir.file("h.csv"), "", log), cli::kDegenerate);
    EXPECT_NE(log.str().find("insufficient counts"), std::string::npos);
}

TEST(cli, analyze_and_report_round_trip) {
    TempDir dir;
    std::ostringstream log;
    const auto cfg = dir.write("c.conf", "pairs = 300000\n");
    ASSERT_EQ(cli::cmd_simulate(cfg, dir.file("e.csv"), log), cli::kOk);
    ASSERT_EQ(cli::cmd_analyze(dir.file("e.csv"), cfg, dir.file("h.csv"), "", log), cli::kOk) << log.str();

    const auto hist = slurp(dir.file("h.csv"));
    EXPECT_NE(hist.find("\npair,x_center_um,count\n"), std::string::npos);
    std::ifstream rin(dir.file("h.csv.report"));
    const auto rep = cli::read_report(rin);
    EXPECT_EQ(rep.at("fit.0-1.status"), "ok");
    EXPECT_GE(std::stod(rep.at("fit.0-1.visibility")), 0.95);
    EXPECT_LE(std::abs(std::stod(rep.at("mean_gap_ps")) - 8339), 10.0);
    // Poisson pileup only: pair rate times window.
    EXPECT_NEAR(std::stod(rep.at("accidental_per_d0")), 3e-4, 1.5e-4);

    std::ostringstream table;
    ASSERT_EQ(cli::cmd_report({dir.file("h.csv.report")}, table, log), cli::kOk);
    EXPECT_EQ(table.str().find("FAIL"), std::string::npos) << table.str();
    EXPECT_NE(table.str().find("PASS"), std::string::npos);

    std::ostringstream err;
    EXPECT_EQ(cli::cmd_report({dir.file("nope.report")}, table, err), cli::kUsage);
    EXPECT_EQ(cli::cmd_report({}, table, err), cli::kUsage);
}

TEST(cli, tiny_window_matches_nothing_but_succeeds) {
    TempDir dir;
    std::ostringstream log;
    const auto cfg = dir.write("c.conf", "pairs = 20000\nwindow_ns = 0.001\n");
    ASSERT_EQ(cli::cmd_simulate(cfg, dir.file("e.csv"), log), cli::kOk);
    ASSERT_EQ(cli::cmd_analyze(dir.file("e.csv"), cfg, dir.file("h.csv"), "", log), cli::kOk);
    std::ifstream rin(dir.file("h.csv.report"));
    const auto rep = cli::read_report(rin);
    EXPECT_EQ(std::stol(rep.at("window_ps")), 1);
    EXPECT_LT(std::stod(rep.at("matched_fraction")), 0.01);
    EXPECT_NE(rep.at("fit.0-1.status").find("degenerate"), std::string::npos);
}

TEST(cli, report_with_corrections_uses_reduced_threshold) {
    TempDir dir;
    std::ostringstream log;
    const auto cfg = dir.write("c.conf", "pairs = 300000\ncorrections = on\n");
    ASSERT_EQ(cli::cmd_simulate(cfg, dir.file("e.csv"), log), cli::kOk);
    ASSERT_EQ(cli::cmd_analyze(dir.file("e.csv"), cfg, dir.file("h.csv"), "", log), cli::kOk);
    std::ifstream rin(dir.file("h.csv.report"));
    const auto rep = cli::read_report(rin);
    const double factor = std::stod(rep.at("visibility_factor"));
    const double v01 = std::stod(rep.at("fit.0-1.visibility"));
    EXPECT_LT(factor, 0.9);
    EXPECT_LT(v01, 0.95);
    EXPECT_NEAR(v01, factor, 0.03);
    std::ostringstream table;
    ASSERT_EQ(cli::cmd_report({dir.file("h.csv.report")}, table, log), cli::kOk);
    EXPECT_EQ(table.str().find("FAIL"), std::string::npos) << table.str();
}

TEST(cli, repeated_seeds_agree_within_errors) {
    TempDir dir;
    std::ostringstream log;
    std::vector<std::string> reports;
    for (int seed : {1, 2}) {
        const auto cfg = dir.write(fmt::format("c{}.conf", seed), fmt::format("pairs = 200000\nseed = {}\n", seed));
        const auto ev = dir.file(fmt::format("e{}.csv", seed));
        const auto h = dir.file(fmt::format("h{}.csv", seed));
        ASSERT_EQ(cli::cmd_simulate(cfg, ev, log), cli::kOk);
        ASSERT_EQ(cli::cmd_analyze(ev, cfg, h, "", log), cli::kOk);
        reports.push_back(h + ".report");
    }
    std::ostringstream table;
    ASSERT_EQ(cli::cmd_report(reports, table, log), cli::kOk);
    EXPECT_NE(table.str().find("V01 agreement [0] vs [1]"), std::string::npos);
    EXPECT_EQ(table.str().find("FAIL"), std::string::npos) << table.str();
}
