#pragma once

// Flat `key = value` run configuration. Values are in the units named by the
// key suffix; `#` starts a comment. Unknown or repeated keys are rejected.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "eraser/amplitudes.hpp"
#include "eraser/apparatus.hpp"
#include "eraser/coincidence.hpp"
#include "eraser/constants.hpp"
#include "eraser/montecarlo.hpp"

namespace eraser {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : "config key '" + key + "': " + what),
          key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct RunConfig {
    // apparatus
    double slit_width_mm = 0.3;
    double slit_sep_mm = 0.7;
    double focal_mm = 500.0;
    double lambda_signal_nm = 702.2;
    double lambda_pump_nm = 351.1;
    double path_l0_m = 1.0;
    double delay_m = 2.5;
    double aperture_mm = 0.10;
    double divergence_mm = 0.05;
    double offset_d3_um = 0.0;
    double offset_d4_um = 0.0;
    bool corrections = false;
    // biphoton
    double dl_window_fs = 300.0;
    // simulation
    std::uint64_t pairs = 1'000'000;
    std::uint64_t seed = 42;
    double pair_rate_hz = 1e5;
    double jitter_ns = 1.0;
    double dark_rate_hz = 0.0;
    double efficiency = 1.0;
    double x_min_mm = -1.25;
    double x_max_mm = 1.25;
    double x_step_mm = 0.05;
    std::optional<double> x_fixed_mm;
    // analysis
    double window_ns = 3.0;
    MatchPolicy match_policy = MatchPolicy::Closest;
    std::int32_t x_bin_um = 50;
    std::optional<std::int64_t> expected_delay_ps;
    // analytic scan
    std::int32_t scan_step_um = 5;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    ApparatusGeometry geometry() const {
        ApparatusGeometry g;
        g.slit_width_a = slit_width_mm * kMillimeter;
        g.slit_sep_d = slit_sep_mm * kMillimeter;
        g.focal_f = focal_mm * kMillimeter;
        g.lambda_signal = lambda_signal_nm * kNanometer;
        g.lambda_pump = lambda_pump_nm * kNanometer;
        g.path_l0 = path_l0_m;
        g.path_li = path_l0_m + delay_m;
        g.detector_aperture_w = aperture_mm * kMillimeter;
        g.pump_divergence_sigma = divergence_mm * kMillimeter;
        g.offset_d3 = offset_d3_um * kMicrometer;
        g.offset_d4 = offset_d4_um * kMicrometer;
        return g;
    }

    BiphotonPacket packet() const {
        return BiphotonPacket::normalized(geometry(), dl_window_fs * kFemtosecond);
    }

    SimConfig sim() const {
        SimConfig s;
        s.pairs = pairs;
        s.seed = seed;
        s.pair_rate = pair_rate_hz;
        s.jitter_sigma = jitter_ns * 1e-9;
        s.dark_rate_per_detector = dark_rate_hz;
        s.efficiency = efficiency;
        s.corrections = corrections;
        s.geometry = geometry();
        s.packet = packet();
        if (x_fixed_mm) s.fixed_x = *x_fixed_mm * kMillimeter;
        s.scan = {x_min_mm * kMillimeter, x_max_mm * kMillimeter, x_step_mm * kMillimeter};
        return s;
    }

    CoincidenceConfig coincidence() const {
        CoincidenceConfig c;
        c.expected_delay_ps = expected_delay_ps
                                  ? *expected_delay_ps
                                  : std::llround(delay_m / kSpeedOfLight / kPicosecond);
        c.window_ps = std::llround(window_ns * 1000.0);
        c.matching_policy = match_policy;
        c.x_bin_um = x_bin_um;
        return c;
    }

    /// Expected fringe-visibility factor from aperture and divergence.
    double visibility_factor() const {
        if (!corrections) return 1.0;
        const auto g = geometry();
        return aperture_visibility_factor(g.detector_aperture_w, g.fringe_period()) *
               divergence_visibility_factor(g.pump_divergence_sigma, g.fringe_period());
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError(key, "expected a number, got '" + std::string(v) + "'");
    return out;
}

template <class T>
T parse_integer(const std::string& key, std::string_view v) {
    T out{};
    if (!parse_int(v, out))
        throw ConfigError(key, "expected an integer, got '" + std::string(v) + "'");
    return out;
}

inline bool parse_bool(const std::string& key, std::string_view v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError(key, "expected on/off, got '" + std::string(v) + "'");
}

struct ConfigField {
    std::string_view key;
    std::function<void(RunConfig&, const std::string&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline ConfigField real(std::string_view key, double RunConfig::*m) {
    return {key,
            [m](RunConfig& c, const std::string& k, std::string_view v) { c.*m = parse_double(k, v); },
            [m](const RunConfig& c) { return fmt::format("{}", c.*m); }};
}

template <class T>
ConfigField integer(std::string_view key, T RunConfig::*m) {
    return {key,
            [m](RunConfig& c, const std::string& k, std::string_view v) { c.*m = parse_integer<T>(k, v); },
            [m](const RunConfig& c) { return fmt::format("{}", c.*m); }};
}

inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = {
        real("slit_width_mm", &RunConfig::slit_width_mm),
        real("slit_sep_mm", &RunConfig::slit_sep_mm),
        real("focal_mm", &RunConfig::focal_mm),
        real("lambda_signal_nm", &RunConfig::lambda_signal_nm),
        real("lambda_pump_nm", &RunConfig::lambda_pump_nm),
        real("path_l0_m", &RunConfig::path_l0_m),
        real("delay_m", &RunConfig::delay_m),
        real("aperture_mm", &RunConfig::aperture_mm),
        real("divergence_mm", &RunConfig::divergence_mm),
        real("offset_d3_um", &RunConfig::offset_d3_um),
        real("offset_d4_um", &RunConfig::offset_d4_um),
        {"corrections",
         [](RunConfig& c, const std::string& k, std::string_view v) { c.corrections = parse_bool(k, v); },
         [](const RunConfig& c) { return std::string(c.corrections ? "on" : "off"); }},
        real("dl_window_fs", &RunConfig::dl_window_fs),
        integer("pairs", &RunConfig::pairs),
        integer("seed", &RunConfig::seed),
        real("pair_rate_hz", &RunConfig::pair_rate_hz),
        real("jitter_ns", &RunConfig::jitter_ns),
        real("dark_rate_hz", &RunConfig::dark_rate_hz),
        real("efficiency", &RunConfig::efficiency),
        real("x_min_mm", &RunConfig::x_min_mm),
        real("x_max_mm", &RunConfig::x_max_mm),
        real("x_step_mm", &RunConfig::x_step_mm),
        {"x_fixed_mm",
         [](RunConfig& c, const std::string& k, std::string_view v) {
             if (v == "none")
                 c.x_fixed_mm.reset();
             else
                 c.x_fixed_mm = parse_double(k, v);
         },
         [](const RunConfig& c) {
             return c.x_fixed_mm ? fmt::format("{}", *c.x_fixed_mm) : std::string("none");
         }},
        real("window_ns", &RunConfig::window_ns),
        {"match_policy",
         [](RunConfig& c, const std::string& k, std::string_view v) {
             if (v == "closest")
                 c.match_policy = MatchPolicy::Closest;
             else if (v == "first")
                 c.match_policy = MatchPolicy::First;
             else
                 throw ConfigError(k, "expected closest or first, got '" + std::string(v) + "'");
         },
         [](const RunConfig& c) {
             return std::string(c.match_policy == MatchPolicy::Closest ? "closest" : "first");
         }},
        integer("x_bin_um", &RunConfig::x_bin_um),
        {"expected_delay_ps",
         [](RunConfig& c, const std::string& k, std::string_view v) {
             if (v == "auto")
                 c.expected_delay_ps.reset();
             else
                 c.expected_delay_ps = parse_integer<std::int64_t>(k, v);
         },
         [](const RunConfig& c) {
             return c.expected_delay_ps ? fmt::format("{}", *c.expected_delay_ps) : std::string("auto");
         }},
        integer("scan_step_um", &RunConfig::scan_step_um),
    };
    return fields;
}

}  // namespace detail

/// Per-key and cross-key checks; errors name the offending key.
inline void validate(const RunConfig& c) {
    auto positive = [](double v, const char* key) {
        if (!(v > 0.0)) throw ConfigError(key, "must be > 0");
    };
    auto nonnegative = [](double v, const char* key) {
        if (!(v >= 0.0)) throw ConfigError(key, "must be >= 0");
    };
    positive(c.slit_width_mm, "slit_width_mm");
    positive(c.slit_sep_mm, "slit_sep_mm");
    positive(c.focal_mm, "focal_mm");
    positive(c.lambda_signal_nm, "lambda_signal_nm");
    positive(c.lambda_pump_nm, "lambda_pump_nm");
    positive(c.path_l0_m, "path_l0_m");
    positive(c.delay_m, "delay_m");
    nonnegative(c.aperture_mm, "aperture_mm");
    nonnegative(c.divergence_mm, "divergence_mm");
    positive(c.dl_window_fs, "dl_window_fs");
    positive(c.pair_rate_hz, "pair_rate_hz");
    nonnegative(c.jitter_ns, "jitter_ns");
    nonnegative(c.dark_rate_hz, "dark_rate_hz");
    if (!(c.efficiency >= 0.0 && c.efficiency <= 1.0))
        throw ConfigError("efficiency", "must be in [0, 1]");
    positive(c.x_step_mm, "x_step_mm");
    if (!(c.x_min_mm < c.x_max_mm)) throw ConfigError("x_max_mm", "must exceed x_min_mm");
    positive(c.window_ns, "window_ns");
    if (std::llround(c.window_ns * 1000.0) <= 0) throw ConfigError("window_ns", "rounds to 0 ps");
    if (c.x_bin_um <= 0) throw ConfigError("x_bin_um", "must be > 0");
    if (c.scan_step_um <= 0) throw ConfigError("scan_step_um", "must be > 0");
    if (!(c.slit_sep_mm > c.slit_width_mm))
        throw ConfigError("slit_sep_mm", "must exceed slit_width_mm");
    if (std::abs(c.lambda_signal_nm - 2.0 * c.lambda_pump_nm) > 1e-9 * c.lambda_signal_nm)
        throw ConfigError("lambda_pump_nm", "must be half of lambda_signal_nm (degenerate pairs)");
    if (c.corrections && c.aperture_mm > 0.0 &&
        c.scan_step_um * kMicrometer > c.aperture_mm * kMillimeter / 8.0)
        throw ConfigError("scan_step_um", "must be <= aperture_mm / 8 when corrections are on");
    try {
        c.sim().validate();
    } catch (const InvalidParameter& e) {
        throw ConfigError("", e.what());
    }
}

inline RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::set<std::string, std::less<>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = detail::trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("", fmt::format("line {}: expected 'key = value'", line_no));
        const std::string key(detail::trim(body.substr(0, eq)));
        const std::string_view value = detail::trim(body.substr(eq + 1));
        const auto& fields = detail::config_fields();
        const auto it = std::find_if(fields.begin(), fields.end(),
                                     [&](const detail::ConfigField& f) { return f.key == key; });
        if (it == fields.end()) throw ConfigError(key, "unknown key");
        if (!seen.insert(key).second) throw ConfigError(key, "given more than once");
        it->set(c, key, value);
    }
    validate(c);
    return c;
}

inline RunConfig parse_config(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_config(in);
}

/// Canonical text form; parse_config(to_text(c)) == c.
inline std::string to_text(const RunConfig& c) {
    std::string out;
    for (const auto& f : detail::config_fields())
        fmt::format_to(std::back_inserter(out), "{} = {}\n", f.key, f.get(c));
    return out;
}

/// FNV-1a 64 of the canonical text, as 16 hex digits.
inline std::string config_digest(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char ch : to_text(c)) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace eraser
