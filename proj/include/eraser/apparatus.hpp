#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "eraser/constants.hpp"
#include "eraser/errors.hpp"

namespace eraser {

enum class Detector : std::uint8_t { D0 = 0, D1 = 1, D2 = 2, D3 = 3, D4 = 4 };

inline constexpr std::array<Detector, 4> kIdlerDetectors = {Detector::D1, Detector::D2,
                                                            Detector::D3, Detector::D4};

constexpr int index_of(Detector d) { return static_cast<int>(d); }

/// 0 for D1 ... 3 for D4.
constexpr int idler_index(Detector d) { return static_cast<int>(d) - 1; }

constexpr bool is_idler(Detector d) { return d != Detector::D0; }

inline std::string_view to_string(Detector d) {
    static constexpr std::array<std::string_view, 5> names = {"D0", "D1", "D2", "D3", "D4"};
    return names[static_cast<std::size_t>(d)];
}

inline std::optional<Detector> parse_detector(std::string_view s) {
    if (s.size() != 2 || s[0] != 'D' || s[1] < '0' || s[1] > '4') return std::nullopt;
    return static_cast<Detector>(s[1] - '0');
}

/// Source region of the pair inside the crystal (the two "slits").
enum class SourceRegion : std::uint8_t { A, B };

/// Double-slit source, lens and detector geometry. Lengths in metres.
struct ApparatusGeometry {
    double slit_width_a = 0.3 * kMillimeter;
    double slit_sep_d = 0.7 * kMillimeter;
    double focal_f = 500.0 * kMillimeter;
    double lambda_signal = 702.2 * kNanometer;
    double lambda_pump = 351.1 * kNanometer;
    double path_l0 = 1.0;
    double path_li = 3.5;
    double detector_aperture_w = 0.10 * kMillimeter;
    double pump_divergence_sigma = 0.05 * kMillimeter;
    // Center shifts of the which-path channels on the D0 axis.
    double offset_d3 = 0.0;
    double offset_d4 = 0.0;

    /// Fringe period on the D0 axis, lambda f / d.
    double fringe_period() const { return lambda_signal * focal_f / slit_sep_d; }

    /// First zero of the single-slit envelope, lambda f / a.
    double envelope_null() const { return lambda_signal * focal_f / slit_width_a; }

    /// (L_i - L_0) / c in seconds.
    double delay() const { return (path_li - path_l0) / kSpeedOfLight; }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw InvalidParameter(std::string(name) + " must be a positive length");
        };
        positive(slit_width_a, "slit_width_a");
        positive(slit_sep_d, "slit_sep_d");
        positive(focal_f, "focal_f");
        positive(lambda_signal, "lambda_signal");
        positive(lambda_pump, "lambda_pump");
        positive(path_l0, "path_l0");
        positive(path_li, "path_li");
        if (!(detector_aperture_w >= 0.0) || !std::isfinite(detector_aperture_w))
            throw InvalidParameter("detector_aperture_w must be >= 0");
        if (!(pump_divergence_sigma >= 0.0) || !std::isfinite(pump_divergence_sigma))
            throw InvalidParameter("pump_divergence_sigma must be >= 0");
        if (!std::isfinite(offset_d3) || !std::isfinite(offset_d4))
            throw InvalidParameter("channel offsets must be finite");
        if (!(slit_sep_d > slit_width_a))
            throw InvalidParameter("slit_sep_d must exceed slit_width_a");
        if (!(path_li > path_l0)) throw InvalidParameter("path_li must exceed path_l0");
        if (std::abs(lambda_signal - 2.0 * lambda_pump) > 1e-9 * lambda_signal)
            throw InvalidParameter("lambda_signal must equal 2 * lambda_pump (degenerate SPDC)");
    }
};

}  // namespace eraser
