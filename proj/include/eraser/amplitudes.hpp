#pragma once

// Two-photon amplitude layer: beamsplitter transform, the rectangular
// type-II biphoton wavepacket, the four joint-detection amplitudes and a
// brute-force evaluation of the joint detection rate on a time grid.

#include <cmath>
#include <complex>
#include <cstddef>
#include <utility>

#include <boost/math/quadrature/gauss.hpp>

#include "eraser/apparatus.hpp"
#include "eraser/constants.hpp"
#include "eraser/errors.hpp"

namespace eraser {

using Amp = std::complex<double>;

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr Amp kI{0.0, 1.0};

/// Two-photon amplitude A(t_i, t_j) = A0 Pi(t_i - t_j) exp(-i W_e t_i) exp(-i W_o t_j).
struct BiphotonPacket {
    double omega_e = 0.0;     // rad/s
    double omega_o = 0.0;     // rad/s
    double dl_window = 0.0;   // s, D*L with D = 1/u_o - 1/u_e
    double amp0 = 1.0;

    /// Degenerate pair: both center frequencies at half the pump frequency.
    static BiphotonPacket degenerate(double lambda_pump, double dl_window, double amp0 = 1.0) {
        const double omega_p = kTwoPi * kSpeedOfLight / lambda_pump;
        return {omega_p / 2.0, omega_p / 2.0, dl_window, amp0};
    }

    /// Degenerate packet with A0 chosen so the four joint rates integrated
    /// over the whole D0 axis add up to 1.
    static BiphotonPacket normalized(const ApparatusGeometry& g, double dl_window) {
        // sum_j R_0j(x) = 2 |A0|^2 DL sinc^2(pi x a / lambda f); the x integral of
        // sinc^2 is lambda f / a.
        const double amp0 = std::sqrt(g.slit_width_a /
                                      (2.0 * dl_window * g.lambda_signal * g.focal_f));
        return degenerate(g.lambda_pump, dl_window, amp0);
    }

    void validate(double lambda_pump) const {
        if (!(dl_window > 0.0) || !std::isfinite(dl_window))
            throw InvalidParameter("dl_window must be > 0");
        const double omega_p = kTwoPi * kSpeedOfLight / lambda_pump;
        if (std::abs(omega_e + omega_o - omega_p) > 1e-12 * omega_p)
            throw InvalidParameter("omega_e + omega_o must equal the pump frequency");
        if (!std::isfinite(amp0)) throw InvalidParameter("amp0 must be finite");
    }
};

/// Symmetric 50-50 beamsplitter: reflection multiplies by i, transmission by 1.
inline std::pair<Amp, Amp> bs_apply(Amp in_a, Amp in_b) {
    return {(in_a + kI * in_b) * kInvSqrt2, (kI * in_a + in_b) * kInvSqrt2};
}

/// Rectangular biphoton window: 1 on the closed interval [0, dl_window].
inline int pi_window(double dt, double dl_window) {
    if (!(dl_window > 0.0)) throw InvalidParameter("dl_window must be > 0");
    return (dt >= 0.0 && dt <= dl_window) ? 1 : 0;
}

/// Path-referenced detection times t = T - L/c.
struct PathTimes {
    double t0 = 0.0;
    double tj = 0.0;
    SourceRegion source_region = SourceRegion::A;
    Detector detector = Detector::D1;

    /// D3 only sees region A, D4 only region B, D0 is never an idler.
    bool topology_allowed() const {
        if (detector == Detector::D0) return false;
        if (detector == Detector::D3) return source_region == SourceRegion::A;
        if (detector == Detector::D4) return source_region == SourceRegion::B;
        return true;
    }
};

inline Amp packet_amplitude(const PathTimes& times, const BiphotonPacket& packet) {
    const int window = pi_window(times.t0 - times.tj, packet.dl_window);
    if (window == 0) return {0.0, 0.0};
    const double phase =
        std::remainder(-(packet.omega_e * times.t0 + packet.omega_o * times.tj), kTwoPi);
    return std::polar(packet.amp0, phase);
}

namespace detail {

// Relative phase of the B arm that makes the equal-path interferometer bright
// at D1 for zero path difference; it cancels the extra reflection at BS.
inline constexpr Amp kArmBalanceB{0.0, -1.0};
// Fixed phase references of the BS output ports, so that D1 and D2 report
// (A + B)/2 and (A - B)/2 exactly.
inline constexpr Amp kPortRefD1{0.0, -1.0};
inline constexpr Amp kPortRefD2{-1.0, 0.0};

}  // namespace detail

/// Idler amplitude at detector `d` given the two path amplitudes as they
/// leave the source. BSA/BSB reflect toward BS and transmit toward D3/D4.
inline Amp combine_paths(Detector d, Amp path_a, Amp path_b) {
    switch (d) {
        case Detector::D3:
            return path_a * kInvSqrt2;
        case Detector::D4:
            return path_b * kInvSqrt2;
        case Detector::D1:
        case Detector::D2: {
            const Amp at_bs_a = kI * kInvSqrt2 * path_a;
            const Amp at_bs_b = kI * kInvSqrt2 * path_b * detail::kArmBalanceB;
            const auto [out1, out2] = bs_apply(at_bs_a, at_bs_b);
            return d == Detector::D1 ? out1 * detail::kPortRefD1 : out2 * detail::kPortRefD2;
        }
        case Detector::D0:
            break;
    }
    throw InvalidParameter("joint wavefunction is defined for idler detectors D1..D4 only");
}

/// Complex weights carried by the signal photon from region A and B to the
/// D0 position (far-field phase, optionally averaged over the slit width).
struct SignalWeights {
    Amp a{1.0, 0.0};
    Amp b{1.0, 0.0};
};

/// Joint amplitude Psi(t0, tj) for one idler detector. The interferometer
/// arms are equal-path, so both regions share the same path-referenced tj.
inline Amp joint_wavefunction(Detector d, double t0, double tj, const ApparatusGeometry& g,
                              const BiphotonPacket& packet, SignalWeights w = {}) {
    if (d == Detector::D0) throw InvalidParameter("D0 is not an idler detector");
    g.validate();
    const Amp amp_a = packet_amplitude({t0, tj, SourceRegion::A, d}, packet);
    const Amp amp_b = packet_amplitude({t0, tj, SourceRegion::B, d}, packet);
    return combine_paths(d, amp_a * w.a, amp_b * w.b);
}

struct IntegrationGrid {
    std::size_t n_t0 = 64;      // nodes along t0
    std::size_t n_dt = 64;      // nodes across the Pi support t0 - tj in [0, DL]
    double t0_span = 0.0;       // s; 0 means 4 * DL

    void validate() const {
        if (n_t0 < 64 || n_dt < 64)
            throw InvalidParameter("integration grid needs >= 64 points per dimension");
        if (t0_span < 0.0 || !std::isfinite(t0_span))
            throw InvalidParameter("integration grid span must be >= 0");
    }
};

namespace detail {

// Coherent average of exp(i 2 pi x s / (lambda f)) over a slit of width a
// centred at `center`, by Gauss-Legendre quadrature.
inline Amp slit_weight(double x, double center, const ApparatusGeometry& g) {
    const double k = kTwoPi * x / (g.lambda_signal * g.focal_f);
    const double half = g.slit_width_a / 2.0;
    auto re = [&](double u) { return std::cos(k * (center + half * u)); };
    auto im = [&](double u) { return std::sin(k * (center + half * u)); };
    using Rule = boost::math::quadrature::gauss<double, 40>;
    return {Rule::integrate(re, -1.0, 1.0) / 2.0, Rule::integrate(im, -1.0, 1.0) / 2.0};
}

}  // namespace detail

/// Joint detection rate (1/T) double-integral |Psi(t0, tj)|^2 for detector
/// `d` with D0 at `x`, evaluated on a midpoint grid over (t0, t0 - tj).
/// The signal path phases are integrated numerically across both slits.
inline double glauber_rate_numeric(Detector d, double x, const ApparatusGeometry& g,
                                   const BiphotonPacket& packet, IntegrationGrid grid = {}) {
    grid.validate();
    g.validate();
    if (d == Detector::D0) throw InvalidParameter("D0 is not an idler detector");
    if (!(packet.dl_window > 0.0)) throw InvalidParameter("dl_window must be > 0");
    const double span = grid.t0_span > 0.0 ? grid.t0_span : 4.0 * packet.dl_window;

    // Region A is the slit at +d/2, region B at -d/2.
    const SignalWeights w{detail::slit_weight(x, +g.slit_sep_d / 2.0, g),
                          detail::slit_weight(x, -g.slit_sep_d / 2.0, g)};

    const double h0 = span / static_cast<double>(grid.n_t0);
    const double hd = packet.dl_window / static_cast<double>(grid.n_dt);
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.n_t0; ++i) {
        const double t0 = (static_cast<double>(i) + 0.5) * h0;
        for (std::size_t k = 0; k < grid.n_dt; ++k) {
            const double tj = t0 - (static_cast<double>(k) + 0.5) * hd;
            sum += std::norm(joint_wavefunction(d, t0, tj, g, packet, w));
        }
    }
    return sum * h0 * hd / span;
}

}  // namespace eraser
