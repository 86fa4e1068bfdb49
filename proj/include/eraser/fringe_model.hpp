#pragma once

// Closed-form double-slit joint rates, detector-aperture and pump-divergence
// smoothing, and fringe fitting with the period fixed by the geometry.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eraser/amplitudes.hpp"
#include "eraser/apparatus.hpp"
#include "eraser/constants.hpp"
#include "eraser/errors.hpp"

namespace eraser {

/// sin(u)/u with a series below |u| = 1e-4.
inline double sinc(double u) {
    if (std::abs(u) < 1e-4) {
        const double u2 = u * u;
        return 1.0 - u2 / 6.0 + u2 * u2 / 120.0;
    }
    return std::sin(u) / u;
}

inline double envelope(double x, const ApparatusGeometry& g) {
    const double s = sinc(kPi * x * g.slit_width_a / (g.lambda_signal * g.focal_f));
    return s * s;
}

inline double fringe_phase(double x, const ApparatusGeometry& g) {
    return kPi * x * g.slit_sep_d / (g.lambda_signal * g.focal_f);
}

inline double rate_r01(double x, const ApparatusGeometry& g) {
    const double c = std::cos(fringe_phase(x, g));
    return envelope(x, g) * c * c;
}

inline double rate_r02(double x, const ApparatusGeometry& g) {
    const double s = std::sin(fringe_phase(x, g));
    return envelope(x, g) * s * s;
}

inline double rate_r03(double x, const ApparatusGeometry& g) {
    return envelope(x - g.offset_d3, g);
}

inline double rate_r04(double x, const ApparatusGeometry& g) {
    return envelope(x - g.offset_d4, g);
}

/// Closed-form rate for one idler channel, each normalized to 1 at its peak.
inline double rate_closed_form(Detector d, double x, const ApparatusGeometry& g) {
    switch (d) {
        case Detector::D1: return rate_r01(x, g);
        case Detector::D2: return rate_r02(x, g);
        case Detector::D3: return rate_r03(x, g);
        case Detector::D4: return rate_r04(x, g);
        case Detector::D0: break;
    }
    throw InvalidParameter("closed-form rates exist for D1..D4 only");
}

/// The four joint rates on a common scale: D1/D2 carry the full
/// interference term, D3/D4 each half the envelope, so the four add up to the
/// D0 singles envelope (1 at x = 0).
inline std::array<double, 4> joint_rates(double x, const ApparatusGeometry& g) {
    return {rate_r01(x, g), rate_r02(x, g), 0.5 * rate_r03(x, g), 0.5 * rate_r04(x, g)};
}

/// Uniformly sampled curve y(x0 + i dx).
struct SampledCurve {
    double x0 = 0.0;
    double dx = 0.0;
    std::vector<double> y;

    double x(std::size_t i) const { return x0 + dx * static_cast<double>(i); }
    std::size_t size() const { return y.size(); }

    template <class F>
    static SampledCurve sample(double x_begin, double x_end, double dx, F&& f) {
        if (!(dx > 0.0) || !(x_end >= x_begin)) throw InvalidParameter("bad sampling range");
        SampledCurve c{x_begin, dx, {}};
        const auto n = static_cast<std::size_t>(std::floor((x_end - x_begin) / dx + 1e-9)) + 1;
        c.y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) c.y.push_back(f(c.x(i)));
        return c;
    }

    /// Linear interpolation, clamped to the end samples outside the range.
    double at(double xq) const {
        if (y.empty()) return 0.0;
        const double u = (xq - x0) / dx;
        if (u <= 0.0) return y.front();
        const auto last = static_cast<double>(y.size() - 1);
        if (u >= last) return y.back();
        const auto i = static_cast<std::size_t>(u);
        const double f = u - static_cast<double>(i);
        return y[i] * (1.0 - f) + y[i + 1] * f;
    }
};

namespace detail {

// Symmetric discrete convolution; samples beyond the ends repeat the edge value.
inline SampledCurve convolve_symmetric(const SampledCurve& in, std::span<const double> half_kernel) {
    SampledCurve out{in.x0, in.dx, std::vector<double>(in.size())};
    const auto n = static_cast<std::ptrdiff_t>(in.size());
    const auto m = static_cast<std::ptrdiff_t>(half_kernel.size());
    auto sample = [&](std::ptrdiff_t i) {
        return in.y[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, n - 1))];
    };
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = half_kernel[0] * sample(i);
        for (std::ptrdiff_t k = 1; k < m; ++k)
            acc += half_kernel[static_cast<std::size_t>(k)] * (sample(i - k) + sample(i + k));
        out.y[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

}  // namespace detail

/// Moving average over a detector of width w. Each sample cell
/// [x - dx/2, x + dx/2] is weighted by its overlap with [-w/2, w/2].
/// A width of at most one sample is the identity.
inline SampledCurve apply_detector_aperture(const SampledCurve& curve, double w) {
    if (!(curve.dx > 0.0)) throw InvalidParameter("curve spacing must be > 0");
    if (!(w >= 0.0)) throw InvalidParameter("aperture width must be >= 0");
    if (w <= curve.dx) return curve;
    if (curve.dx > w / 8.0)
        throw InvalidParameter("curve sampling too coarse for the aperture (need dx <= w/8)");
    const double half = w / 2.0;
    std::vector<double> kernel;
    for (std::size_t k = 0;; ++k) {
        const double lo = std::max(static_cast<double>(k) * curve.dx - curve.dx / 2.0, -half);
        const double hi = std::min(static_cast<double>(k) * curve.dx + curve.dx / 2.0, half);
        if (hi <= lo) break;
        kernel.push_back((hi - lo) / w);
    }
    return detail::convolve_symmetric(curve, kernel);
}

/// Gaussian blur with standard deviation sigma (kernel truncated at 8 sigma
/// and renormalized).
inline SampledCurve apply_pump_divergence(const SampledCurve& curve, double sigma) {
    if (!(curve.dx > 0.0)) throw InvalidParameter("curve spacing must be > 0");
    if (!(sigma >= 0.0)) throw InvalidParameter("divergence sigma must be >= 0");
    if (sigma == 0.0) return curve;
    const auto m = static_cast<std::size_t>(std::ceil(8.0 * sigma / curve.dx)) + 1;
    std::vector<double> kernel(m);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double u = static_cast<double>(k) * curve.dx / sigma;
        kernel[k] = std::exp(-0.5 * u * u);
        total += k == 0 ? kernel[k] : 2.0 * kernel[k];
    }
    for (double& v : kernel) v /= total;
    return detail::convolve_symmetric(curve, kernel);
}

/// Expected fringe-visibility factors of the two smoothing steps.
inline double aperture_visibility_factor(double w, double period) {
    return std::abs(sinc(kPi * w / period));
}
inline double divergence_visibility_factor(double sigma, double period) {
    return std::exp(-2.0 * kPi * kPi * sigma * sigma / (period * period));
}

struct FringeFit {
    double visibility = 0.0;      // [0, 1]
    double phase = 0.0;           // (-pi, pi]
    double period = 0.0;          // m
    double envelope_scale = 0.0;  // counts at the envelope peak
    double baseline = 0.0;        // counts per bin
    double residual_rms = 0.0;    // rms residual / max data value
    double visibility_err = 0.0;  // 1-sigma, from the fit covariance
    double chi2_dof = 0.0;        // Pearson chi^2 per degree of freedom
};

/// Wrap an angle into (-pi, pi].
inline double wrap_phase(double phi) {
    double r = std::remainder(phi, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    return r;
}

/// Fits E(x) (1 + V cos(2 pi x / L + phi)) / 2 + baseline with E the
/// single-slit envelope of `g` (free scale) and L = lambda f / d fixed.
/// The model is linear in (E0, E0 V cos phi, E0 V sin phi, baseline); it is
/// solved by least squares and refined by Poisson-weighted passes.
inline FringeFit fit_fringe(std::span<const double> x, std::span<const double> counts,
                            const ApparatusGeometry& g) {
    g.validate();
    if (x.size() != counts.size()) throw InvalidParameter("x and counts differ in length");
    const double period = g.fringe_period();
    FitDegenerate::Diagnostics diag;
    diag.bins = x.size();
    diag.period_m = period;
    if (!x.empty()) {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        diag.span_m = *hi - *lo;
    }
    for (double c : counts) diag.total_counts += c;
    if (diag.bins < 12) throw FitDegenerate("insufficient bins (need >= 12)", diag);
    if (diag.span_m < 2.0 * period * (1.0 - 1e-9))
        throw FitDegenerate("insufficient span (need >= 2 fringe periods)", diag);
    if (diag.total_counts < 1000.0) throw FitDegenerate("insufficient counts (need >= 1000)", diag);

    const auto n = static_cast<Eigen::Index>(x.size());
    const double k = kTwoPi / period;
    Eigen::MatrixXd design(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        const double e = envelope(xi, g) / 2.0;
        design(i, 0) = e;
        design(i, 1) = e * std::cos(k * xi);
        design(i, 2) = -e * std::sin(k * xi);
        design(i, 3) = 1.0;
        y(i) = counts[static_cast<std::size_t>(i)];
    }

    Eigen::VectorXd weights = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd p;
    Eigen::MatrixXd normal;
    for (int pass = 0; pass < 4; ++pass) {
        const Eigen::MatrixXd wd = weights.asDiagonal() * design;
        normal = design.transpose() * wd;
        p = normal.ldlt().solve(wd.transpose() * y);
        const Eigen::VectorXd model = design * p;
        for (Eigen::Index i = 0; i < n; ++i) weights(i) = 1.0 / std::max(model(i), 1.0);
    }
    if (!p.allFinite() || !(p(0) > 0.0))
        throw FitDegenerate("fit did not find a positive envelope", diag);

    const Eigen::VectorXd model = design * p;
    const Eigen::VectorXd resid = y - model;
    FringeFit fit;
    fit.period = period;
    fit.envelope_scale = p(0);
    fit.baseline = p(3);
    const double amp = std::hypot(p(1), p(2));
    fit.visibility = std::clamp(amp / p(0), 0.0, 1.0);
    fit.phase = amp > 0.0 ? wrap_phase(std::atan2(p(2), p(1))) : 0.0;
    fit.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n)) /
                       std::max(y.maxCoeff(), 1e-300);

    double chi2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) chi2 += resid(i) * resid(i) / std::max(model(i), 1.0);
    const double dof = static_cast<double>(n - 4);
    fit.chi2_dof = chi2 / dof;

    // Covariance of the weighted fit scaled by the reduced chi^2.
    const Eigen::MatrixXd cov = normal.inverse() * std::max(fit.chi2_dof, 1e-300);
    if (amp > 0.0) {
        Eigen::Vector4d grad;
        grad << -amp / (p(0) * p(0)), p(1) / (amp * p(0)), p(2) / (amp * p(0)), 0.0;
        fit.visibility_err = std::sqrt(std::max(grad.dot(cov * grad), 0.0));
    }
    return fit;
}

/// Pearson chi^2 per degree of freedom of counts against a model shape with
/// a single fitted scale.
inline double chi2_against_shape(std::span<const double> counts, std::span<const double> shape) {
    if (counts.size() != shape.size() || counts.size() < 2)
        throw InvalidParameter("chi2 needs matching arrays of >= 2 bins");
    double sc = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        sc += counts[i];
        ss += shape[i];
    }
    if (!(ss > 0.0)) throw InvalidParameter("model shape has no weight");
    const double scale = sc / ss;
    double chi2 = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double m = scale * shape[i];
        if (m <= 0.0) continue;
        chi2 += (counts[i] - m) * (counts[i] - m) / m;
        ++used;
    }
    return used > 1 ? chi2 / static_cast<double>(used - 1) : 0.0;
}

/// Compares the brute-force joint rate of detector `d` with its closed form
/// on n_points evenly spread over +-(lambda f / a). Both curves are
/// normalized to their maximum; returns max |difference|.
inline double oracle_crosscheck(Detector d, const ApparatusGeometry& g, const BiphotonPacket& packet,
                                std::size_t n_points, IntegrationGrid grid = {}) {
    if (n_points < 32) throw InvalidParameter("oracle crosscheck needs >= 32 points");
    ApparatusGeometry centred = g;
    centred.offset_d3 = 0.0;
    centred.offset_d4 = 0.0;
    const double half = g.envelope_null();
    std::vector<double> numeric(n_points), closed(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double xi = -half + 2.0 * half * static_cast<double>(i) /
                                      static_cast<double>(n_points - 1);
        numeric[i] = glauber_rate_numeric(d, xi, centred, packet, grid);
        closed[i] = rate_closed_form(d, xi, centred);
    }
    const double nmax = *std::max_element(numeric.begin(), numeric.end());
    const double cmax = *std::max_element(closed.begin(), closed.end());
    double dev = 0.0;
    for (std::size_t i = 0; i < n_points; ++i)
        dev = std::max(dev, std::abs(numeric[i] / nmax - closed[i] / cmax));
    return dev;
}

}  // namespace eraser
