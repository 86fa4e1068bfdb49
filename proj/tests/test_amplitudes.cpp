#include <array>
#include <cmath>
#include <complex>
#include <random>

#include "gtest/gtest.h"

#include "eraser/amplitudes.hpp"
#include "eraser/fringe_model.hpp"

using namespace eraser;

namespace {

using Mat2 = std::array<std::array<Amp, 2>, 2>;

// Matrix of the 50-50 beamsplitter written out by hand.
Mat2 bs_matrix() {
    const double s = 1.0 / std::sqrt(2.0);
    return {{{Amp(s, 0), Amp(0, s)}, {Amp(0, s), Amp(s, 0)}}};
}

Mat2 mul(const Mat2& a, const Mat2& b) {
    Mat2 c{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

ApparatusGeometry geom() { return ApparatusGeometry{}; }

BiphotonPacket packet() { return BiphotonPacket::normalized(geom(), 300 * kFemtosecond); }

}  // namespace

TEST(amplitudes, bs_apply_basis_vector) {
    const auto [o1, o2] = bs_apply({1, 0}, {0, 0});
    EXPECT_NEAR(o1.real(), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(o1.imag(), 0.0, 1e-15);
    EXPECT_NEAR(o2.real(), 0.0, 1e-15);
    EXPECT_NEAR(o2.imag(), 1 / std::sqrt(2.0), 1e-15);
}

TEST(amplitudes, bs_apply_twice_matches_matrix_square) {
    const Mat2 m2 = mul(bs_matrix(), bs_matrix());
    const auto [a1, a2] = bs_apply({1, 0}, {0, 0});
    const auto [b1, b2] = bs_apply(a1, a2);
    EXPECT_NEAR(std::abs(b1 - m2[0][0]), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(b2 - m2[1][0]), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(b1), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(b2 - Amp(0, 1)), 0.0, 1e-15);
}

TEST(amplitudes, bs_matrix_is_unitary) {
    const auto [c00, c10] = bs_apply({1, 0}, {0, 0});
    const auto [c01, c11] = bs_apply({0, 0}, {1, 0});
    const Mat2 u = {{{c00, c01}, {c10, c11}}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            Amp s = 0;
            for (int k = 0; k < 2; ++k) s += std::conj(u[k][i]) * u[k][j];
            EXPECT_LE(std::abs(s - Amp(i == j ? 1.0 : 0.0, 0.0)), 1e-12);
        }
}

TEST(amplitudes, bs_apply_preserves_norm_random) {
    std::mt19937_64 gen(7);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 1000; ++i) {
        const Amp a(nd(gen), nd(gen)), b(nd(gen), nd(gen));
        const auto [o1, o2] = bs_apply(a, b);
        EXPECT_NEAR(std::norm(o1) + std::norm(o2), std::norm(a) + std::norm(b), 1e-12);
    }
}

TEST(amplitudes, pi_window_support) {
    const double dl = 300 * kFemtosecond;
    EXPECT_EQ(pi_window(dl / 2, dl), 1);
    EXPECT_EQ(pi_window(-1e-15, dl), 0);
    EXPECT_EQ(pi_window(dl, dl), 1);
    EXPECT_EQ(pi_window(0.0, dl), 1);
    EXPECT_EQ(pi_window(dl * (1 + 1e-12), dl), 0);
    EXPECT_THROW(pi_window(0.0, 0.0), InvalidParameter);
    EXPECT_THROW(pi_window(0.0, -1.0), InvalidParameter);
}

TEST(amplitudes, packet_amplitude_examples) {
    const auto p = packet();
    const Amp at0 = packet_amplitude({0, 0, SourceRegion::A, Detector::D1}, p);
    EXPECT_DOUBLE_EQ(at0.real(), p.amp0);
    EXPECT_DOUBLE_EQ(at0.imag(), 0.0);
    EXPECT_EQ(packet_amplitude({2 * p.dl_window, 0, SourceRegion::A, Detector::D1}, p), Amp(0, 0));

    // Omega_e from the 702.2 nm signal wavelength, evaluated independently.
    const double omega_e = 2 * M_PI * 299792458.0 / 702.2e-9;
    EXPECT_NEAR(omega_e, 2.683e15, 0.001e15);
    const Amp a = packet_amplitude({1e-15, 0, SourceRegion::A, Detector::D1}, p);
    const Amp expected = p.amp0 * std::exp(Amp(0, -omega_e * 1e-15));
    EXPECT_NEAR(std::abs(a - expected), 0.0, 1e-12 * p.amp0);
    EXPECT_NEAR(std::arg(a), -2.683, 1e-3);
    EXPECT_NEAR(std::abs(a), p.amp0, 1e-12 * p.amp0);
}

TEST(amplitudes, packet_modulus_depends_on_difference_only) {
    const auto p = packet();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> ud(-1e-12, 1e-12), dd(-p.dl_window, 2 * p.dl_window);
    for (int i = 0; i < 200; ++i) {
        const double t0 = ud(gen), dt = dd(gen), shift = ud(gen);
        const double m1 = std::abs(packet_amplitude({t0, t0 - dt, SourceRegion::A, Detector::D1}, p));
        const double m2 =
            std::abs(packet_amplitude({t0 + shift, t0 + shift - dt, SourceRegion::A, Detector::D1}, p));
        EXPECT_NEAR(m1, m2, 1e-12 * p.amp0);
        EXPECT_NEAR(m1, pi_window(dt, p.dl_window) * p.amp0, 1e-12 * p.amp0);
    }
}

TEST(amplitudes, packet_phase_slopes_by_finite_difference) {
    const auto p = packet();
    const double t0 = 37e-15, tj = 12e-15, h = 1e-19;
    auto amp = [&](double a, double b) { return packet_amplitude({a, b, SourceRegion::A, Detector::D1}, p); };
    const double d0 = std::arg(amp(t0 + h, tj) / amp(t0 - h, tj)) / (2 * h);
    const double dj = std::arg(amp(t0, tj + h) / amp(t0, tj - h)) / (2 * h);
    EXPECT_NEAR(d0, -p.omega_e, 1e-6 * p.omega_e);
    EXPECT_NEAR(dj, -p.omega_o, 1e-6 * p.omega_o);
}

TEST(amplitudes, packet_validation) {
    auto p = packet();
    EXPECT_NO_THROW(p.validate(geom().lambda_pump));
    EXPECT_NEAR(p.omega_e + p.omega_o, 2 * M_PI * 299792458.0 / 351.1e-9, 1e3);
    p.omega_e *= 1.001;
    EXPECT_THROW(p.validate(geom().lambda_pump), InvalidParameter);
    p = packet();
    p.dl_window = 0;
    EXPECT_THROW(p.validate(geom().lambda_pump), InvalidParameter);
}

TEST(amplitudes, path_times_topology) {
    EXPECT_TRUE((PathTimes{0, 0, SourceRegion::A, Detector::D3}.topology_allowed()));
    EXPECT_FALSE((PathTimes{0, 0, SourceRegion::B, Detector::D3}.topology_allowed()));
    EXPECT_TRUE((PathTimes{0, 0, SourceRegion::B, Detector::D4}.topology_allowed()));
    EXPECT_FALSE((PathTimes{0, 0, SourceRegion::A, Detector::D4}.topology_allowed()));
    EXPECT_TRUE((PathTimes{0, 0, SourceRegion::B, Detector::D1}.topology_allowed()));
    EXPECT_FALSE((PathTimes{0, 0, SourceRegion::A, Detector::D0}.topology_allowed()));
}

TEST(amplitudes, joint_wavefunction_examples) {
    const auto g = geom();
    const auto p = packet();
    const Amp alpha = p.amp0;  // A(0, 0)
    const double tol = 1e-15 * std::abs(alpha);
    EXPECT_NEAR(std::abs(joint_wavefunction(Detector::D3, 0, 0, g, p) - alpha / std::sqrt(2.0)), 0, tol);
    EXPECT_NEAR(std::abs(joint_wavefunction(Detector::D2, 0, 0, g, p)), 0, tol);
    EXPECT_NEAR(std::abs(joint_wavefunction(Detector::D1, 0, 0, g, p)), std::abs(alpha), tol);
    EXPECT_THROW(joint_wavefunction(Detector::D0, 0, 0, g, p), InvalidParameter);
}

TEST(amplitudes, combine_paths_matches_bs_chain_up_to_port_phase) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 100; ++i) {
        const Amp a(nd(gen), nd(gen)), b(nd(gen), nd(gen));
        EXPECT_LE(std::abs(combine_paths(Detector::D1, a, b) - (a + b) / 2.0), 1e-12);
        EXPECT_LE(std::abs(combine_paths(Detector::D2, a, b) - (a - b) / 2.0), 1e-12);
        EXPECT_LE(std::abs(combine_paths(Detector::D3, a, b) - a / std::sqrt(2.0)), 1e-12);
        EXPECT_LE(std::abs(combine_paths(Detector::D4, a, b) - b / std::sqrt(2.0)), 1e-12);
    }
}

TEST(amplitudes, sign_structure_and_complementarity) {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 1000; ++i) {
        const Amp a(nd(gen), nd(gen)), b(nd(gen), nd(gen));
        const Amp psi1 = combine_paths(Detector::D1, a, b);
        const Amp psi2 = combine_paths(Detector::D2, a, b);
        const Amp psi3 = combine_paths(Detector::D3, a, b);
        // D1 + D2 cancels the B path, leaving sqrt(2) times the D3 amplitude.
        EXPECT_LE(std::abs(psi1 + psi2 - std::sqrt(2.0) * psi3), 1e-12);
        EXPECT_NEAR(std::norm(psi1) + std::norm(psi2), (std::norm(a) + std::norm(b)) / 2, 1e-12);
    }
}

TEST(amplitudes, glauber_d3_has_no_fringes) {
    const auto g = geom();
    const auto p = packet();
    double lo = 1e300, hi = 0;
    for (int i = -20; i <= 20; ++i) {
        const double x = i * 0.05 * kMillimeter;
        const double r = glauber_rate_numeric(Detector::D3, x, g, p) / envelope(x, g);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    EXPECT_LE((hi - lo) / hi, 1e-9);
}

TEST(amplitudes, glauber_d1_peaks_at_zero) {
    const auto g = geom();
    const auto p = packet();
    const double r0 = glauber_rate_numeric(Detector::D1, 0, g, p);
    for (int i = 1; i <= 40; ++i) {
        const double x = i * 0.031 * kMillimeter;
        EXPECT_LT(glauber_rate_numeric(Detector::D1, x, g, p), r0);
        EXPECT_LT(glauber_rate_numeric(Detector::D1, -x, g, p), r0);
    }
}

TEST(amplitudes, glauber_grid_refinement_invariance) {
    const auto g = geom();
    const auto p = packet();
    for (auto d : kIdlerDetectors)
        for (double x : {0.0, 0.1e-3, 0.37e-3, -0.8e-3}) {
            const double coarse = glauber_rate_numeric(d, x, g, p, {64, 64, 0});
            const double fine = glauber_rate_numeric(d, x, g, p, {128, 128, 0});
            EXPECT_GE(coarse, 0.0);
            EXPECT_LE(std::abs(fine - coarse), 1e-8 * std::max(std::abs(fine), 1e-300) + 1e-300);
        }
}

TEST(amplitudes, glauber_rejects_degenerate_grid) {
    EXPECT_THROW(glauber_rate_numeric(Detector::D1, 0, geom(), packet(), {32, 64, 0}), InvalidParameter);
    EXPECT_THROW(glauber_rate_numeric(Detector::D1, 0, geom(), packet(), {64, 8, 0}), InvalidParameter);
    EXPECT_THROW(glauber_rate_numeric(Detector::D0, 0, geom(), packet()), InvalidParameter);
}

TEST(amplitudes, normalization_makes_total_rate_one) {
    const auto g = geom();
    const auto p = packet();
    // sum_j R_0j(x) = peak * sinc^2(pi x a / lambda f), and the sinc^2 integral is lambda f / a.
    double peak = 0;
    for (auto d : kIdlerDetectors) peak += glauber_rate_numeric(d, 0, g, p);
    const double width = g.lambda_signal * g.focal_f / g.slit_width_a;
    EXPECT_NEAR(peak * width, 1.0, 1e-12);

    // Independent check of the sinc^2 integral: Simpson over +-2000 nulls plus
    // the 1/u^2-averaged tail 2 * (1/2) / (pi^2 * 2000).
    const int n = 4'000'000;
    const double umax = 2000 * M_PI, h = 2 * umax / n;
    double s = 0;
    for (int i = 0; i <= n; ++i) {
        const double u = -umax + i * h;
        const double f = std::pow(sinc(u), 2);
        s += (i == 0 || i == n) ? f : (i % 2 ? 4 * f : 2 * f);
    }
    s = s * h / 3 + 2 * 0.5 / umax;
    EXPECT_NEAR(s, M_PI, 1e-5);
}
