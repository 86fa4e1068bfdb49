#pragma once

// Monte Carlo generation of time-tagged detector clicks for the eraser.
//
// Each emitted pair gives one D0 click and one idler click on D1..D4. The D0
// scan setting of a pair is drawn by rejection sampling from the (optionally
// smoothed) D0 singles density over the scan settings; the idler detector is
// drawn from the branch probabilities at that setting. Pairs are then emitted
// scan step by scan step with exponential inter-arrival times, every step
// using its own counter-based random stream so steps are independent of how
// they are scheduled.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "eraser/apparatus.hpp"
#include "eraser/amplitudes.hpp"
#include "eraser/constants.hpp"
#include "eraser/errors.hpp"
#include "eraser/events.hpp"
#include "eraser/fringe_model.hpp"
#include "eraser/rng.hpp"

namespace eraser {

struct ScanSpec {
    double x_min = -1.25 * kMillimeter;
    double x_max = 1.25 * kMillimeter;
    double step = 0.05 * kMillimeter;
};

struct SimConfig {
    std::uint64_t pairs = 1'000'000;
    std::uint64_t seed = 42;
    double pair_rate = 1e5;                 // pairs/s
    double jitter_sigma = 1e-9;             // s, per detector
    double dark_rate_per_detector = 0.0;    // clicks/s
    double efficiency = 1.0;                // per click
    bool corrections = false;               // apply aperture and pump divergence
    ApparatusGeometry geometry;
    BiphotonPacket packet = BiphotonPacket::normalized(ApparatusGeometry{}, 300.0 * kFemtosecond);
    std::optional<double> fixed_x;          // D0 parked here instead of scanning
    ScanSpec scan;

    void validate() const {
        geometry.validate();
        packet.validate(geometry.lambda_pump);
        if (!(pair_rate > 0.0) || !std::isfinite(pair_rate))
            throw InvalidParameter("pair_rate must be > 0");
        if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma))
            throw InvalidParameter("jitter_sigma must be >= 0");
        if (!(dark_rate_per_detector >= 0.0) || !std::isfinite(dark_rate_per_detector))
            throw InvalidParameter("dark_rate_per_detector must be >= 0");
        if (!(efficiency >= 0.0 && efficiency <= 1.0))
            throw InvalidParameter("efficiency must be in [0, 1]");
        if (fixed_x) {
            if (!std::isfinite(*fixed_x)) throw InvalidParameter("fixed x must be finite");
        } else {
            if (!(scan.step > 0.0)) throw InvalidParameter("scan step must be > 0");
            if (!(scan.x_min < scan.x_max)) throw InvalidParameter("scan needs x_min < x_max");
        }
    }

    /// D0 positions visited, in scan order.
    std::vector<double> settings() const {
        if (fixed_x) return {*fixed_x};
        std::vector<double> xs;
        const auto n = static_cast<std::size_t>(
                           std::floor((scan.x_max - scan.x_min) / scan.step + 1e-9)) + 1;
        xs.reserve(n);
        for (std::size_t i = 0; i < n; ++i) xs.push_back(scan.x_min + scan.step * static_cast<double>(i));
        return xs;
    }

    double aperture() const { return corrections ? geometry.detector_aperture_w : 0.0; }
    double divergence() const { return corrections ? geometry.pump_divergence_sigma : 0.0; }
};

/// p(Dj | x) for j = 1..4 from the ideal joint rates.
inline std::array<double, 4> branch_probabilities(const ApparatusGeometry& g, double x) {
    auto r = joint_rates(x, g);
    const double total = r[0] + r[1] + r[2] + r[3];
    if (!(total > 0.0)) throw InvalidParameter("D0 singles density vanishes at this x");
    for (double& v : r) v /= total;
    return r;
}

/// Joint rates after detector-aperture and pump-divergence smoothing,
/// tabulated on a fine grid around [x_lo, x_hi].
class SmoothedRates {
public:
    SmoothedRates(const ApparatusGeometry& g, double aperture, double divergence, double x_lo,
                  double x_hi)
        : g_(g), smoothed_(aperture > 0.0 || divergence > 0.0) {
        if (!smoothed_) return;
        double h = g.fringe_period() / 400.0;
        if (aperture > 0.0) h = std::min(h, aperture / 8.0);
        if (divergence > 0.0) h = std::min(h, divergence / 4.0);
        const double pad = aperture / 2.0 + 8.0 * divergence + 4.0 * h;
        for (std::size_t j = 0; j < 4; ++j) {
            auto curve = SampledCurve::sample(x_lo - pad, x_hi + pad, h,
                                              [&](double x) { return joint_rates(x, g)[j]; });
            curves_[j] = apply_pump_divergence(apply_detector_aperture(curve, aperture), divergence);
        }
    }

    std::array<double, 4> at(double x) const {
        if (!smoothed_) return joint_rates(x, g_);
        return {curves_[0].at(x), curves_[1].at(x), curves_[2].at(x), curves_[3].at(x)};
    }

    double total(double x) const {
        const auto r = at(x);
        return r[0] + r[1] + r[2] + r[3];
    }

    /// Largest tabulated singles density in [x_lo, x_hi]. Unsmoothed, the
    /// four rates sum to twice the envelope, so the bound is 2.
    double max_total(double x_lo, double x_hi) const {
        if (!smoothed_) return 2.0;
        double m = 0.0;
        const SampledCurve& c = curves_[0];
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double x = c.x(i);
            if (x < x_lo - c.dx || x > x_hi + c.dx) continue;
            m = std::max(m, curves_[0].y[i] + curves_[1].y[i] + curves_[2].y[i] + curves_[3].y[i]);
        }
        return m;
    }

    std::array<double, 4> branch(double x) const {
        auto r = at(x);
        const double total = r[0] + r[1] + r[2] + r[3];
        if (!(total > 0.0)) throw InvalidParameter("D0 singles density vanishes at this x");
        for (double& v : r) v /= total;
        return r;
    }

private:
    ApparatusGeometry g_;
    bool smoothed_;
    std::array<SampledCurve, 4> curves_;
};

/// Rejection sampling of a scan setting index: uniform proposal over the
/// settings, accepted with probability density / bound.
inline std::size_t draw_setting(rng::Stream& rng, const std::vector<double>& density, double bound) {
    const auto n = static_cast<std::uint64_t>(density.size());
    if (n == 0) throw InvalidParameter("no scan settings");
    for (int attempt = 0; attempt < 10'000; ++attempt) {
        const auto s = static_cast<std::size_t>(rng.below(n));
        if (rng.uniform() * bound < density[s]) return s;
    }
    throw InternalError("rejection sampling failed after 10000 proposals (broken density bound)");
}

/// Integer-picosecond timing of the apparatus.
struct TimingModel {
    std::int64_t l0_ps = 0;       // source to D0
    std::int64_t delay_ps = 0;    // (L_i - L_0)/c
    double jitter_ps = 0.0;
    std::int64_t lead_in_ps = 0;  // emission clock origin

    explicit TimingModel(const SimConfig& cfg)
        : l0_ps(std::llround(cfg.geometry.path_l0 / kSpeedOfLight / kPicosecond)),
          delay_ps(std::llround(cfg.geometry.delay() / kPicosecond)),
          jitter_ps(cfg.jitter_sigma / kPicosecond),
          lead_in_ps(1000 + static_cast<std::int64_t>(std::ceil(12.0 * cfg.jitter_sigma / kPicosecond))) {}

    std::int64_t click(rng::Stream& rng, std::int64_t emission_base, double emission_frac,
                       std::int64_t path_ps) const {
        const double jitter = jitter_ps > 0.0 ? jitter_ps * rng.normal() : 0.0;
        return std::max<std::int64_t>(0, emission_base + std::llround(emission_frac + jitter) + path_ps);
    }
};

/// Clicks produced by one pair; either may be lost to detection efficiency.
struct PairClicks {
    std::optional<DetectionEvent> d0;
    std::optional<DetectionEvent> idler;
    Detector idler_detector = Detector::D1;
};

/// Per-setting branch tables shared by all pairs of a run.
class PairSampler {
public:
    PairSampler(const SimConfig& cfg, std::vector<double> settings)
        : cfg_(cfg), settings_(std::move(settings)), timing_(cfg) {
        const auto [lo, hi] = std::minmax_element(settings_.begin(), settings_.end());
        const double x_lo = *lo, x_hi = *hi;
        const SmoothedRates rates(cfg.geometry, cfg.aperture(), cfg.divergence(), x_lo, x_hi);
        for (double x : settings_) {
            density_.push_back(rates.total(x));
            cumulative_.push_back(density_.back() > 0.0 ? cumulative(rates.branch(x))
                                                         : std::array<double, 4>{});
        }
        bound_ = 1.01 * rates.max_total(x_lo, x_hi);
    }

    const std::vector<double>& settings() const { return settings_; }
    const std::vector<double>& density() const { return density_; }
    double bound() const { return bound_; }
    const TimingModel& timing() const { return timing_; }

    /// One pair emitted at emission_base + emission_frac (ps) with D0 at
    /// settings()[setting].
    PairClicks sample(rng::Stream& rng, std::size_t setting, std::int64_t emission_base,
                      double emission_frac, std::uint64_t event_id) const {
        if (!(density_[setting] > 0.0))
            throw InvalidParameter("D0 singles density vanishes at this x");
        const auto& cum = cumulative_[setting];
        const double u = rng.uniform();
        std::size_t j = 0;
        while (j < 3 && u >= cum[j]) ++j;
        PairClicks out;
        out.idler_detector = kIdlerDetectors[j];
        const auto x_um = static_cast<std::int32_t>(std::llround(settings_[setting] / kMicrometer));
        const std::int64_t t0 = timing_.click(rng, emission_base, emission_frac, timing_.l0_ps);
        const std::int64_t tj =
            timing_.click(rng, emission_base, emission_frac, timing_.l0_ps + timing_.delay_ps);
        if (rng.bernoulli(cfg_.efficiency)) out.d0 = DetectionEvent{event_id, Detector::D0, t0, x_um};
        if (rng.bernoulli(cfg_.efficiency))
            out.idler = DetectionEvent{event_id, out.idler_detector, tj, std::nullopt};
        return out;
    }

private:
    static std::array<double, 4> cumulative(const std::array<double, 4>& p) {
        return {p[0], p[0] + p[1], p[0] + p[1] + p[2], 1.0};
    }

    SimConfig cfg_;
    std::vector<double> settings_;
    TimingModel timing_;
    std::vector<double> density_;
    std::vector<std::array<double, 4>> cumulative_;
    double bound_ = 0.0;
};

/// Samples one pair with D0 parked at x_setting, emitted at emission_ps.
inline PairClicks sample_pair(rng::Stream& rng, const SimConfig& cfg, double x_setting,
                              double emission_ps = 0.0, std::uint64_t event_id = 0) {
    cfg.validate();
    const PairSampler sampler(cfg, {x_setting});
    const double base = std::floor(emission_ps);
    return sampler.sample(rng, 0, static_cast<std::int64_t>(base), emission_ps - base, event_id);
}

struct SimSummary {
    std::uint64_t pairs_emitted = 0;
    std::array<std::uint64_t, 5> clicks{};        // all clicks per detector
    std::array<std::uint64_t, 5> dark_clicks{};   // of which dark counts
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    std::int64_t duration_ps = 0;
    double pair_rate = 0.0;
    double jitter_sigma = 0.0;
    double dark_rate_per_detector = 0.0;

    std::uint64_t total_clicks() const {
        std::uint64_t n = 0;
        for (auto c : clicks) n += c;
        return n;
    }
};

namespace detail {

inline constexpr std::uint64_t kSettingStream = 0;
inline constexpr std::uint64_t kDarkStreamBase = std::uint64_t{1} << 62;

}  // namespace detail

/// Generates the full click stream for `cfg` and hands it to `sink` in
/// stream order (time, event id, detector). Pair clicks carry the index of
/// their pair as event id; dark counts are numbered after all pairs.
template <class Sink>
SimSummary run_simulation(const SimConfig& cfg, Sink&& sink) {
    cfg.validate();
    SimSummary summary;
    summary.seed = cfg.seed;
    summary.pair_rate = cfg.pair_rate;
    summary.jitter_sigma = cfg.jitter_sigma;
    summary.dark_rate_per_detector = cfg.dark_rate_per_detector;

    const PairSampler sampler(cfg, cfg.settings());
    const std::size_t n_steps = sampler.settings().size();
    summary.steps = n_steps;
    const TimingModel& timing = sampler.timing();

    // Pairs per scan step.
    std::vector<std::uint64_t> per_step(n_steps, 0);
    if (n_steps == 1) {
        per_step[0] = cfg.pairs;
    } else {
        rng::Stream rng(cfg.seed, detail::kSettingStream);
        for (std::uint64_t i = 0; i < cfg.pairs; ++i)
            ++per_step[draw_setting(rng, sampler.density(), sampler.bound())];
    }

    // Each step on its own stream, times relative to the step start.
    const double mean_gap_ps = 1.0 / (cfg.pair_rate * kPicosecond);
    std::vector<std::vector<DetectionEvent>> step_events(n_steps);
    std::vector<std::int64_t> step_length(n_steps, 0);
    std::uint64_t first_id = 0;
    for (std::size_t s = 0; s < n_steps; ++s) {
        rng::Stream rng(cfg.seed, s + 1);
        auto& out = step_events[s];
        out.reserve(2 * per_step[s]);
        double t = 0.0;
        for (std::uint64_t k = 0; k < per_step[s]; ++k) {
            t += mean_gap_ps * -std::log(rng.uniform_pos());
            const auto clicks = sampler.sample(rng, s, 0, t, first_id + k);
            if (clicks.d0) out.push_back(*clicks.d0);
            if (clicks.idler) out.push_back(*clicks.idler);
        }
        step_length[s] = std::llround(t);
        first_id += per_step[s];
    }
    summary.pairs_emitted = first_id;

    // Place steps back to back after the lead-in.
    std::vector<std::int64_t> step_start(n_steps, 0);
    std::int64_t clock = timing.lead_in_ps;
    for (std::size_t s = 0; s < n_steps; ++s) {
        step_start[s] = clock;
        clock += step_length[s];
    }
    const std::int64_t span_end = clock + timing.l0_ps + timing.delay_ps + timing.lead_in_ps;
    summary.duration_ps = span_end;

    std::vector<DetectionEvent> all;
    std::size_t total = 0;
    for (const auto& v : step_events) total += v.size();
    all.reserve(total);
    for (std::size_t s = 0; s < n_steps; ++s) {
        for (DetectionEvent e : step_events[s]) {
            e.time_ps += step_start[s];
            all.push_back(e);
        }
        std::vector<DetectionEvent>().swap(step_events[s]);
    }

    // Dark counts: independent Poisson streams per detector.
    if (cfg.dark_rate_per_detector > 0.0) {
        const auto& xs = sampler.settings();
        std::vector<DetectionEvent> darks;
        const double dark_gap_ps = 1.0 / (cfg.dark_rate_per_detector * kPicosecond);
        for (int d = 0; d < 5; ++d) {
            rng::Stream rng(cfg.seed, detail::kDarkStreamBase + static_cast<std::uint64_t>(d));
            double t = 0.0;
            while (true) {
                t += dark_gap_ps * -std::log(rng.uniform_pos());
                if (t >= static_cast<double>(span_end)) break;
                DetectionEvent e{0, static_cast<Detector>(d), std::llround(t), std::nullopt};
                if (e.detector == Detector::D0) {
                    // Setting in place when the photon would have left the source.
                    const auto it = std::upper_bound(step_start.begin(), step_start.end(),
                                                     e.time_ps - timing.l0_ps);
                    const std::size_t s = it == step_start.begin()
                                              ? 0
                                              : static_cast<std::size_t>(it - step_start.begin()) - 1;
                    e.x_um = static_cast<std::int32_t>(std::llround(xs[s] / kMicrometer));
                }
                darks.push_back(e);
            }
        }
        std::sort(darks.begin(), darks.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
            return std::tie(a.time_ps, a.detector) < std::tie(b.time_ps, b.detector);
        });
        std::uint64_t id = summary.pairs_emitted;
        for (auto& e : darks) {
            e.event_id = id++;
            ++summary.dark_clicks[static_cast<std::size_t>(index_of(e.detector))];
            all.push_back(e);
        }
    }

    std::sort(all.begin(), all.end(), stream_order);
    for (const auto& e : all) {
        ++summary.clicks[static_cast<std::size_t>(index_of(e.detector))];
        sink(e);
    }
    return summary;
}

}  // namespace eraser
