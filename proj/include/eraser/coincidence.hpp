#pragma once

// Delayed-window coincidence matching of D0 clicks with D1..D4 clicks,
// fringe histograms over the D0 position, and accidental-rate estimates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eraser/apparatus.hpp"
#include "eraser/errors.hpp"
#include "eraser/events.hpp"
#include "eraser/fringe_model.hpp"

namespace eraser {

enum class MatchPolicy { Closest, First };

struct CoincidenceConfig {
    std::int64_t expected_delay_ps = 8339;
    std::int64_t window_ps = 3000;   // full width, |gap - delay| < window/2
    MatchPolicy matching_policy = MatchPolicy::Closest;
    std::int32_t x_bin_um = 50;

    void validate() const {
        if (window_ps <= 0) throw InvalidParameter("window_ps must be > 0");
        if (x_bin_um <= 0) throw InvalidParameter("x_bin_um must be > 0");
    }
};

struct MatchedPair {
    std::uint64_t d0_id = 0;
    std::uint64_t idler_id = 0;
    std::int64_t d0_time_ps = 0;
    std::int64_t idler_time_ps = 0;
    Detector idler = Detector::D1;
    std::int32_t x_um = 0;

    std::int64_t gap_ps() const { return idler_time_ps - d0_time_ps; }
};

struct MatchStats {
    std::uint64_t d0_total = 0;
    std::uint64_t matched = 0;
    std::uint64_t unmatched_d0 = 0;
    std::array<std::uint64_t, 4> idler_total{};
    std::array<std::uint64_t, 4> idler_unmatched{};
};

/// Single-pass matcher over a time-ordered stream. D0 clicks are resolved in
/// time order once no later event can fall inside their window; each idler
/// click is consumed by at most one D0 click.
class CoincidenceMatcher {
public:
    explicit CoincidenceMatcher(CoincidenceConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    void push(const DetectionEvent& e) {
        if (last_time_ && e.time_ps < *last_time_)
            throw InvalidParameter("events must be pushed in nondecreasing time order");
        last_time_ = e.time_ps;
        resolve_before(e.time_ps);
        if (e.detector == Detector::D0) {
            ++stats_.d0_total;
            pending_.push_back(e);
        } else {
            ++stats_.idler_total[static_cast<std::size_t>(idler_index(e.detector))];
            idlers_.push_back({e, false});
        }
        resolve_before(e.time_ps);
        prune(e.time_ps);
    }

    template <class Range>
    void push_all(const Range& events) {
        for (const auto& e : events) push(e);
    }

    /// Resolves every pending D0 click; call once after the last event.
    void finish() {
        while (!pending_.empty()) resolve_front();
        for (const auto& c : idlers_) drop(c);
        idlers_.clear();
    }

    const std::vector<MatchedPair>& matches() const { return matches_; }
    const MatchStats& stats() const { return stats_; }

private:
    struct IdlerClick {
        DetectionEvent event;
        bool consumed;
    };

    // 2 * (gap - delay), compared against +-window.
    std::int64_t offset2(std::int64_t t0, std::int64_t tj) const {
        return 2 * (tj - t0 - cfg_.expected_delay_ps);
    }

    void resolve_before(std::int64_t now) {
        while (!pending_.empty() &&
               2 * (now - pending_.front().time_ps - cfg_.expected_delay_ps) >= cfg_.window_ps)
            resolve_front();
    }

    void resolve_front() {
        const DetectionEvent d0 = pending_.front();
        pending_.pop_front();
        auto it = std::partition_point(idlers_.begin(), idlers_.end(), [&](const IdlerClick& c) {
            return offset2(d0.time_ps, c.event.time_ps) <= -cfg_.window_ps;
        });
        IdlerClick* best = nullptr;
        std::int64_t best_dist = 0;
        for (; it != idlers_.end() && offset2(d0.time_ps, it->event.time_ps) < cfg_.window_ps; ++it) {
            if (it->consumed) continue;
            const std::int64_t dist = std::abs(offset2(d0.time_ps, it->event.time_ps));
            if (!best || dist < best_dist) {
                best = &*it;
                best_dist = dist;
                if (cfg_.matching_policy == MatchPolicy::First) break;
            }
        }
        if (!best) {
            ++stats_.unmatched_d0;
            return;
        }
        best->consumed = true;
        ++stats_.matched;
        matches_.push_back({d0.event_id, best->event.event_id, d0.time_ps, best->event.time_ps,
                            best->event.detector, d0.x_um.value_or(0)});
    }

    // Idler clicks that no present or future D0 window can reach.
    void prune(std::int64_t now) {
        const std::int64_t ref = pending_.empty() ? now : pending_.front().time_ps;
        while (!idlers_.empty() && offset2(ref, idlers_.front().event.time_ps) <= -cfg_.window_ps) {
            drop(idlers_.front());
            idlers_.pop_front();
        }
    }

    void drop(const IdlerClick& c) {
        if (!c.consumed)
            ++stats_.idler_unmatched[static_cast<std::size_t>(idler_index(c.event.detector))];
    }

    CoincidenceConfig cfg_;
    std::deque<DetectionEvent> pending_;
    std::deque<IdlerClick> idlers_;
    std::vector<MatchedPair> matches_;
    MatchStats stats_;
    std::optional<std::int64_t> last_time_;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    MatchStats stats;
};

inline MatchResult match_coincidences(std::span<const DetectionEvent> events,
                                      const CoincidenceConfig& cfg) {
    CoincidenceMatcher m(cfg);
    m.push_all(events);
    m.finish();
    return {m.matches(), m.stats()};
}

/// Coincidence counts per idler channel binned over the D0 position.
struct FringeHistogram {
    static constexpr std::array<const char*, 4> kPairNames = {"0-1", "0-2", "0-3", "0-4"};

    std::int32_t bin_um = 50;
    std::vector<std::int32_t> centers_um;
    std::array<std::vector<std::uint64_t>, 4> counts;
    std::uint64_t matched = 0;
    std::uint64_t unmatched_d0 = 0;
    double accidental_estimate = 0.0;  // per D0 click

    std::uint64_t total(std::size_t channel) const {
        std::uint64_t n = 0;
        for (auto c : counts[channel]) n += c;
        return n;
    }

    std::vector<double> x_m() const {
        std::vector<double> x;
        x.reserve(centers_um.size());
        for (auto c : centers_um) x.push_back(c * kMicrometer);
        return x;
    }

    std::vector<double> channel(std::size_t c) const {
        return {counts[c].begin(), counts[c].end()};
    }

    /// Bin-wise sum of two channels.
    std::vector<double> sum(std::size_t a, std::size_t b) const {
        std::vector<double> s(centers_um.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = static_cast<double>(counts[a][i] + counts[b][i]);
        return s;
    }

    /// CSV `pair,x_center_um,count`, one row per (pair, bin).
    void write_csv(std::ostream& out) const {
        std::string buf = "pair,x_center_um,count\n";
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < centers_um.size(); ++i)
                fmt::format_to(std::back_inserter(buf), "{},{},{}\n", kPairNames[c], centers_um[i],
                               counts[c][i]);
        out << buf;
    }
};

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Bin k covers [k*bin - bin/2, k*bin + bin/2).
inline std::int64_t bin_index(std::int64_t x_um, std::int32_t bin_um) {
    return floor_div(2 * x_um + bin_um, 2 * static_cast<std::int64_t>(bin_um));
}

}  // namespace detail

/// Bins matched pairs by D0 position. Bin centers are multiples of x_bin_um;
/// the range covers [x_lo_um, x_hi_um] when given, otherwise the data.
inline FringeHistogram histogram(std::span<const MatchedPair> pairs, const CoincidenceConfig& cfg,
                                 std::optional<std::int32_t> x_lo_um = std::nullopt,
                                 std::optional<std::int32_t> x_hi_um = std::nullopt) {
    cfg.validate();
    FringeHistogram h;
    h.bin_um = cfg.x_bin_um;
    h.matched = pairs.size();
    std::optional<std::int64_t> lo, hi;
    if (x_lo_um) lo = detail::bin_index(*x_lo_um, cfg.x_bin_um);
    if (x_hi_um) hi = detail::bin_index(*x_hi_um, cfg.x_bin_um);
    for (const auto& p : pairs) {
        const auto k = detail::bin_index(p.x_um, cfg.x_bin_um);
        if (!x_lo_um) lo = lo ? std::min(*lo, k) : k;
        if (!x_hi_um) hi = hi ? std::max(*hi, k) : k;
    }
    if (!lo || !hi || *hi < *lo) return h;
    const auto n = static_cast<std::size_t>(*hi - *lo + 1);
    for (std::size_t i = 0; i < n; ++i)
        h.centers_um.push_back(static_cast<std::int32_t>((*lo + static_cast<std::int64_t>(i)) * cfg.x_bin_um));
    for (auto& c : h.counts) c.assign(n, 0);
    for (const auto& p : pairs) {
        const auto k = detail::bin_index(p.x_um, cfg.x_bin_um);
        if (k < *lo || k > *hi) continue;
        ++h.counts[static_cast<std::size_t>(idler_index(p.idler))][static_cast<std::size_t>(k - *lo)];
    }
    return h;
}

/// Fringe fit of one channel (0 for pair 0-1 ... 3 for pair 0-4).
inline FringeFit fit_fringe(const FringeHistogram& h, std::size_t channel, const ApparatusGeometry& g) {
    const auto x = h.x_m();
    const auto c = h.channel(channel);
    return fit_fringe(x, c, g);
}

struct AccidentalEstimate {
    double per_d0 = 0.0;         // accidental matches per D0 click
    double per_d0_err = 0.0;     // Poisson 1-sigma
    std::uint64_t matches = 0;
    std::uint64_t d0_clicks = 0;
};

/// Counts idler clicks inside a window displaced to `offset_multiple` times
/// the expected delay (no consumption), per D0 click.
inline AccidentalEstimate accidental_rate_estimate(std::span<const DetectionEvent> events,
                                                   const CoincidenceConfig& cfg,
                                                   int offset_multiple = 10) {
    cfg.validate();
    if (events.empty()) throw InsufficientData("no events");
    const std::int64_t span = events.back().time_ps - events.front().time_ps;
    if (span < 100 * cfg.window_ps)
        throw InsufficientData("event span shorter than 100 coincidence windows");

    std::vector<std::int64_t> idler_times;
    for (const auto& e : events)
        if (is_idler(e.detector)) idler_times.push_back(e.time_ps);

    const std::int64_t shift = static_cast<std::int64_t>(offset_multiple) * cfg.expected_delay_ps;
    AccidentalEstimate est;
    for (const auto& e : events) {
        if (e.detector != Detector::D0) continue;
        ++est.d0_clicks;
        // Open window: 2|t - (t0 + shift)| < window.
        const auto first = std::partition_point(idler_times.begin(), idler_times.end(), [&](std::int64_t t) {
            return 2 * (t - e.time_ps - shift) <= -cfg.window_ps;
        });
        for (auto it = first; it != idler_times.end() && 2 * (*it - e.time_ps - shift) < cfg.window_ps; ++it)
            ++est.matches;
    }
    if (est.d0_clicks == 0) throw InsufficientData("no D0 clicks");
    const auto n = static_cast<double>(est.d0_clicks);
    est.per_d0 = static_cast<double>(est.matches) / n;
    est.per_d0_err = std::sqrt(static_cast<double>(est.matches)) / n;
    return est;
}

}  // namespace eraser
