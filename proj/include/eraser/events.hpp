#pragma once

// Detector click records and the event CSV format:
//
//   event_id,detector,time_ps,x_um
//   17,D0,3336,-250
//   17,D1,11675,
//
// Rows are sorted by time_ps (ties by event_id), detector is D0..D4, x_um is
// present exactly on D0 rows. Lines beginning with '#' before the header are
// comments.

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "eraser/apparatus.hpp"
#include "eraser/errors.hpp"

namespace eraser {

struct DetectionEvent {
    std::uint64_t event_id = 0;
    Detector detector = Detector::D0;
    std::int64_t time_ps = 0;
    std::optional<std::int32_t> x_um;

    friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// Stream order: time, then event id, then detector.
inline bool stream_order(const DetectionEvent& a, const DetectionEvent& b) {
    return std::tie(a.time_ps, a.event_id, a.detector) < std::tie(b.time_ps, b.event_id, b.detector);
}

inline constexpr std::string_view kEventCsvHeader = "event_id,detector,time_ps,x_um";

class EventCsvWriter {
public:
    explicit EventCsvWriter(std::ostream& out) : out_(out) {}
    EventCsvWriter(const EventCsvWriter&) = delete;
    EventCsvWriter& operator=(const EventCsvWriter&) = delete;
    ~EventCsvWriter() { flush(); }

    void header() {
        buf_.append(kEventCsvHeader);
        buf_.push_back('\n');
    }

    void operator()(const DetectionEvent& e) {
        if (e.x_um)
            fmt::format_to(std::back_inserter(buf_), "{},{},{},{}\n", e.event_id,
                           to_string(e.detector), e.time_ps, *e.x_um);
        else
            fmt::format_to(std::back_inserter(buf_), "{},{},{},\n", e.event_id,
                           to_string(e.detector), e.time_ps);
        if (buf_.size() > (1u << 20)) flush();
    }

    void flush() {
        out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        buf_.clear();
    }

private:
    std::ostream& out_;
    std::string buf_;
};

namespace detail {

template <class T>
bool parse_int(std::string_view s, T& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Incremental, validating reader for the event CSV.
class EventCsvReader {
public:
    explicit EventCsvReader(std::istream& in) : in_(in) {}

    /// Next event, or nullopt at end of input. Throws ParseError for
    /// malformed text and FormatError for schema violations.
    std::optional<DetectionEvent> next() {
        if (!header_seen_) read_header();
        std::string line;
        if (!std::getline(in_, line)) return std::nullopt;
        ++line_no_;
        DetectionEvent e = parse_row(line);
        if (last_time_ && e.time_ps < *last_time_)
            throw FormatError(line_no_, "time_ps decreases (" + std::to_string(e.time_ps) + " < " +
                                            std::to_string(*last_time_) + ")");
        last_time_ = e.time_ps;
        return e;
    }

    std::size_t line() const { return line_no_; }

private:
    void read_header() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.front() == '#') continue;
            if (line != kEventCsvHeader)
                throw ParseError(line_no_, "expected header '" + std::string(kEventCsvHeader) + "'");
            header_seen_ = true;
            return;
        }
        throw ParseError(line_no_ + 1, "missing header");
    }

    DetectionEvent parse_row(std::string_view line) const {
        std::string_view fields[4];
        std::size_t count = 0;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (count == 4) throw ParseError(line_no_, "too many fields");
            fields[count++] = line.substr(start, comma == std::string_view::npos ? comma : comma - start);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (count != 4) throw ParseError(line_no_, "expected 4 fields");

        DetectionEvent e;
        if (!detail::parse_int(fields[0], e.event_id))
            throw ParseError(line_no_, "bad event_id '" + std::string(fields[0]) + "'");
        const auto det = parse_detector(fields[1]);
        if (!det) throw ParseError(line_no_, "bad detector '" + std::string(fields[1]) + "'");
        e.detector = *det;
        if (!detail::parse_int(fields[2], e.time_ps) || e.time_ps < 0)
            throw ParseError(line_no_, "bad time_ps '" + std::string(fields[2]) + "'");
        if (!fields[3].empty()) {
            std::int32_t x = 0;
            if (!detail::parse_int(fields[3], x))
                throw ParseError(line_no_, "bad x_um '" + std::string(fields[3]) + "'");
            e.x_um = x;
        }
        if (e.detector == Detector::D0 && !e.x_um)
            throw FormatError(line_no_, "D0 row without x_um");
        if (e.detector != Detector::D0 && e.x_um)
            throw FormatError(line_no_, "x_um on a non-D0 row");
        return e;
    }

    std::istream& in_;
    std::size_t line_no_ = 0;
    bool header_seen_ = false;
    std::optional<std::int64_t> last_time_;
};

/// Reads and validates a whole event stream.
inline std::vector<DetectionEvent> ingest_events(std::istream& in) {
    EventCsvReader reader(in);
    std::vector<DetectionEvent> events;
    while (auto e = reader.next()) events.push_back(*e);
    return events;
}

}  // namespace eraser
