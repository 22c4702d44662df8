#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hkv/core.hpp"
#include "hkv/error.hpp"

namespace hkv {

enum class Op : std::uint8_t { get, set, del };

inline std::string_view to_string(Op op) noexcept
{
    switch (op) {
    case Op::get: return "get";
    case Op::set: return "set";
    case Op::del: return "delete";
    }
    return "?";
}

/// One request. For gets, value_size optionally carries the object's size at the
/// origin (0 when unknown) so a replay can fill the cache after a miss.
struct TraceEvent {
    std::uint64_t timestamp_us = 0;
    std::string tenant;
    Op op = Op::get;
    std::string key;
    std::uint32_t value_size = 0;

    Timestamp time() const noexcept { return Timestamp{timestamp_us}; }
    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

inline constexpr std::string_view kTraceHeader = "timestamp_us,tenant,op,key,value_size";

/// Line format: timestamp_us,tenant,op,key,value_size
inline TraceEvent parse_trace_line(std::string_view line, std::size_t line_no = 0)
{
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::parse_error, "trace line " + std::to_string(line_no) + ": " + what);
    };
    std::string_view fields[5];
    std::size_t n = 0;
    while (n < 5) {
        const auto comma = line.find(',');
        if (n == 4 || comma == std::string_view::npos) {
            fields[n++] = line;
            if (comma != std::string_view::npos) {
                fail("too many fields");
            }
            break;
        }
        fields[n++] = line.substr(0, comma);
        line.remove_prefix(comma + 1);
    }
    if (n != 5) {
        fail("expected 5 fields");
    }
    auto number = [&](std::string_view text, auto& out, const char* what) {
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
        if (ec != std::errc{} || ptr != text.data() + text.size()) {
            fail(std::string("bad ") + what);
        }
    };
    TraceEvent ev;
    number(fields[0], ev.timestamp_us, "timestamp");
    ev.tenant = fields[1];
    if (fields[2] == "get") {
        ev.op = Op::get;
    } else if (fields[2] == "set") {
        ev.op = Op::set;
    } else if (fields[2] == "delete") {
        ev.op = Op::del;
    } else {
        fail("unknown op '" + std::string(fields[2]) + "'");
    }
    if (!Key::is_valid(fields[3])) {
        fail("invalid key");
    }
    ev.key = fields[3];
    if (fields[4].empty()) {
        ev.value_size = 0;
    } else {
        number(fields[4], ev.value_size, "value_size");
    }
    if (ev.op == Op::set && ev.value_size == 0) {
        fail("set needs value_size >= 1");
    }
    return ev;
}

inline void write_trace_line(std::ostream& out, const TraceEvent& ev)
{
    out << ev.timestamp_us << ',' << ev.tenant << ',' << to_string(ev.op) << ',' << ev.key << ',';
    if (ev.op != Op::del) {
        out << ev.value_size;
    }
    out << '\n';
}

/// Streaming reader; skips an optional header line and blank lines.
class TraceReader {
public:
    explicit TraceReader(std::istream& in) : in_(in) {}

    std::optional<TraceEvent> next()
    {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty() || (line_no_ == 1 && line == kTraceHeader)) {
                continue;
            }
            TraceEvent ev = parse_trace_line(line, line_no_);
            if (ev.timestamp_us < last_) {
                throw Error(ErrorCode::parse_error, "trace line " + std::to_string(line_no_) + ": out of order");
            }
            last_ = ev.timestamp_us;
            return ev;
        }
        return std::nullopt;
    }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
    std::uint64_t last_ = 0;
};

inline std::vector<TraceEvent> read_trace(std::istream& in)
{
    TraceReader reader(in);
    std::vector<TraceEvent> events;
    while (auto ev = reader.next()) {
        events.push_back(std::move(*ev));
    }
    return events;
}

inline std::vector<TraceEvent> load_trace(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open trace " + path);
    }
    return read_trace(in);
}

inline void write_trace(std::ostream& out, const std::vector<TraceEvent>& events, bool header = true)
{
    if (header) {
        out << kTraceHeader << '\n';
    }
    for (const auto& ev : events) {
        write_trace_line(out, ev);
    }
}

inline void save_trace(const std::string& path, const std::vector<TraceEvent>& events)
{
    std::ofstream out(path);
    write_trace(out, events);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot write trace " + path);
    }
}

}  // namespace hkv
