#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hkv/engine.hpp"

namespace hkv {

/// Longest command line accepted before the connection is told off.
inline constexpr std::size_t kMaxCommandLine = 2048;

/// One connection's worth of memcached text protocol (get, set, delete, stats, quit).
/// Bytes go in through feed(); complete responses come out. Flags are parsed and
/// reported back as 0; exptime is parsed and ignored.
class ProtocolSession {
public:
    using Clock = std::function<Timestamp()>;

    ProtocolSession(Engine& engine, Clock clock) : engine_(engine), clock_(std::move(clock)) {}

    std::string feed(std::string_view bytes)
    {
        std::string out;
        buffer_.append(bytes);
        std::size_t pos = 0;
        while (!closed_) {
            if (discard_ > 0) {
                const std::size_t take = std::min<std::uint64_t>(discard_, buffer_.size() - pos);
                pos += take;
                discard_ -= take;
                if (discard_ > 0) {
                    break;
                }
                continue;
            }
            if (pending_) {
                if (buffer_.size() - pos < pending_->bytes + 2) {
                    break;
                }
                finish_set(std::string_view(buffer_).substr(pos, pending_->bytes + 2), out);
                pos += pending_->bytes + 2;
                pending_.reset();
                continue;
            }
            const auto nl = buffer_.find('\n', pos);
            if (nl == std::string::npos) {
                if (buffer_.size() - pos > kMaxCommandLine) {
                    if (!swallow_) {
                        reply(out, "CLIENT_ERROR line too long\r\n");
                    }
                    pos = buffer_.size();
                    swallow_ = true;
                }
                break;
            }
            std::string_view line(buffer_.data() + pos, nl - pos);
            pos = nl + 1;
            if (swallow_) {
                swallow_ = false;
                continue;
            }
            if (!line.empty() && line.back() == '\r') {
                line.remove_suffix(1);
            }
            dispatch(line, out);
        }
        buffer_.erase(0, pos);
        return out;
    }

    bool closed() const noexcept { return closed_; }

private:
    struct PendingSet {
        std::string key;
        std::size_t bytes = 0;
        bool noreply = false;
    };

    static std::vector<std::string_view> split(std::string_view line)
    {
        std::vector<std::string_view> words;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && line[i] == ' ') {
                ++i;
            }
            const std::size_t start = i;
            while (i < line.size() && line[i] != ' ') {
                ++i;
            }
            if (i > start) {
                words.push_back(line.substr(start, i - start));
            }
        }
        return words;
    }

    template <class T>
    static bool number(std::string_view text, T& out)
    {
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
        return ec == std::errc{} && ptr == text.data() + text.size();
    }

    static bool key_ok(std::string_view key)
    {
        if (!Key::is_valid(key)) {
            return false;
        }
        for (char c : key) {
            if (static_cast<unsigned char>(c) <= ' ' || c == 0x7f) {
                return false;
            }
        }
        return true;
    }

    void reply(std::string& out, std::string_view text, bool noreply = false)
    {
        if (!noreply) {
            out.append(text);
        }
    }

    void dispatch(std::string_view line, std::string& out)
    {
        const auto words = split(line);
        if (words.empty()) {
            reply(out, "ERROR\r\n");
            return;
        }
        const std::string_view verb = words[0];
        if (verb == "get" || verb == "gets") {
            do_get(words, out);
        } else if (verb == "set") {
            do_set(words, out);
        } else if (verb == "delete") {
            do_delete(words, out);
        } else if (verb == "stats" && words.size() == 1) {
            do_stats(out);
        } else if (verb == "quit") {
            closed_ = true;
        } else {
            reply(out, "ERROR\r\n");
        }
    }

    void do_get(const std::vector<std::string_view>& words, std::string& out)
    {
        if (words.size() < 2) {
            reply(out, "ERROR\r\n");
            return;
        }
        for (std::size_t i = 1; i < words.size(); ++i) {
            if (!key_ok(words[i])) {
                reply(out, "CLIENT_ERROR bad command line format\r\n");
                return;
            }
        }
        for (std::size_t i = 1; i < words.size(); ++i) {
            GetResult r = engine_.get(Key(words[i]), clock_());
            if (r.value) {
                out.append("VALUE ").append(words[i]).append(" 0 ").append(std::to_string(r.value->size()));
                out.append("\r\n").append(*r.value).append("\r\n");
            }
        }
        out.append("END\r\n");
    }

    // set <key> <flags> <exptime> <bytes> [noreply]
    void do_set(const std::vector<std::string_view>& words, std::string& out)
    {
        std::uint32_t flags = 0;
        std::int64_t exptime = 0;
        std::size_t bytes = 0;
        const bool noreply = words.size() == 6 && words[5] == "noreply";
        if ((words.size() != 5 && !noreply) || !key_ok(words[1]) || !number(words[2], flags) ||
            !number(words[3], exptime) || !number(words[4], bytes)) {
            reply(out, "CLIENT_ERROR bad command line format\r\n");
            return;
        }
        if (bytes > engine_.config().segment_size) {
            reply(out, "SERVER_ERROR object too large for cache\r\n", noreply);
            discard_ = bytes + 2;
            return;
        }
        pending_ = PendingSet{std::string(words[1]), bytes, noreply};
    }

    void finish_set(std::string_view block, std::string& out)
    {
        const PendingSet& p = *pending_;
        if (block.substr(p.bytes) != "\r\n") {
            reply(out, "CLIENT_ERROR bad data chunk\r\n");
            // The data ran past the declared length; drop the rest of it.
            if (block.back() != '\n') {
                swallow_ = true;
            }
            return;
        }
        try {
            engine_.set(Key(p.key), std::string(block.substr(0, p.bytes)), clock_());
            reply(out, "STORED\r\n", p.noreply);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::oversize) {
                throw;
            }
            reply(out, "SERVER_ERROR object too large for cache\r\n", p.noreply);
        }
    }

    void do_delete(const std::vector<std::string_view>& words, std::string& out)
    {
        const bool noreply = words.size() == 3 && words[2] == "noreply";
        if ((words.size() != 2 && !noreply) || !key_ok(words[1])) {
            reply(out, "CLIENT_ERROR bad command line format\r\n");
            return;
        }
        const Outcome o = engine_.erase(Key(words[1]), clock_());
        reply(out, o == Outcome::deleted ? "DELETED\r\n" : "NOT_FOUND\r\n", noreply);
    }

    void do_stats(std::string& out)
    {
        const MetricsReport r = engine_.report();
        auto stat = [&out](std::string_view name, const std::string& value) {
            out.append("STAT ").append(name).append(" ").append(value).append("\r\n");
        };
#define HKV_FIELD(name, owner) stat(#name, std::to_string(r.counters.name));
        HKV_COUNTERS(HKV_FIELD)
#undef HKV_FIELD
        auto fixed = [](double v) {
            char buf[32];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
            return std::string(buf, ptr);
        };
        stat("hit_rate", fixed(r.derived.hit_rate));
        stat("clwa", fixed(r.derived.clwa));
        stat("ghost_objects", std::to_string(r.ghost_objects));
        out.append("END\r\n");
    }

    Engine& engine_;
    Clock clock_;
    std::string buffer_;
    std::optional<PendingSet> pending_;
    std::uint64_t discard_ = 0;  // payload bytes of a rejected set still to skip
    bool swallow_ = false;
    bool closed_ = false;
};

}  // namespace hkv
