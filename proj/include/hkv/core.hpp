#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "hkv/error.hpp"

namespace hkv {

inline constexpr std::size_t kMaxKeyLength = 250;

/// Opaque cache key, 1..=250 bytes (memcached text protocol limit).
class Key {
public:
    Key() = delete;

    explicit Key(std::string_view bytes) : bytes_(bytes)
    {
        if (bytes_.empty()) {
            throw Error(ErrorCode::invalid_key, "key must not be empty");
        }
        if (bytes_.size() > kMaxKeyLength) {
            throw Error(ErrorCode::invalid_key, "key longer than 250 bytes");
        }
    }

    static bool is_valid(std::string_view bytes) noexcept
    {
        return !bytes.empty() && bytes.size() <= kMaxKeyLength;
    }

    std::string_view view() const noexcept { return bytes_; }
    const std::string& str() const noexcept { return bytes_; }
    std::size_t size() const noexcept { return bytes_.size(); }

    friend bool operator==(const Key&, const Key&) = default;
    friend auto operator<=>(const Key&, const Key&) = default;

private:
    std::string bytes_;
};

using Duration = std::chrono::microseconds;

/// Microseconds since the trace (or server) epoch.
struct Timestamp {
    std::uint64_t micros = 0;

    static constexpr Timestamp from_seconds(double s) noexcept
    {
        return Timestamp{static_cast<std::uint64_t>(s * 1e6 + 0.5)};
    }

    constexpr double seconds() const noexcept { return static_cast<double>(micros) / 1e6; }

    friend constexpr auto operator<=>(Timestamp, Timestamp) = default;

    friend constexpr Timestamp operator+(Timestamp t, Duration d) noexcept
    {
        return Timestamp{t.micros + static_cast<std::uint64_t>(d.count())};
    }
};

/// Elapsed seconds from `from` to `to`; zero when `to` precedes `from`.
constexpr double seconds_between(Timestamp from, Timestamp to) noexcept
{
    return to.micros > from.micros ? static_cast<double>(to.micros - from.micros) / 1e6 : 0.0;
}

constexpr Duration hours(std::int64_t h) noexcept { return std::chrono::hours(h); }

}  // namespace hkv

template <>
struct std::hash<hkv::Key> {
    std::size_t operator()(const hkv::Key& key) const noexcept
    {
        return std::hash<std::string_view>{}(key.view());
    }
};
