#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hkv/config.hpp"
#include "hkv/core.hpp"

namespace hkv::test {

/// Upper-tail p-value of Pearson's statistic against equal expected counts.
inline double chi_square_uniform_p(const std::vector<std::uint64_t>& counts)
{
    std::uint64_t total = 0;
    for (auto c : counts) {
        total += c;
    }
    const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    double stat = 0.0;
    for (auto c : counts) {
        const double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

inline std::string random_key(std::mt19937_64& rng, std::size_t len = 16)
{
    static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::uniform_int_distribution<std::size_t> pick(0, sizeof alphabet - 2);
    std::string s(len, 'a');
    for (auto& c : s) {
        c = alphabet[pick(rng)];
    }
    return s;
}

/// Fresh path under the system temp dir, removed on destruction.
class TempPath {
public:
    explicit TempPath(const std::string& stem)
    {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    }
    ~TempPath()
    {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

/// 64 KiB segments, 1:7 DRAM:flash at a size that runs in milliseconds.
inline EngineConfig small_config()
{
    EngineConfig c;
    c.segment_size = 64 * KiB;
    c.flash_capacity = 1 * MiB;
    c.dram_capacity = 512 * KiB;
    return c;
}

inline Timestamp at(double seconds) { return Timestamp::from_seconds(seconds); }

}  // namespace hkv::test
