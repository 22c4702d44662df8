#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string_view>

#include "hkv/core.hpp"

namespace hkv {

inline constexpr std::size_t kMaxHashFunctions = 16;
inline constexpr std::uint64_t kDefaultHashSeed = 0x6a09e667f3bcc908ULL;

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fmix64(std::uint64_t k) noexcept
{
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ULL;
    k ^= k >> 33;
    return k;
}

/// Seeded 64-bit hash over a byte string (murmur-style block mixing, fmix64 finalizer).
inline std::uint64_t hash64(std::uint64_t seed, std::string_view bytes) noexcept
{
    constexpr std::uint64_t c1 = 0x87c37b91114253d5ULL;
    constexpr std::uint64_t c2 = 0x4cf5ad432745937fULL;

    std::uint64_t h = seed ^ (static_cast<std::uint64_t>(bytes.size()) * c1);
    const char* p = bytes.data();
    std::size_t remaining = bytes.size();

    while (remaining >= 8) {
        std::uint64_t k;
        std::memcpy(&k, p, 8);
        if constexpr (std::endian::native == std::endian::big) {
            k = __builtin_bswap64(k);
        }
        k *= c1;
        k = std::rotl(k, 31);
        k *= c2;
        h ^= k;
        h = std::rotl(h, 27) * 5 + 0x52dce729;
        p += 8;
        remaining -= 8;
    }

    std::uint64_t tail = 0;
    for (std::size_t i = 0; i < remaining; ++i) {
        tail |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    if (remaining > 0) {
        tail *= c1;
        tail = std::rotl(tail, 31);
        tail *= c2;
        h ^= tail;
    }
    return fmix64(h);
}

/// K independent hash functions over keys, one fixed seed per index. The seeds are
/// derived from a single base seed so the family is stable across restarts.
class HashFamily {
public:
    explicit HashFamily(std::size_t count = kMaxHashFunctions, std::uint64_t base_seed = kDefaultHashSeed)
        : count_(count)
    {
        if (count == 0 || count > kMaxHashFunctions) {
            throw Error(ErrorCode::invalid_config, "hash function count must be in 1..16");
        }
        std::uint64_t state = base_seed;
        for (auto& seed : seeds_) {
            seed = splitmix64(state);
        }
    }

    std::size_t size() const noexcept { return count_; }

    std::uint64_t operator()(std::size_t index, std::string_view key) const
    {
        if (index >= count_) {
            throw Error(ErrorCode::out_of_range, "hash function index " + std::to_string(index) + " >= K");
        }
        return hash64(seeds_[index], key);
    }

    std::uint64_t operator()(std::size_t index, const Key& key) const { return (*this)(index, key.view()); }

    /// Hot-path variant; caller guarantees index < size().
    std::uint64_t unchecked(std::size_t index, std::string_view key) const noexcept
    {
        return hash64(seeds_[index], key);
    }

private:
    std::size_t count_;
    std::array<std::uint64_t, kMaxHashFunctions> seeds_{};
};

}  // namespace hkv
