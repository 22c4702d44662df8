#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "hkv/hash.hpp"

namespace hkv {

inline constexpr std::uint64_t kBloomSeed = 0xb10f11e7b10f11e7ULL;

inline std::uint64_t bloom_hash(std::string_view key) noexcept { return hash64(kBloomSeed, key); }

/// Fixed-size bloom filter over pre-hashed keys (Kirsch-Mitzenmacher double hashing).
/// Sized once for a known item count; segments are immutable so no deletion support.
class BloomFilter {
public:
    BloomFilter() = default;

    BloomFilter(std::size_t expected_items, double fp_rate)
    {
        bits_per_item_ = bits_per_item(fp_rate);
        num_bits_ = std::max<std::uint64_t>(64, static_cast<std::uint64_t>(expected_items) * bits_per_item_);
        num_bits_ = (num_bits_ + 63) / 64 * 64;
        words_.assign(num_bits_ / 64, 0);
        num_probes_ = std::max<unsigned>(1, static_cast<unsigned>(std::lround(bits_per_item_ * std::log(2.0))));
    }

    /// ceil(-ln(p) / ln(2)^2): 10 bits per item at p = 0.01.
    static std::uint64_t bits_per_item(double fp_rate)
    {
        const double ln2 = std::log(2.0);
        return static_cast<std::uint64_t>(std::ceil(-std::log(fp_rate) / (ln2 * ln2)));
    }

    void add(std::uint64_t key_hash) noexcept
    {
        if (num_bits_ == 0) {
            return;
        }
        const std::uint64_t h2 = second_hash(key_hash);
        for (unsigned i = 0; i < num_probes_; ++i) {
            const std::uint64_t bit = (key_hash + i * h2) % num_bits_;
            words_[bit / 64] |= std::uint64_t{1} << (bit % 64);
        }
    }

    bool contains(std::uint64_t key_hash) const noexcept
    {
        if (num_bits_ == 0) {
            return false;
        }
        const std::uint64_t h2 = second_hash(key_hash);
        for (unsigned i = 0; i < num_probes_; ++i) {
            const std::uint64_t bit = (key_hash + i * h2) % num_bits_;
            if ((words_[bit / 64] & (std::uint64_t{1} << (bit % 64))) == 0) {
                return false;
            }
        }
        return true;
    }

    void add(std::string_view key) noexcept { add(bloom_hash(key)); }
    bool contains(std::string_view key) const noexcept { return contains(bloom_hash(key)); }

    std::uint64_t bit_count() const noexcept { return num_bits_; }
    std::uint64_t byte_size() const noexcept { return words_.size() * sizeof(std::uint64_t); }
    unsigned probe_count() const noexcept { return num_probes_; }

private:
    static std::uint64_t second_hash(std::uint64_t h) noexcept { return fmix64(h ^ 0x5bd1e9955bd1e995ULL) | 1; }

    std::vector<std::uint64_t> words_;
    std::uint64_t num_bits_ = 0;
    std::uint64_t bits_per_item_ = 0;
    unsigned num_probes_ = 0;
};

}  // namespace hkv
