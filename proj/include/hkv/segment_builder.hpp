#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hkv/bloom.hpp"
#include "hkv/core.hpp"
#include "hkv/hash.hpp"
#include "hkv/record.hpp"

namespace hkv {

/// Offset of `key`'s record inside a segment under placement function `fn`.
/// Depends only on the key, so a lookup can recompute it without knowing the value length.
inline std::uint64_t placement_offset(const HashFamily& hashes, std::size_t fn, std::string_view key,
                                      std::uint64_t segment_size) noexcept
{
    return hashes.unchecked(fn, key) % (segment_size - kRecordHeaderSize + 1);
}

struct Placement {
    std::string key;
    std::uint8_t hash_fn_id = 0;
    std::uint64_t offset = 0;
    std::uint64_t record_len = 0;
};

/// A flash-bound segment under construction: the byte image, its placements, and the
/// free intervals that remain. Unused bytes stay zero.
class SegmentImage {
public:
    explicit SegmentImage(std::uint64_t segment_size) : bytes_(segment_size, '\0'), segment_size_(segment_size)
    {
        free_.emplace(0, segment_size);
    }

    bool is_free(std::uint64_t offset, std::uint64_t len) const
    {
        if (offset + len > segment_size_) {
            return false;
        }
        auto it = free_.upper_bound(offset);
        if (it == free_.begin()) {
            return false;
        }
        --it;
        return it->first <= offset && offset + len <= it->second;
    }

    /// Writes the record at `offset`; the extent must be free.
    void place(const Key& key, std::string_view value, std::uint8_t fn, std::uint64_t offset)
    {
        const std::uint64_t len = record_size(key, value);
        auto it = std::prev(free_.upper_bound(offset));
        const std::uint64_t start = it->first;
        const std::uint64_t end = it->second;
        free_.erase(it);
        if (start < offset) {
            free_.emplace(start, offset);
        }
        if (offset + len < end) {
            free_.emplace(offset + len, end);
        }
        encode_record(std::span<char>(bytes_).subspan(offset, len), key, value);
        placements_.push_back(Placement{key.str(), fn, offset, len});
        key_hashes_.push_back(bloom_hash(key.view()));
        used_bytes_ += len;
    }

    /// Bloom filter over every placed key, sized for exactly the placed count.
    BloomFilter seal_bloom(double fp_rate) const
    {
        BloomFilter bloom(key_hashes_.size(), fp_rate);
        for (auto h : key_hashes_) {
            bloom.add(h);
        }
        return bloom;
    }

    const std::string& bytes() const noexcept { return bytes_; }
    const std::vector<Placement>& placements() const noexcept { return placements_; }
    std::uint64_t segment_size() const noexcept { return segment_size_; }
    std::uint64_t used_bytes() const noexcept { return used_bytes_; }
    double utilization() const noexcept
    {
        return static_cast<double>(used_bytes_) / static_cast<double>(segment_size_);
    }
    std::size_t free_interval_count() const noexcept { return free_.size(); }

private:
    std::string bytes_;
    std::uint64_t segment_size_;
    std::map<std::uint64_t, std::uint64_t> free_;  // start -> end, disjoint
    std::vector<Placement> placements_;
    std::vector<std::uint64_t> key_hashes_;
    std::uint64_t used_bytes_ = 0;
};

/// Tries placement functions 0..K-1 in order; the first whose extent is free wins.
/// Returns nullopt (image untouched) when all K extents collide.
inline std::optional<Placement> try_place(SegmentImage& image, const HashFamily& hashes, const Key& key,
                                          std::string_view value)
{
    const std::uint64_t len = record_size(key, value);
    if (value.size() > kMaxValueLength || len > image.segment_size()) {
        throw Error(ErrorCode::oversize, "record of " + std::to_string(len) + " bytes exceeds segment");
    }
    for (std::size_t fn = 0; fn < hashes.size(); ++fn) {
        const std::uint64_t offset = placement_offset(hashes, fn, key.view(), image.segment_size());
        if (image.is_free(offset, len)) {
            image.place(key, value, static_cast<std::uint8_t>(fn), offset);
            return image.placements().back();
        }
    }
    return std::nullopt;
}

struct SegmentCandidate {
    Key key;
    std::string_view value;
    double score = 0.0;
};

struct BuildResult {
    SegmentImage image;
    std::vector<std::size_t> placed;   // indices into the candidate list
    std::vector<std::size_t> skipped;  // indices into the candidate list
    double avg_hash_attempts = 0.0;
};

/// Packs candidates largest-first (ties: higher score, then key order). Candidates that
/// find no free extent are reported as skipped so the caller can retry them later.
inline BuildResult build_segment(std::span<const SegmentCandidate> candidates, const HashFamily& hashes,
                                 std::uint64_t segment_size)
{
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = candidates[a];
        const auto& cb = candidates[b];
        const auto la = record_size(ca.key, ca.value);
        const auto lb = record_size(cb.key, cb.value);
        if (la != lb) {
            return la > lb;
        }
        if (ca.score != cb.score) {
            return ca.score > cb.score;
        }
        return ca.key < cb.key;
    });

    BuildResult result{SegmentImage(segment_size), {}, {}, 0.0};
    std::uint64_t attempts = 0;
    for (std::size_t idx : order) {
        const auto& c = candidates[idx];
        if (record_size(c.key, c.value) > segment_size) {
            result.skipped.push_back(idx);
            continue;
        }
        if (auto placement = try_place(result.image, hashes, c.key, c.value)) {
            result.placed.push_back(idx);
            attempts += placement->hash_fn_id + 1u;
        } else {
            result.skipped.push_back(idx);
        }
    }
    if (!result.placed.empty()) {
        result.avg_hash_attempts = static_cast<double>(attempts) / static_cast<double>(result.placed.size());
    }
    return result;
}

}  // namespace hkv
