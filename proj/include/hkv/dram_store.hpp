#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hkv/core.hpp"
#include "hkv/record.hpp"

namespace hkv {

/// [read_count, mean_gap, last_gap, max_gap, first_read_delay]
using FeatureVector = std::array<double, 5>;

struct ObjectMeta {
    ObjectMeta(Key k, std::string v) : key(std::move(k)), value(std::move(v)) {}

    Key key;
    std::string value;
    std::uint8_t clock = 0;
    Timestamp write_time;
    std::uint32_t read_count = 0;
    Timestamp last_access;
    double prev_gap = 0.0;
    double max_gap = 0.0;
    double gap_sum = 0.0;
    std::optional<double> first_read_delay;
    bool ghost_origin = false;
    double score = 0.0;  // cached flashiness; refreshed by the owner on reads and model changes

    std::uint64_t bytes() const noexcept { return record_size(key, value); }
};

/// Gaps run over the merged write+read sequence, the write being the first event.
inline std::optional<FeatureVector> extract_features(const ObjectMeta& meta)
{
    if (meta.read_count == 0) {
        return std::nullopt;
    }
    const double n = meta.read_count;
    return FeatureVector{n, meta.gap_sum / n, meta.prev_gap, meta.max_gap, meta.first_read_delay.value_or(0.0)};
}

struct DramStats {
    std::uint64_t used_bytes = 0;
    std::uint64_t free_bytes = 0;
    std::uint64_t object_count = 0;
    std::uint64_t evicted_count = 0;
    std::uint64_t bytes_written_by_clients = 0;
};

enum class PutOutcome { stored, stored_with_invalidation };

/// Key -> object map with CLOCK bits and per-object access history. Capacity counts
/// record bytes (header + key + value); metadata is not charged.
///
/// Objects live in a slot vector so the CLOCK cursor has a stable round-robin order;
/// vacated slots are recycled.
class DramStore {
public:
    DramStore(std::uint64_t capacity, std::uint8_t clock_max) : capacity_(capacity), clock_max_(clock_max) {}

    /// Inserts a fresh object (client write). Returns the displaced DRAM version's
    /// existence as stored_with_invalidation.
    PutOutcome put(const Key& key, std::string value, Timestamp now)
    {
        ObjectMeta meta(key, std::move(value));
        meta.clock = clock_max_;
        meta.write_time = now;
        meta.last_access = now;
        stats_.bytes_written_by_clients += meta.bytes();
        const bool replaced = erase(key).has_value();
        insert(std::move(meta));
        return replaced ? PutOutcome::stored_with_invalidation : PutOutcome::stored;
    }

    /// Re-inserts an object coming back from flash, keeping its clock bits. History
    /// restarts with one credited read so the object is immediately feature-bearing.
    void reinsert(const Key& key, std::string value, std::uint8_t clock, Timestamp now)
    {
        ObjectMeta meta(key, std::move(value));
        meta.clock = std::min(clock, clock_max_);
        meta.write_time = now;
        meta.last_access = now;
        meta.read_count = 1;
        meta.first_read_delay = 0.0;
        meta.ghost_origin = true;
        erase(key);
        insert(std::move(meta));
    }

    /// Read access: touches the clock and appends the gap since the last access.
    const ObjectMeta* on_read(const Key& key, Timestamp now)
    {
        ObjectMeta* meta = find_mutable(key);
        if (meta == nullptr) {
            return nullptr;
        }
        const double gap = seconds_between(meta->last_access, now);
        meta->clock = clock_max_;
        meta->read_count += 1;
        meta->gap_sum += gap;
        meta->prev_gap = gap;
        meta->max_gap = std::max(meta->max_gap, gap);
        if (!meta->first_read_delay) {
            meta->first_read_delay = seconds_between(meta->write_time, now);
        }
        meta->last_access = std::max(meta->last_access, now);
        return meta;
    }

    /// Updates the cached flashiness score, keeping candidate_bytes() in step.
    void set_score(const Key& key, double score)
    {
        ObjectMeta* meta = find_mutable(key);
        if (meta == nullptr) {
            return;
        }
        untrack(*meta);
        meta->score = score;
        track(*meta);
    }

    template <class Fn>
    void rescore_all(Fn&& fn)
    {
        for (auto& slot : slots_) {
            if (slot) {
                untrack(*slot);
                slot->score = fn(std::as_const(*slot));
                track(*slot);
            }
        }
    }

    /// Bytes of objects whose cached score is positive (flash candidates).
    std::uint64_t candidate_bytes() const noexcept { return candidate_bytes_; }

    const ObjectMeta* find(const Key& key) const
    {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &*slots_[it->second];
    }

    bool contains(const Key& key) const { return index_.contains(key); }

    /// Removes and returns the object.
    std::optional<ObjectMeta> erase(const Key& key)
    {
        auto it = index_.find(key);
        if (it == index_.end()) {
            return std::nullopt;
        }
        const std::uint32_t slot = it->second;
        index_.erase(it);
        std::optional<ObjectMeta> out = std::move(slots_[slot]);
        slots_[slot].reset();
        free_slots_.push_back(slot);
        used_bytes_ -= out->bytes();
        untrack(*out);
        return out;
    }

    /// Advances the CLOCK cursor, decrementing as it goes, and removes the first object
    /// found at clock 0.
    std::optional<ObjectMeta> evict_one()
    {
        if (index_.empty()) {
            return std::nullopt;
        }
        for (;;) {
            if (cursor_ >= slots_.size()) {
                cursor_ = 0;
            }
            auto& slot = slots_[cursor_++];
            if (!slot) {
                continue;
            }
            if (slot->clock == 0) {
                std::optional<ObjectMeta> out = erase(slot->key);
                ++stats_.evicted_count;
                return out;
            }
            --slot->clock;
        }
    }

    /// Evicts only objects already at clock 0, scanning at most one lap; no decrements.
    std::optional<ObjectMeta> evict_cold()
    {
        for (std::size_t visited = 0; visited < slots_.size(); ++visited) {
            if (cursor_ >= slots_.size()) {
                cursor_ = 0;
            }
            auto& slot = slots_[cursor_++];
            if (slot && slot->clock == 0) {
                std::optional<ObjectMeta> out = erase(slot->key);
                ++stats_.evicted_count;
                return out;
            }
        }
        return std::nullopt;
    }

    template <class Fn>
    void for_each(Fn&& fn) const
    {
        for (const auto& slot : slots_) {
            if (slot) {
                fn(*slot);
            }
        }
    }

    std::uint64_t capacity() const noexcept { return capacity_; }
    std::uint64_t used_bytes() const noexcept { return used_bytes_; }
    std::uint64_t free_bytes() const noexcept { return capacity_ > used_bytes_ ? capacity_ - used_bytes_ : 0; }
    std::size_t size() const noexcept { return index_.size(); }
    bool empty() const noexcept { return index_.empty(); }

    DramStats stats() const noexcept
    {
        DramStats s = stats_;
        s.used_bytes = used_bytes_;
        s.free_bytes = free_bytes();
        s.object_count = index_.size();
        return s;
    }

private:
    ObjectMeta* find_mutable(const Key& key)
    {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &*slots_[it->second];
    }

    void track(const ObjectMeta& meta) noexcept
    {
        if (meta.score > 0.0) {
            candidate_bytes_ += meta.bytes();
        }
    }

    void untrack(const ObjectMeta& meta) noexcept
    {
        if (meta.score > 0.0) {
            candidate_bytes_ -= meta.bytes();
        }
    }

    void insert(ObjectMeta meta)
    {
        used_bytes_ += meta.bytes();
        track(meta);
        std::uint32_t slot;
        if (!free_slots_.empty()) {
            slot = free_slots_.back();
            free_slots_.pop_back();
        } else {
            slot = static_cast<std::uint32_t>(slots_.size());
            slots_.emplace_back();
        }
        index_.emplace(meta.key, slot);
        slots_[slot] = std::move(meta);
    }

    std::uint64_t capacity_;
    std::uint8_t clock_max_;
    std::vector<std::optional<ObjectMeta>> slots_;
    std::vector<std::uint32_t> free_slots_;
    std::unordered_map<Key, std::uint32_t> index_;
    std::size_t cursor_ = 0;
    std::uint64_t used_bytes_ = 0;
    std::uint64_t candidate_bytes_ = 0;
    DramStats stats_;
};

}  // namespace hkv
