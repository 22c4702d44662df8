#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "hkv/bloom.hpp"
#include "hkv/config.hpp"
#include "hkv/device.hpp"
#include "hkv/flash_entry.hpp"
#include "hkv/hash.hpp"
#include "hkv/record.hpp"
#include "hkv/segment_builder.hpp"

namespace hkv {

struct IndexHit {
    std::string value;
    SegmentSeq seq = 0;
    std::uint64_t slot = 0;
    std::uint64_t offset = 0;
    FlashEntry entry;
};

struct LookupResult {
    std::optional<IndexHit> hit;
    unsigned flash_reads = 0;
};

struct InsertResult {
    std::uint64_t slot = 0;
    bool displaced = false;
    bool aliased = false;  // not indexed: an earlier probe already resolves to this record
    FlashEntry victim;     // previous occupant when displaced
};

struct IndexFootprint {
    std::uint64_t table_bytes = 0;
    std::uint64_t bloom_bytes = 0;
    std::uint64_t live_objects = 0;
    double bytes_per_live_object = 0.0;
    double table_bytes_per_live_object = 0.0;
    double bloom_bits_per_live_object = 0.0;
};

struct IndexStats {
    std::uint64_t lookups = 0;
    std::uint64_t lookup_hits = 0;
    std::uint64_t lookup_flash_reads = 0;
    std::uint64_t displaced = 0;
};

/// DRAM index over flash-resident objects: a chain-free multiple-choice hash table of
/// packed 32-bit entries plus one immutable bloom filter per live segment. Keys are not
/// stored; a probe reads the candidate record from flash and compares the key there.
///
/// Entries pointing at erased segments are treated as empty (lazy invalidation). Records
/// invalidated while their segment is still live are remembered as (segment, offset)
/// tombstones so a probe through another key's entry can never resurrect a stale value.
class FlashIndex {
public:
    FlashIndex(const EngineConfig& config, const HashFamily& hashes)
        : hashes_(hashes), slots_(config.table_slots()), mask_(config.table_slots() - 1),
          segment_size_(config.segment_size), probe_read_size_(config.probe_read_size),
          clock_max_(config.clock_max())
    {
    }

    FlashIndex(const FlashIndex&) = delete;
    FlashIndex& operator=(const FlashIndex&) = delete;

    /// Registers a freshly appended segment. Segments must arrive in sequence order.
    void add_segment(SegmentSeq seq, BloomFilter bloom, std::uint64_t placed_count, std::uint64_t placed_bytes)
    {
        if (!segments_.empty() && seq != newest_seq() + 1) {
            throw Error(ErrorCode::out_of_range, "segments must be registered in sequence order");
        }
        if (segments_.empty()) {
            first_seq_ = seq;
        }
        SegmentInfo info;
        info.bloom = std::move(bloom);
        info.avg_record_bytes =
            placed_count == 0 ? 0.0 : static_cast<double>(placed_bytes) / static_cast<double>(placed_count);
        segments_.push_back(std::move(info));
    }

    /// Forgets the oldest live segment; its entries become dead without touching the table.
    void drop_oldest_segment()
    {
        if (segments_.empty()) {
            throw Error(ErrorCode::device_empty, "no live segments in index");
        }
        const SegmentInfo& info = segments_.front();
        hot_bytes_ -= static_cast<double>(info.live_entries - info.ghost_entries) * info.avg_record_bytes;
        live_entries_ -= info.live_entries;
        segments_.pop_front();
        ++first_seq_;
        if (segments_.empty()) {
            hot_bytes_ = 0.0;
        }
    }

    /// Probes slots h_i(key) for i = 0..K-1 and takes the first empty or dead one. When all
    /// K are occupied, the occupant of the last probed slot is overwritten.
    ///
    /// A probe passed on the way may hold another key's entry for the same segment whose
    /// hash function lands on this key's record too; lookups would then resolve this key
    /// through the other key's entry and mutate the wrong slot. Such a key is left
    /// unindexed (aliased) and its record tombstoned; the caller keeps it in DRAM.
    InsertResult insert(const Key& key, SegmentSeq seq, unsigned hash_fn_id, unsigned clock)
    {
        SegmentInfo* target = segment(seq);
        if (target == nullptr) {
            throw Error(ErrorCode::dead_segment, "insert into non-live segment " + std::to_string(seq));
        }
        const FlashEntry fresh = FlashEntry::make(seq, hash_fn_id, std::min<unsigned>(clock, clock_max_));
        const std::uint64_t offset = placement_offset(hashes_, hash_fn_id, key.view(), segment_size_);
        InsertResult result;
        std::uint64_t slot = 0;
        bool placed = false;
        for (std::size_t i = 0; i < hashes_.size(); ++i) {
            slot = probe_slot(i, key.view());
            const FlashEntry occupant = load(slot);
            if (!live_segment_of(occupant)) {
                placed = true;
                break;
            }
            if (full_seq(occupant) == seq &&
                placement_offset(hashes_, occupant.hash_fn_id(), key.view(), segment_size_) == offset) {
                target->tombstones.insert(offset);
                result.aliased = true;
                result.slot = slot;
                return result;
            }
        }
        if (!placed) {
            result.displaced = true;
            result.victim = load(slot);
            forget_entry(result.victim);
            ++stats_.displaced;
        }
        store(slot, fresh);
        ++target->live_entries;
        ++live_entries_;
        hot_bytes_ += target->avg_record_bytes;
        result.slot = slot;
        return result;
    }

    LookupResult lookup(const Key& key, const FlashDevice& device)
    {
        LookupResult result = find(key, device);
        ++stats_.lookups;
        stats_.lookup_flash_reads += result.flash_reads;
        if (result.hit) {
            ++stats_.lookup_hits;
        }
        return result;
    }

    /// lookup() without the stats, for audits.
    LookupResult peek(const Key& key, const FlashDevice& device) const { return find(key, device); }

    /// Removes the key's flash entry if present. Idempotent. Returns the reads issued and
    /// whether an entry was removed.
    LookupResult invalidate(const Key& key, const FlashDevice& device)
    {
        LookupResult result = find(key, device);
        if (result.hit) {
            tombstone(result.hit->seq, result.hit->offset);
            forget_entry(result.hit->entry);
            store(result.hit->slot, FlashEntry{});
        }
        return result;
    }

    /// Slot whose entry makes the record (key, seq, offset) reachable, found without any
    /// flash read. Mirrors lookup's acceptance rule.
    std::optional<std::uint64_t> locate(const Key& key, SegmentSeq seq, std::uint64_t offset) const
    {
        if (segment(seq) == nullptr || is_tombstoned(seq, offset)) {
            return std::nullopt;
        }
        for (std::size_t i = 0; i < hashes_.size(); ++i) {
            const std::uint64_t slot = probe_slot(i, key.view());
            const FlashEntry entry = load(slot);
            if (entry.valid() && full_seq(entry) == seq &&
                placement_offset(hashes_, entry.hash_fn_id(), key.view(), segment_size_) == offset) {
                return slot;
            }
        }
        return std::nullopt;
    }

    /// Clears a slot known to hold a live entry (used when its object leaves flash).
    void clear_slot(std::uint64_t slot)
    {
        forget_entry(load(slot));
        store(slot, FlashEntry{});
    }

    void mark_ghost(std::uint64_t slot)
    {
        const FlashEntry entry = load(slot);
        SegmentInfo* info = live_segment_of(entry);
        if (info == nullptr || entry.ghost()) {
            return;
        }
        store(slot, entry.with_ghost(true));
        ++info->ghost_entries;
        hot_bytes_ -= info->avg_record_bytes;
    }

    void unmark_ghost(std::uint64_t slot)
    {
        const FlashEntry entry = load(slot);
        SegmentInfo* info = live_segment_of(entry);
        if (info == nullptr || !entry.ghost()) {
            return;
        }
        store(slot, entry.with_ghost(false));
        --info->ghost_entries;
        hot_bytes_ += info->avg_record_bytes;
    }

    void clock_touch(std::uint64_t slot)
    {
        const FlashEntry entry = load(slot);
        if (entry.valid()) {
            store(slot, entry.with_clock(clock_max_));
        }
    }

    void clock_decrement(std::uint64_t slot)
    {
        const FlashEntry entry = load(slot);
        if (entry.valid() && entry.clock() > 0) {
            store(slot, entry.with_clock(entry.clock() - 1));
        }
    }

    FlashEntry entry(std::uint64_t slot) const { return load(slot); }

    /// True when the entry is valid and its segment is still live.
    bool is_live(FlashEntry entry) const { return live_segment_of(entry) != nullptr; }

    /// Full sequence number of a live entry's segment.
    SegmentSeq full_seq(FlashEntry entry) const
    {
        const SegmentSeq newest = newest_seq();
        return newest - ((newest - entry.seq24()) & FlashEntry::kSeqMask);
    }

    std::uint64_t slot_count() const noexcept { return slots_.size(); }
    std::uint64_t probe_slot(std::size_t i, std::string_view key) const noexcept
    {
        return hashes_.unchecked(i, key) & mask_;
    }

    bool has_segments() const noexcept { return !segments_.empty(); }
    SegmentSeq oldest_seq() const noexcept { return first_seq_; }
    SegmentSeq newest_seq() const noexcept { return first_seq_ + segments_.size() - 1; }
    std::size_t live_segment_count() const noexcept { return segments_.size(); }

    const BloomFilter* bloom(SegmentSeq seq) const
    {
        const SegmentInfo* info = segment(seq);
        return info ? &info->bloom : nullptr;
    }

    /// Estimated bytes of non-ghost flash objects (per-segment mean record size times count).
    double flash_hot_bytes() const noexcept { return hot_bytes_ > 0.0 ? hot_bytes_ : 0.0; }
    std::uint64_t live_objects() const noexcept { return live_entries_; }
    std::uint64_t ghost_objects() const noexcept
    {
        std::uint64_t n = 0;
        for (const auto& s : segments_) {
            n += s.ghost_entries;
        }
        return n;
    }
    std::uint64_t tombstone_count() const noexcept
    {
        std::uint64_t n = 0;
        for (const auto& s : segments_) {
            n += s.tombstones.size();
        }
        return n;
    }

    IndexFootprint memory_footprint() const
    {
        IndexFootprint f;
        f.table_bytes = 4 * slots_.size();
        for (const auto& s : segments_) {
            f.bloom_bytes += s.bloom.byte_size();
        }
        f.live_objects = live_entries_;
        if (f.live_objects > 0) {
            const auto live = static_cast<double>(f.live_objects);
            f.bytes_per_live_object = static_cast<double>(f.table_bytes + f.bloom_bytes) / live;
            f.table_bytes_per_live_object = static_cast<double>(f.table_bytes) / live;
            f.bloom_bits_per_live_object = 8.0 * static_cast<double>(f.bloom_bytes) / live;
        }
        return f;
    }

    const IndexStats& stats() const noexcept { return stats_; }

private:
    struct SegmentInfo {
        BloomFilter bloom;
        double avg_record_bytes = 0.0;
        std::uint64_t live_entries = 0;
        std::uint64_t ghost_entries = 0;
        std::unordered_set<std::uint64_t> tombstones;  // offsets of invalidated records
    };

    FlashEntry load(std::uint64_t slot) const { return FlashEntry(slots_[slot].load(std::memory_order_relaxed)); }
    void store(std::uint64_t slot, FlashEntry e) { slots_[slot].store(e.raw(), std::memory_order_relaxed); }

    SegmentInfo* segment(SegmentSeq seq)
    {
        if (segments_.empty() || seq < first_seq_ || seq > newest_seq()) {
            return nullptr;
        }
        return &segments_[seq - first_seq_];
    }

    const SegmentInfo* segment(SegmentSeq seq) const { return const_cast<FlashIndex*>(this)->segment(seq); }

    SegmentInfo* live_segment_of(FlashEntry entry)
    {
        if (!entry.valid() || segments_.empty()) {
            return nullptr;
        }
        return segment(full_seq(entry));
    }

    const SegmentInfo* live_segment_of(FlashEntry entry) const
    {
        return const_cast<FlashIndex*>(this)->live_segment_of(entry);
    }

    /// Drops the per-segment accounting of an entry about to be overwritten or cleared.
    void forget_entry(FlashEntry entry)
    {
        SegmentInfo* info = live_segment_of(entry);
        if (info == nullptr) {
            return;
        }
        --info->live_entries;
        --live_entries_;
        if (entry.ghost()) {
            --info->ghost_entries;
        } else {
            hot_bytes_ -= info->avg_record_bytes;
        }
    }

    void tombstone(SegmentSeq seq, std::uint64_t offset)
    {
        if (SegmentInfo* info = segment(seq)) {
            info->tombstones.insert(offset);
        }
    }

    bool is_tombstoned(SegmentSeq seq, std::uint64_t offset) const
    {
        const SegmentInfo* info = segment(seq);
        return info != nullptr && info->tombstones.contains(offset);
    }

    LookupResult find(const Key& key, const FlashDevice& device) const
    {
        LookupResult result;
        if (segments_.empty()) {
            return result;
        }
        const std::uint64_t key_hash = bloom_hash(key.view());
        for (std::size_t i = 0; i < hashes_.size(); ++i) {
            const std::uint64_t slot = probe_slot(i, key.view());
            const FlashEntry entry = load(slot);
            const SegmentInfo* info = live_segment_of(entry);
            if (info == nullptr || !info->bloom.contains(key_hash)) {
                continue;
            }
            const SegmentSeq seq = full_seq(entry);
            const std::uint64_t offset =
                placement_offset(hashes_, entry.hash_fn_id(), key.view(), segment_size_);
            if (info->tombstones.contains(offset)) {
                continue;
            }
            const std::uint64_t probe_len = std::min<std::uint64_t>(probe_read_size_, segment_size_ - offset);
            std::string probe = device.read(seq, offset, probe_len);
            ++result.flash_reads;
            auto header = peek_header(probe);
            if (!header || header->key_len != key.size() || offset + header->total_size() > segment_size_ ||
                std::string_view(probe).substr(kRecordHeaderSize, header->key_len) != key.view()) {
                continue;
            }
            IndexHit hit;
            if (header->total_size() <= probe.size()) {
                hit.value = probe.substr(kRecordHeaderSize + header->key_len, header->value_len);
            } else {
                const std::uint64_t have = probe.size() - kRecordHeaderSize - header->key_len;
                hit.value = probe.substr(kRecordHeaderSize + header->key_len);
                hit.value += device.read(seq, offset + probe.size(), header->value_len - have);
                ++result.flash_reads;
            }
            hit.seq = seq;
            hit.slot = slot;
            hit.offset = offset;
            hit.entry = entry;
            result.hit = std::move(hit);
            return result;
        }
        return result;
    }

    const HashFamily& hashes_;
    std::vector<std::atomic<std::uint32_t>> slots_;
    std::uint64_t mask_;
    std::uint64_t segment_size_;
    std::uint64_t probe_read_size_;
    unsigned clock_max_;
    std::deque<SegmentInfo> segments_;
    SegmentSeq first_seq_ = 0;
    std::uint64_t live_entries_ = 0;
    double hot_bytes_ = 0.0;
    IndexStats stats_;
};

}  // namespace hkv
