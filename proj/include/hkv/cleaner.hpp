#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hkv/config.hpp"
#include "hkv/device.hpp"
#include "hkv/dram_store.hpp"
#include "hkv/flash_index.hpp"
#include "hkv/hash.hpp"
#include "hkv/metrics.hpp"
#include "hkv/segment_builder.hpp"

namespace hkv {

/// Object lifecycle notifications, used by audits. Every client write starts an object
/// in DRAM; each later callback moves it between tiers or ends it.
class LifecycleObserver {
public:
    virtual ~LifecycleObserver() = default;
    virtual void admitted(const Key&) {}
    /// Update or delete removed the current version (from DRAM or flash).
    virtual void superseded(const Key&) {}
    virtual void flushed(const Key&, SegmentSeq, std::uint64_t /*offset*/) {}
    virtual void reinserted(const Key&) {}
    /// Removed from DRAM by CLOCK eviction.
    virtual void evicted(const Key&) {}
    /// Ghost at reclaim, or a reinsertion that found no room.
    virtual void dropped(const Key&) {}
    /// Record found at reclaim with no index entry pointing at it.
    virtual void unreachable(const Key&, SegmentSeq, std::uint64_t /*offset*/) {}
};

/// Engine-side callbacks the cleaner needs: flashiness scores and key departures.
class CleanerHooks {
public:
    virtual ~CleanerHooks() = default;
    virtual double score(const ObjectMeta& meta) = 0;
    /// The key left the cache (eviction or drop).
    virtual void left_cache(const Key& key) = 0;
};

/// Token bucket over trace (or wall) time; holds at most one segment of tokens.
class WriteBudget {
public:
    WriteBudget(double bytes_per_sec, std::uint64_t segment_size)
        : rate_(bytes_per_sec), cap_(static_cast<double>(segment_size))
    {
    }

    void accrue(Timestamp now)
    {
        if (!started_) {
            started_ = true;
            last_ = now;
            return;
        }
        if (now > last_) {
            if (!unlimited()) {
                tokens_ = std::min(cap_, tokens_ + rate_ * seconds_between(last_, now));
            }
            last_ = now;
        }
    }

    bool allows_segment() const noexcept { return unlimited() || tokens_ >= cap_; }

    void debit_segment() noexcept
    {
        if (!unlimited()) {
            tokens_ -= cap_;
        }
    }

    bool unlimited() const noexcept { return std::isinf(rate_); }
    double tokens() const noexcept { return unlimited() ? cap_ : tokens_; }

private:
    double rate_;
    double cap_;
    double tokens_ = 0.0;
    bool started_ = false;
    Timestamp last_;
};

/// Candidate pool handed to the segment builder, in segments.
inline constexpr std::uint64_t kFlushPoolSegments = 2;

struct MaintainActions {
    std::uint64_t segments_flushed = 0;
    std::uint64_t segments_reclaimed = 0;
    std::uint64_t dram_evictions = 0;
    std::uint64_t ghosts_marked = 0;
};

struct ReclaimResult {
    std::uint64_t reinserted = 0;
    std::uint64_t dropped = 0;
};

/// Global CLOCK, ghost marking against the hot-data threshold, segment flush under the
/// write budget, FIFO reclaim with reinsertion, and DRAM eviction when flushing can't help.
class Cleaner {
public:
    Cleaner(const EngineConfig& config, const HashFamily& hashes, DramStore& dram, FlashIndex& index,
            FlashDevice& device, CounterSet& counters, CleanerHooks& hooks, LifecycleObserver* observer = nullptr)
        : config_(config), hashes_(hashes), dram_(dram), index_(index), device_(device), counters_(counters),
          hooks_(hooks), observer_(observer), budget_(config.flash_write_budget, config.segment_size)
    {
    }

    /// HDT = usable DRAM + flash capacity x hot fraction.
    double hot_data_threshold() const noexcept
    {
        return static_cast<double>(config_.dram_usable()) +
               static_cast<double>(config_.flash_capacity) * config_.hot_fraction;
    }

    bool over_hot_threshold() const noexcept
    {
        return static_cast<double>(dram_.used_bytes()) + index_.flash_hot_bytes() > hot_data_threshold();
    }

    MaintainActions maintain(Timestamp now)
    {
        MaintainActions actions;
        budget_.accrue(now);
        const std::uint64_t segment = config_.segment_size;
        bool flushing = true;
        while (dram_.free_bytes() < segment) {
            if (flushing && try_flush(now, actions)) {
                continue;
            }
            flushing = false;
            auto victim = dram_.evict_one();
            if (!victim) {
                break;
            }
            record_eviction(*victim);
            ++actions.dram_evictions;
        }
        if (over_hot_threshold()) {
            actions.ghosts_marked += ghost_round();
        }
        return actions;
    }

    /// Gathers candidates and writes one segment of the best of them. With `pad` the
    /// segment is written even when candidates don't fill it. Returns the segment written.
    std::optional<SegmentSeq> flush_segment(Timestamp now, bool pad)
    {
        set_now(now);
        budget_.accrue(now);
        if (!enough_candidates(pad)) {
            return std::nullopt;
        }
        if (!budget_.allows_segment()) {
            CounterSet::add(counters_.budget_throttles);
            return std::nullopt;
        }
        if (device_.full()) {
            reclaim_oldest();
            if (!enough_candidates(pad)) {
                return std::nullopt;
            }
        }
        return write_segment(gather_candidates(), pad);
    }

    /// Reads the oldest segment, reinserts its reachable hot objects into DRAM, drops
    /// ghosts and unreachable records, and erases it.
    ReclaimResult reclaim_oldest()
    {
        ReclaimResult result;
        const SegmentSeq seq = device_.oldest_live();
        const std::string image = device_.read(seq, 0, config_.segment_size);
        std::vector<std::pair<ObjectMeta, std::uint8_t>> keep;
        std::uint64_t pos = 0;
        const std::string_view bytes(image);
        while (pos < bytes.size()) {
            pos = bytes.find_first_not_of('\0', pos);
            if (pos == std::string_view::npos) {
                break;
            }
            auto view = decode_record(bytes.substr(pos));
            if (!view) {
                break;
            }
            Key key(view->key);
            const std::uint64_t offset = pos;
            pos += view->size;
            CounterSet::add(counters_.reclaim_scanned);

            auto slot = index_.locate(key, seq, offset);
            if (!slot) {
                ++result.dropped;
                if (observer_) {
                    observer_->unreachable(key, seq, offset);
                }
                continue;
            }
            const FlashEntry entry = index_.entry(*slot);
            index_.clear_slot(*slot);
            if (entry.ghost()) {
                ++result.dropped;
                hooks_.left_cache(key);
                if (observer_) {
                    observer_->dropped(key);
                }
                continue;
            }
            ObjectMeta meta(key, std::string(view->value));
            keep.emplace_back(std::move(meta), static_cast<std::uint8_t>(entry.clock()));
        }

        index_.drop_oldest_segment();
        device_.erase_oldest();
        CounterSet::add(counters_.segments_erased);

        for (auto& [meta, clock] : keep) {
            const std::uint64_t need = meta.bytes();
            while (dram_.free_bytes() < need) {
                auto cold = dram_.evict_cold();
                if (!cold) {
                    break;
                }
                record_eviction(*cold);
            }
            if (dram_.free_bytes() < need) {
                ++result.dropped;
                hooks_.left_cache(meta.key);
                if (observer_) {
                    observer_->dropped(meta.key);
                }
                continue;
            }
            dram_.reinsert(meta.key, std::move(meta.value), clock, last_now_);
            dram_.set_score(meta.key, hooks_.score(*dram_.find(meta.key)));
            ++result.reinserted;
            if (observer_) {
                observer_->reinserted(meta.key);
            }
        }
        CounterSet::add(counters_.reclaim_reinserted, result.reinserted);
        CounterSet::add(counters_.reclaim_dropped, result.dropped);
        refresh_gauges();
        return result;
    }

    /// Sweeps index slots round-robin: clock-0 entries become ghosts, others decrement.
    /// Stops once hot bytes fit under HDT or after clock_max + 1 full laps.
    std::uint64_t ghost_round()
    {
        std::uint64_t marked = 0;
        const std::uint64_t slots = index_.slot_count();
        const std::uint64_t limit = slots * (config_.clock_max() + 1u);
        for (std::uint64_t visited = 0; visited < limit && over_hot_threshold(); ++visited) {
            const std::uint64_t slot = ghost_cursor_;
            ghost_cursor_ = (ghost_cursor_ + 1) % slots;
            const FlashEntry entry = index_.entry(slot);
            if (!index_.is_live(entry) || entry.ghost()) {
                continue;
            }
            if (entry.clock() == 0) {
                index_.mark_ghost(slot);
                ++marked;
            } else {
                index_.clock_decrement(slot);
            }
        }
        CounterSet::add(counters_.ghosts_marked, marked);
        return marked;
    }

    void set_now(Timestamp now) noexcept { last_now_ = std::max(last_now_, now); }

    const WriteBudget& budget() const noexcept { return budget_; }
    double mean_segment_utilization() const noexcept
    {
        return segments_built_ == 0 ? 0.0 : utilization_sum_ / static_cast<double>(segments_built_);
    }
    double mean_hash_attempts() const noexcept
    {
        return segments_built_ == 0 ? 0.0 : attempts_sum_ / static_cast<double>(segments_built_);
    }

    void refresh_gauges()
    {
        const IndexFootprint f = index_.memory_footprint();
        CounterSet::set(counters_.index_table_bytes, f.table_bytes);
        CounterSet::set(counters_.bloom_bytes, f.bloom_bytes);
        CounterSet::set(counters_.live_flash_objects, f.live_objects);
    }

private:
    bool try_flush(Timestamp now, MaintainActions& actions)
    {
        const std::uint64_t before = dram_.used_bytes();
        const std::uint64_t erased_before = counters_.segments_erased.load(std::memory_order_relaxed);
        if (!flush_segment(now, false)) {
            return false;
        }
        ++actions.segments_flushed;
        actions.segments_reclaimed += counters_.segments_erased.load(std::memory_order_relaxed) - erased_before;
        return dram_.used_bytes() < before;
    }

    bool enough_candidates(bool pad) const
    {
        const std::uint64_t total = dram_.candidate_bytes();
        return total > 0 && (pad || total >= config_.segment_size);
    }

    std::vector<const ObjectMeta*> gather_candidates()
    {
        std::vector<std::pair<double, const ObjectMeta*>> scored;
        dram_.for_each([&](const ObjectMeta& meta) {
            if (meta.score > 0.0) {
                scored.emplace_back(meta.score, &meta);
            }
        });
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) {
                return a.first > b.first;
            }
            return a.second->key < b.second->key;
        });
        std::vector<const ObjectMeta*> out;
        out.reserve(scored.size());
        for (const auto& [s, m] : scored) {
            out.push_back(m);
        }
        return out;
    }

    /// The builder sees up to kFlushPoolSegments segments of the best candidates; with
    /// only one segment's worth, collisions leave about 30% of it empty.
    SegmentSeq write_segment(const std::vector<const ObjectMeta*>& ranked, bool pad)
    {
        const std::uint64_t segment = config_.segment_size;
        std::vector<SegmentCandidate> candidates;
        std::uint64_t taken = 0;
        for (const ObjectMeta* m : ranked) {
            const std::uint64_t len = m->bytes();
            if (len > segment) {
                continue;
            }
            if (taken + len > kFlushPoolSegments * segment) {
                break;
            }
            taken += len;
            candidates.push_back(SegmentCandidate{m->key, m->value, 0.0});
        }
        BuildResult built = build_segment(candidates, hashes_, segment);
        const SegmentSeq seq = device_.append_segment(built.image.bytes());
        budget_.debit_segment();
        const auto& placements = built.image.placements();
        index_.add_segment(seq, built.image.seal_bloom(config_.bloom_fp_rate), placements.size(),
                           built.image.used_bytes());

        std::uint64_t indexed = 0;
        std::uint64_t indexed_bytes = 0;
        for (std::size_t k = 0; k < built.placed.size(); ++k) {
            const Key& key = candidates[built.placed[k]].key;
            const InsertResult ins = index_.insert(key, seq, placements[k].hash_fn_id, dram_.find(key)->clock);
            if (ins.aliased) {
                CounterSet::add(counters_.aliased_records);
                continue;  // stays in DRAM for a later segment
            }
            ++indexed;
            indexed_bytes += placements[k].record_len;
            if (ins.displaced) {
                CounterSet::add(counters_.displaced_entries);
            }
            if (observer_) {
                observer_->flushed(key, seq, placements[k].offset);
            }
            dram_.erase(key);
        }

        CounterSet::add(counters_.segments_written);
        CounterSet::add(counters_.flash_bytes_written, segment);
        CounterSet::add(counters_.flushed_objects, indexed);
        CounterSet::add(counters_.flushed_object_bytes, indexed_bytes);
        if (pad && taken < segment) {
            CounterSet::add(counters_.padded_segments);
        }
        utilization_sum_ += built.image.utilization();
        attempts_sum_ += built.avg_hash_attempts;
        ++segments_built_;
        refresh_gauges();
        return seq;
    }

    void record_eviction(const ObjectMeta& victim)
    {
        CounterSet::add(counters_.dram_evictions);
        CounterSet::add(counters_.dram_evicted_bytes, victim.bytes());
        hooks_.left_cache(victim.key);
        if (observer_) {
            observer_->evicted(victim.key);
        }
    }

    const EngineConfig& config_;
    const HashFamily& hashes_;
    DramStore& dram_;
    FlashIndex& index_;
    FlashDevice& device_;
    CounterSet& counters_;
    CleanerHooks& hooks_;
    LifecycleObserver* observer_;
    WriteBudget budget_;
    std::uint64_t ghost_cursor_ = 0;
    Timestamp last_now_;
    double utilization_sum_ = 0.0;
    double attempts_sum_ = 0.0;
    std::uint64_t segments_built_ = 0;
};

}  // namespace hkv
