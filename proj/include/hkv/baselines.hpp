#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <list>
#include <string>
#include <unordered_map>
#include <vector>

#include "hkv/config.hpp"
#include "hkv/metrics.hpp"
#include "hkv/record.hpp"

namespace hkv {

/// Size-only cache model driven by the replay harness.
class ReplayPolicy {
public:
    virtual ~ReplayPolicy() = default;
    virtual std::string name() const = 0;
    /// Returns true on a hit.
    virtual bool get(const std::string& key, Timestamp now) = 0;
    virtual void set(const std::string& key, std::uint32_t value_size, Timestamp now) = 0;
    virtual void erase(const std::string& key, Timestamp now) = 0;
    virtual MetricsReport report() const = 0;
};

inline std::uint64_t object_bytes(const std::string& key, std::uint32_t value_size) noexcept
{
    return kRecordHeaderSize + key.size() + value_size;
}

/// Byte-capacity LRU over keys; tracks sizes only.
class LruList {
public:
    struct Item {
        std::string key;
        std::uint64_t bytes;
    };

    bool touch(const std::string& key)
    {
        auto it = map_.find(key);
        if (it == map_.end()) {
            return false;
        }
        items_.splice(items_.begin(), items_, it->second);
        return true;
    }

    bool contains(const std::string& key) const { return map_.contains(key); }

    /// Inserts at the MRU end, replacing any previous entry.
    void insert(const std::string& key, std::uint64_t bytes)
    {
        erase(key);
        items_.push_front(Item{key, bytes});
        map_.emplace(key, items_.begin());
        bytes_ += bytes;
    }

    bool erase(const std::string& key)
    {
        auto it = map_.find(key);
        if (it == map_.end()) {
            return false;
        }
        bytes_ -= it->second->bytes;
        items_.erase(it->second);
        map_.erase(it);
        return true;
    }

    const Item& lru() const { return items_.back(); }

    Item pop_lru()
    {
        Item item = std::move(items_.back());
        items_.pop_back();
        map_.erase(item.key);
        bytes_ -= item.bytes;
        return item;
    }

    std::uint64_t bytes() const noexcept { return bytes_; }
    bool empty() const noexcept { return items_.empty(); }
    std::size_t size() const noexcept { return items_.size(); }

private:
    std::list<Item> items_;
    std::unordered_map<std::string, std::list<Item>::iterator> map_;
    std::uint64_t bytes_ = 0;
};

/// Exact LRU over usable DRAM, no flash. Reference for CLOCK fidelity.
class LruOracle final : public ReplayPolicy {
public:
    explicit LruOracle(const EngineConfig& config) : capacity_(config.dram_usable()) {}
    explicit LruOracle(std::uint64_t capacity) : capacity_(capacity) {}

    std::string name() const override { return "dram_lru_oracle"; }

    bool get(const std::string& key, Timestamp) override
    {
        ++c_.gets;
        if (lru_.touch(key)) {
            ++c_.dram_hits;
            return true;
        }
        ++c_.misses;
        return false;
    }

    void set(const std::string& key, std::uint32_t value_size, Timestamp) override
    {
        const std::uint64_t bytes = object_bytes(key, value_size);
        ++c_.sets;
        c_.client_bytes_written += bytes;
        lru_.insert(key, bytes);
        while (lru_.bytes() > capacity_) {
            lru_.pop_lru();
            ++c_.dram_evictions;
        }
    }

    void erase(const std::string& key, Timestamp) override
    {
        ++c_.deletes;
        lru_.erase(key);
    }

    MetricsReport report() const override
    {
        MetricsReport r;
        r.policy = name();
        r.counters = c_;
        r.derived = derive(c_);
        return r;
    }

private:
    std::uint64_t capacity_;
    LruList lru_;
    CounterSnapshot c_;
};

/// DRAM LRU whose every eviction is buffered into segments and written to a FIFO flash
/// log. A flash hit promotes the object back to DRAM.
class VictimCache final : public ReplayPolicy {
public:
    explicit VictimCache(const EngineConfig& config)
        : capacity_(config.dram_usable()), segment_(config.segment_size), max_segments_(config.segment_count())
    {
    }

    std::string name() const override { return "victim"; }

    bool get(const std::string& key, Timestamp) override
    {
        ++c_.gets;
        if (dram_.touch(key)) {
            ++c_.dram_hits;
            return true;
        }
        auto it = flash_.find(key);
        if (it == flash_.end()) {
            ++c_.misses;
            return false;
        }
        ++c_.flash_hits;
        const std::uint64_t bytes = it->second.bytes;
        if (it->second.seq == open_seq_) {
            buffer_bytes_ -= bytes;
        }
        flash_.erase(it);
        admit(key, bytes);
        return true;
    }

    void set(const std::string& key, std::uint32_t value_size, Timestamp) override
    {
        const std::uint64_t bytes = object_bytes(key, value_size);
        ++c_.sets;
        c_.client_bytes_written += bytes;
        forget_flash(key);
        admit(key, bytes);
    }

    void erase(const std::string& key, Timestamp) override
    {
        ++c_.deletes;
        if (!dram_.erase(key)) {
            forget_flash(key);
        }
    }

    MetricsReport report() const override
    {
        MetricsReport r;
        r.policy = name();
        r.counters = c_;
        r.derived = derive(c_);
        return r;
    }

private:
    struct Location {
        std::uint64_t seq;
        std::uint64_t bytes;
    };

    void forget_flash(const std::string& key)
    {
        auto it = flash_.find(key);
        if (it != flash_.end()) {
            if (it->second.seq == open_seq_) {
                buffer_bytes_ -= it->second.bytes;
            }
            flash_.erase(it);
        }
    }

    void admit(const std::string& key, std::uint64_t bytes)
    {
        dram_.insert(key, bytes);
        while (dram_.bytes() > capacity_) {
            LruList::Item victim = dram_.pop_lru();
            ++c_.dram_evictions;
            c_.dram_evicted_bytes += victim.bytes;
            append(victim.key, victim.bytes);
        }
    }

    void append(const std::string& key, std::uint64_t bytes)
    {
        if (bytes > segment_) {
            return;
        }
        if (buffer_bytes_ + bytes > segment_) {
            seal();
        }
        buffer_bytes_ += bytes;
        buffer_keys_.push_back(key);
        flash_[key] = Location{open_seq_, bytes};
    }

    void seal()
    {
        if (segments_.size() == max_segments_) {
            auto& oldest = segments_.front();
            for (const auto& k : oldest.keys) {
                auto it = flash_.find(k);
                if (it != flash_.end() && it->second.seq == oldest.seq) {
                    flash_.erase(it);
                }
            }
            segments_.pop_front();
            ++c_.segments_erased;
        }
        segments_.push_back(Segment{open_seq_, std::move(buffer_keys_)});
        buffer_keys_.clear();
        ++c_.segments_written;
        c_.flash_bytes_written += segment_;
        ++open_seq_;
        buffer_bytes_ = 0;
    }

    struct Segment {
        std::uint64_t seq;
        std::vector<std::string> keys;
    };

    std::uint64_t capacity_;
    std::uint64_t segment_;
    std::uint64_t max_segments_;
    LruList dram_;
    std::unordered_map<std::string, Location> flash_;
    std::deque<Segment> segments_;
    std::vector<std::string> buffer_keys_;
    std::uint64_t buffer_bytes_ = 0;
    std::uint64_t open_seq_ = 0;
    CounterSnapshot c_;
};

/// Approximation of RIPQ with 8 insertion points: objects are grouped by read count
/// (class = min(7, reads)) in per-class DRAM buffers, written to flash a segment at a time
/// into that class's queue, and rewritten whenever a hit moves them to another class.
/// Flash is a segmented LRU of 8 FIFO queues of blocks: an overflowing queue demotes its
/// oldest block one level down without rewriting it; queue 0 evicts.
class Ripq8 final : public ReplayPolicy {
public:
    static constexpr int kClasses = 8;

    explicit Ripq8(const EngineConfig& config)
        : segment_(config.segment_size),
          buffer_capacity_(std::max(config.segment_size, config.dram_usable() / kClasses)),
          queue_capacity_(std::max<std::uint64_t>(1, config.segment_count() / kClasses))
    {
    }

    std::string name() const override { return "ripq8"; }

    bool get(const std::string& key, Timestamp) override
    {
        ++c_.gets;
        auto it = objects_.find(key);
        if (it == objects_.end()) {
            ++c_.misses;
            return false;
        }
        Object& obj = it->second;
        ++obj.reads;
        const int wanted = std::min(kClasses - 1, static_cast<int>(obj.reads));
        if (obj.in_buffer) {
            ++c_.dram_hits;
            if (wanted != obj.klass) {
                buffers_[obj.klass].erase(key);
                obj.klass = wanted;
                buffers_[wanted].insert(key, obj.bytes);
                drain(wanted);
            } else {
                buffers_[wanted].touch(key);
            }
            return true;
        }
        ++c_.flash_hits;
        const int queue = blocks_.at(obj.seq).queue;
        if (wanted != queue) {
            // Rewrite: regroup with objects of the new class.
            obj.in_buffer = true;
            obj.klass = wanted;
            buffers_[wanted].insert(key, obj.bytes);
            drain(wanted);
        }
        return true;
    }

    void set(const std::string& key, std::uint32_t value_size, Timestamp) override
    {
        const std::uint64_t bytes = object_bytes(key, value_size);
        ++c_.sets;
        c_.client_bytes_written += bytes;
        remove(key);
        objects_.emplace(key, Object{bytes, 0, 0, true, 0});
        buffers_[0].insert(key, bytes);
        drain(0);
    }

    void erase(const std::string& key, Timestamp) override
    {
        ++c_.deletes;
        remove(key);
    }

    MetricsReport report() const override
    {
        MetricsReport r;
        r.policy = name();
        r.counters = c_;
        r.derived = derive(c_);
        r.note = "approximation: 8 read-count classes, segmented-LRU flash queues";
        return r;
    }

private:
    struct Object {
        std::uint64_t bytes;
        std::uint32_t reads;
        int klass;
        bool in_buffer;
        std::uint64_t seq;
    };

    struct Block {
        int queue;
        std::vector<std::string> keys;
    };

    void remove(const std::string& key)
    {
        auto it = objects_.find(key);
        if (it == objects_.end()) {
            return;
        }
        if (it->second.in_buffer) {
            buffers_[it->second.klass].erase(key);
        }
        objects_.erase(it);
    }

    /// Writes segments from the oldest end of an over-full class buffer.
    void drain(int klass)
    {
        LruList& buf = buffers_[klass];
        while (buf.bytes() > buffer_capacity_) {
            std::vector<std::string> keys;
            std::uint64_t used = 0;
            while (!buf.empty() && (keys.empty() || used + buf.lru().bytes <= segment_)) {
                LruList::Item item = buf.pop_lru();
                used += item.bytes;
                keys.push_back(std::move(item.key));
            }
            write_block(klass, std::move(keys));
        }
    }

    void write_block(int queue, std::vector<std::string> keys)
    {
        const std::uint64_t seq = next_seq_++;
        for (const auto& k : keys) {
            Object& obj = objects_.at(k);
            obj.in_buffer = false;
            obj.seq = seq;
        }
        blocks_.emplace(seq, Block{queue, std::move(keys)});
        queues_[queue].push_back(seq);
        ++c_.segments_written;
        c_.flash_bytes_written += segment_;
        for (int q = queue; q >= 0; --q) {
            if (queues_[q].size() <= queue_capacity_) {
                break;
            }
            const std::uint64_t oldest = queues_[q].front();
            queues_[q].pop_front();
            if (q == 0) {
                evict_block(oldest);
            } else {
                blocks_.at(oldest).queue = q - 1;
                queues_[q - 1].push_back(oldest);
            }
        }
    }

    void evict_block(std::uint64_t seq)
    {
        auto it = blocks_.find(seq);
        for (const auto& k : it->second.keys) {
            auto obj = objects_.find(k);
            if (obj != objects_.end() && !obj->second.in_buffer && obj->second.seq == seq) {
                objects_.erase(obj);
            }
        }
        blocks_.erase(it);
        ++c_.segments_erased;
    }

    std::uint64_t segment_;
    std::uint64_t buffer_capacity_;
    std::uint64_t queue_capacity_;
    std::array<LruList, kClasses> buffers_;
    std::array<std::deque<std::uint64_t>, kClasses> queues_;
    std::unordered_map<std::uint64_t, Block> blocks_;
    std::unordered_map<std::string, Object> objects_;
    std::uint64_t next_seq_ = 0;
    CounterSnapshot c_;
};

}  // namespace hkv
