#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>

#include "hkv/classifier.hpp"
#include "hkv/cleaner.hpp"
#include "hkv/config.hpp"
#include "hkv/device.hpp"
#include "hkv/dram_store.hpp"
#include "hkv/flash_index.hpp"
#include "hkv/hash.hpp"
#include "hkv/metrics.hpp"

namespace hkv {

/// Tenant id under the "tenant:key" convention; keys without a colon belong to "".
inline std::string_view tenant_of(std::string_view key) noexcept
{
    const auto colon = key.find(':');
    return colon == std::string_view::npos ? std::string_view{} : key.substr(0, colon);
}

enum class Outcome { dram_hit, flash_hit, miss, stored, deleted, not_found };

inline const char* to_string(Outcome o) noexcept
{
    switch (o) {
    case Outcome::dram_hit: return "dram_hit";
    case Outcome::flash_hit: return "flash_hit";
    case Outcome::miss: return "miss";
    case Outcome::stored: return "stored";
    case Outcome::deleted: return "deleted";
    case Outcome::not_found: return "not_found";
    }
    return "?";
}

struct GetResult {
    Outcome kind = Outcome::miss;
    std::optional<std::string> value;
    unsigned flash_reads = 0;
};

struct EngineOptions {
    /// Maintenance runs inline after every request, on the caller's timestamps.
    bool deterministic = true;
    /// Empty keeps flash in memory.
    std::string flash_file;
    bool bypass_page_cache = true;
    bool record_device_writes = false;
    LifecycleObserver* observer = nullptr;
    std::chrono::milliseconds cleaner_period{2};
};

struct TenantCounters {
    std::uint64_t gets = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t sets = 0;
    std::uint64_t bytes_written = 0;
};

/// get/set/delete over the DRAM tier, the flash tier and per-tenant admission filters.
/// A single engine mutex serializes requests and maintenance.
class Engine : private CleanerHooks {
public:
    explicit Engine(EngineConfig config, EngineOptions options = {})
        : config_(validated(std::move(config))), options_(std::move(options)),
          hashes_(config_.num_hash_functions, config_.hash_seed), device_(make_device(config_, options_)),
          index_(config_, hashes_), dram_(config_.store_capacity(), config_.clock_max()),
          cleaner_(config_, hashes_, dram_, index_, device_, counters_, *this, options_.observer),
          epoch_(std::chrono::steady_clock::now())
    {
        cleaner_.refresh_gauges();
    }

    ~Engine() { stop_cleaner(); }

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    GetResult get(std::string_view tenant, const Key& key, Timestamp now)
    {
        std::unique_lock lock(mutex_);
        GetResult result;
        TenantState& ts = tenant_state(tenant);
        ts.classifier.observe(now);
        CounterSet::add(counters_.gets);
        ++ts.counters.gets;
        if (const ObjectMeta* meta = dram_.on_read(key, now)) {
            const auto features = extract_features(*meta);
            ts.classifier.on_dram_read(key, *features, meta->read_count, now);
            dram_.set_score(key, ts.classifier.score(features));
            result.kind = Outcome::dram_hit;
            result.value = meta->value;
            CounterSet::add(counters_.dram_hits);
            ++ts.counters.hits;
        } else {
            LookupResult found = index_.lookup(key, device_);
            result.flash_reads = found.flash_reads;
            CounterSet::add(counters_.flash_reads, found.flash_reads);
            if (found.hit) {
                index_.clock_touch(found.hit->slot);
                if (found.hit->entry.ghost()) {
                    index_.unmark_ghost(found.hit->slot);
                    CounterSet::add(counters_.ghost_revivals);
                }
                ts.classifier.on_read(key, now);
                result.kind = Outcome::flash_hit;
                result.value = std::move(found.hit->value);
                CounterSet::add(counters_.flash_hits);
                ++ts.counters.hits;
            } else {
                result.kind = Outcome::miss;
                CounterSet::add(counters_.misses);
                ++ts.counters.misses;
            }
        }
        after_request(now);
        return result;
    }

    GetResult get(const Key& key, Timestamp now) { return get(tenant_of(key.view()), key, now); }

    /// Stores into DRAM; an older version in either tier is invalidated. Throws oversize
    /// for objects that fit neither a segment nor usable DRAM.
    Outcome set(std::string_view tenant, const Key& key, std::string value, Timestamp now)
    {
        const std::uint64_t bytes = kRecordHeaderSize + key.size() + value.size();
        if (value.size() > kMaxValueLength || bytes > config_.segment_size || bytes >= config_.dram_usable()) {
            CounterSet::add(counters_.rejected_sets);
            throw Error(ErrorCode::oversize, "object of " + std::to_string(bytes) + " bytes exceeds cache limits");
        }
        std::unique_lock lock(mutex_);
        TenantState& ts = tenant_state(tenant);
        ts.classifier.observe(now);
        CounterSet::add(counters_.sets);
        CounterSet::add(counters_.client_bytes_written, bytes);
        ++ts.counters.sets;
        ts.counters.bytes_written += bytes;

        if (drop_existing(key)) {
            ts.classifier.on_remove(key);
        }
        if (dram_.free_bytes() < bytes) {
            cleaner_.maintain(now);
        }
        dram_.put(key, std::move(value), now);
        if (options_.observer) {
            options_.observer->admitted(key);
        }
        after_request(now);
        return Outcome::stored;
    }

    Outcome set(const Key& key, std::string value, Timestamp now)
    {
        return set(tenant_of(key.view()), key, std::move(value), now);
    }

    /// Removes the key from whichever tier holds it. Idempotent.
    Outcome erase(std::string_view tenant, const Key& key, Timestamp now)
    {
        std::unique_lock lock(mutex_);
        TenantState& ts = tenant_state(tenant);
        ts.classifier.observe(now);
        CounterSet::add(counters_.deletes);
        const bool removed = drop_existing(key);
        if (removed) {
            ts.classifier.on_remove(key);
        }
        after_request(now);
        return removed ? Outcome::deleted : Outcome::not_found;
    }

    Outcome erase(const Key& key, Timestamp now) { return erase(tenant_of(key.view()), key, now); }

    MaintainActions maintain(Timestamp now)
    {
        std::unique_lock lock(mutex_);
        return maintain_locked(now);
    }

    /// Writes one segment of the current candidates right away, padding if needed.
    std::optional<SegmentSeq> flush_now(Timestamp now)
    {
        std::unique_lock lock(mutex_);
        return cleaner_.flush_segment(now, true);
    }

    ReclaimResult reclaim_oldest()
    {
        std::unique_lock lock(mutex_);
        return cleaner_.reclaim_oldest();
    }

    std::uint64_t ghost_round()
    {
        std::unique_lock lock(mutex_);
        return cleaner_.ghost_round();
    }

    /// Background maintenance on wall-clock time, for server mode.
    void start_cleaner()
    {
        if (cleaner_thread_.joinable()) {
            return;
        }
        cleaner_thread_ = std::jthread([this](std::stop_token stop) {
            std::unique_lock lock(mutex_);
            while (!stop.stop_requested()) {
                maintain_locked(wall_now());
                wake_.wait_for(lock, stop, options_.cleaner_period, [] { return false; });
            }
        });
    }

    void stop_cleaner()
    {
        if (cleaner_thread_.joinable()) {
            cleaner_thread_.request_stop();
            cleaner_thread_.join();
        }
    }

    Timestamp wall_now() const
    {
        const auto elapsed = std::chrono::steady_clock::now() - epoch_;
        return Timestamp{static_cast<std::uint64_t>(std::chrono::duration_cast<Duration>(elapsed).count())};
    }

    CounterSnapshot counters() const { return counters_.snapshot(); }

    TenantCounters tenant_counters(std::string_view tenant) const
    {
        std::unique_lock lock(mutex_);
        auto it = tenants_.find(tenant);
        return it == tenants_.end() ? TenantCounters{} : it->second->counters;
    }

    MetricsReport report(std::string policy = "flashield") const
    {
        std::unique_lock lock(mutex_);
        MetricsReport r;
        r.policy = std::move(policy);
        r.counters = counters_.snapshot();
        r.derived = derive(r.counters);
        r.mean_segment_utilization = cleaner_.mean_segment_utilization();
        r.ghost_objects = index_.ghost_objects();
        r.seed = config_.seed;
        return r;
    }

    IndexFootprint footprint() const
    {
        std::unique_lock lock(mutex_);
        return index_.memory_footprint();
    }

    /// True when the flash record at (seq, offset) is what a lookup of `key` would return.
    bool flash_reachable(const Key& key, SegmentSeq seq, std::uint64_t offset) const
    {
        std::unique_lock lock(mutex_);
        return index_.locate(key, seq, offset).has_value();
    }

    std::shared_ptr<const Model> model(std::string_view tenant) const
    {
        std::unique_lock lock(mutex_);
        auto it = tenants_.find(tenant);
        return it == tenants_.end() ? nullptr : it->second->classifier.model();
    }

    void set_model(std::string_view tenant, Model model)
    {
        std::unique_lock lock(mutex_);
        tenant_state(tenant).classifier.set_model(std::move(model));
        dram_.rescore_all([this](const ObjectMeta& meta) { return score(meta); });
    }

    std::vector<std::string> tenants() const
    {
        std::unique_lock lock(mutex_);
        std::vector<std::string> out;
        for (const auto& [name, state] : tenants_) {
            out.push_back(name);
        }
        return out;
    }

    // Direct component access for tests and tools; not synchronized.
    const EngineConfig& config() const noexcept { return config_; }
    const DramStore& dram() const noexcept { return dram_; }
    const FlashIndex& index() const noexcept { return index_; }
    FlashDevice& device() noexcept { return device_; }
    const FlashDevice& device() const noexcept { return device_; }
    const Cleaner& cleaner() const noexcept { return cleaner_; }
    TenantClassifier& classifier(std::string_view tenant) { return tenant_state(tenant).classifier; }

private:
    struct TenantState {
        TenantState(std::string name, const EngineConfig& config) : classifier(std::move(name), config) {}
        TenantClassifier classifier;
        TenantCounters counters;
    };

    static EngineConfig validated(EngineConfig config)
    {
        config.validate();
        return config;
    }

    static FlashDevice make_device(const EngineConfig& config, const EngineOptions& options)
    {
        if (options.flash_file.empty()) {
            return FlashDevice::in_memory(config.segment_size, config.segment_count());
        }
        return FlashDevice(std::make_unique<FileBackend>(options.flash_file, config.segment_count(),
                                                         config.segment_size, options.bypass_page_cache,
                                                         options.record_device_writes),
                           config.segment_size, config.segment_count());
    }

    TenantState& tenant_state(std::string_view tenant)
    {
        auto it = tenants_.find(tenant);
        if (it == tenants_.end()) {
            it = tenants_.emplace(std::string(tenant), std::make_unique<TenantState>(std::string(tenant), config_))
                     .first;
        }
        return *it->second;
    }

    /// Removes the current version of `key` from DRAM or flash. Flash is only probed when
    /// DRAM misses, since a key never lives in both tiers.
    bool drop_existing(const Key& key)
    {
        bool removed = dram_.erase(key).has_value();
        if (!removed) {
            LookupResult found = index_.invalidate(key, device_);
            CounterSet::add(counters_.invalidate_flash_reads, found.flash_reads);
            removed = found.hit.has_value();
            if (removed) {
                cleaner_.refresh_gauges();
            }
        }
        if (removed && options_.observer) {
            options_.observer->superseded(key);
        }
        return removed;
    }

    void after_request(Timestamp now)
    {
        if (options_.deterministic) {
            maintain_locked(now);
        }
    }

    MaintainActions maintain_locked(Timestamp now)
    {
        bool retrained = false;
        for (auto& [name, state] : tenants_) {
            retrained |= state->classifier.maybe_train(now);
        }
        if (retrained) {
            dram_.rescore_all([this](const ObjectMeta& meta) { return score(meta); });
        }
        cleaner_.set_now(now);
        return cleaner_.maintain(now);
    }

    double score(const ObjectMeta& meta) override
    {
        return tenant_state(tenant_of(meta.key.view())).classifier.score(extract_features(meta));
    }

    void left_cache(const Key& key) override { tenant_state(tenant_of(key.view())).classifier.on_remove(key); }

    EngineConfig config_;
    EngineOptions options_;
    HashFamily hashes_;
    FlashDevice device_;
    FlashIndex index_;
    DramStore dram_;
    CounterSet counters_;
    Cleaner cleaner_;
    std::map<std::string, std::unique_ptr<TenantState>, std::less<>> tenants_;
    mutable std::mutex mutex_;
    std::condition_variable_any wake_;
    std::chrono::steady_clock::time_point epoch_;
    std::jthread cleaner_thread_;
};

}  // namespace hkv
