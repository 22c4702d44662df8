#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include <json.hpp>

namespace hkv {

// name, owner
#define HKV_COUNTERS(X)                        \
    X(gets, engine)                            \
    X(dram_hits, engine)                       \
    X(flash_hits, engine)                      \
    X(misses, engine)                          \
    X(sets, engine)                            \
    X(deletes, engine)                         \
    X(client_bytes_written, engine)            \
    X(flash_bytes_written, cleaner)            \
    X(flash_reads, engine)                     \
    X(segments_written, cleaner)               \
    X(segments_erased, cleaner)                \
    X(ghosts_marked, cleaner)                  \
    X(ghost_revivals, engine)                  \
    X(dram_evictions, cleaner)                 \
    X(reclaim_reinserted, cleaner)             \
    X(reclaim_dropped, cleaner)                \
    X(displaced_entries, cleaner)              \
    X(aliased_records, cleaner)                \
    X(index_table_bytes, engine)               \
    X(bloom_bytes, engine)                     \
    X(live_flash_objects, engine)              \
    X(flushed_objects, cleaner)                \
    X(flushed_object_bytes, cleaner)           \
    X(dram_evicted_bytes, cleaner)             \
    X(budget_throttles, cleaner)               \
    X(padded_segments, cleaner)                \
    X(reclaim_scanned, cleaner)                \
    X(invalidate_flash_reads, engine)          \
    X(rejected_sets, engine)

struct CounterSnapshot {
#define HKV_FIELD(name, owner) std::uint64_t name = 0;
    HKV_COUNTERS(HKV_FIELD)
#undef HKV_FIELD
};

/// Relaxed atomic counters. index_table_bytes, bloom_bytes and live_flash_objects are
/// gauges refreshed by their owner; everything else only grows.
class CounterSet {
public:
#define HKV_FIELD(name, owner) std::atomic<std::uint64_t> name{0};
    HKV_COUNTERS(HKV_FIELD)
#undef HKV_FIELD

    static void add(std::atomic<std::uint64_t>& c, std::uint64_t n = 1) noexcept
    {
        c.fetch_add(n, std::memory_order_relaxed);
    }

    static void set(std::atomic<std::uint64_t>& c, std::uint64_t v) noexcept
    {
        c.store(v, std::memory_order_relaxed);
    }

    CounterSnapshot snapshot() const noexcept
    {
        CounterSnapshot s;
#define HKV_FIELD(name, owner) s.name = name.load(std::memory_order_relaxed);
        HKV_COUNTERS(HKV_FIELD)
#undef HKV_FIELD
        return s;
    }
};

struct DerivedMetrics {
    double hit_rate = 0.0;
    double clwa = 0.0;
    double flash_reads_per_flash_hit = 0.0;
    double bytes_per_flash_object = 0.0;
};

inline DerivedMetrics derive(const CounterSnapshot& c) noexcept
{
    auto ratio = [](double num, std::uint64_t den) { return den == 0 ? 0.0 : num / static_cast<double>(den); };
    DerivedMetrics d;
    d.hit_rate = ratio(static_cast<double>(c.dram_hits + c.flash_hits), c.gets);
    d.clwa = ratio(static_cast<double>(c.flash_bytes_written), c.client_bytes_written);
    d.flash_reads_per_flash_hit = ratio(static_cast<double>(c.flash_reads), c.flash_hits);
    d.bytes_per_flash_object = ratio(static_cast<double>(c.index_table_bytes + c.bloom_bytes), c.live_flash_objects);
    return d;
}

inline constexpr int kReportSchemaVersion = 1;

/// One policy's replay outcome.
struct MetricsReport {
    std::string policy;
    CounterSnapshot counters;
    DerivedMetrics derived;
    double mean_segment_utilization = 0.0;
    std::uint64_t ghost_objects = 0;
    std::uint64_t events = 0;
    std::uint64_t fills = 0;  // sets issued by the replay after misses
    std::uint64_t seed = 0;
    std::string setting;  // sweep label, e.g. "flashiness_read_threshold=10"
    std::string note;

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["schema_version"] = kReportSchemaVersion;
        j["policy"] = policy;
        j["events"] = events;
        j["fills"] = fills;
        j["seed"] = seed;
        j["hit_rate"] = derived.hit_rate;
        j["clwa"] = derived.clwa;
        j["clwa_denominator"] = "client set bytes, record-serialized (5 + key + value)";
        j["flash_reads_per_flash_hit"] = derived.flash_reads_per_flash_hit;
        j["bytes_per_flash_object"] = derived.bytes_per_flash_object;
        j["mean_segment_utilization"] = mean_segment_utilization;
        j["ghost_objects"] = ghost_objects;
#define HKV_FIELD(name, owner) j[#name] = counters.name;
        HKV_COUNTERS(HKV_FIELD)
#undef HKV_FIELD
        if (!setting.empty()) {
            j["setting"] = setting;
        }
        if (!note.empty()) {
            j["note"] = note;
        }
        return j;
    }
};

}  // namespace hkv
