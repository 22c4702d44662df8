#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hkv/baselines.hpp"
#include "hkv/engine.hpp"
#include "hkv/metrics.hpp"
#include "hkv/trace.hpp"

namespace hkv {

enum class Policy { flashield, victim, ripq8, dram_lru_oracle };

inline std::string_view to_string(Policy p) noexcept
{
    switch (p) {
    case Policy::flashield: return "flashield";
    case Policy::victim: return "victim";
    case Policy::ripq8: return "ripq8";
    case Policy::dram_lru_oracle: return "dram_lru_oracle";
    }
    return "?";
}

inline Policy parse_policy(std::string_view name)
{
    for (Policy p : {Policy::flashield, Policy::victim, Policy::ripq8, Policy::dram_lru_oracle}) {
        if (name == to_string(p)) {
            return p;
        }
    }
    throw Error(ErrorCode::invalid_config, "unknown policy '" + std::string(name) + "'");
}

/// Runs the real engine (deterministic mode) behind the size-only replay interface.
/// Values are synthesized from the key so hits can be checked for staleness.
class EnginePolicy final : public ReplayPolicy {
public:
    EnginePolicy(const EngineConfig& config, EngineOptions options = {}) : engine_(config, with_deterministic(options))
    {
    }

    std::string name() const override { return "flashield"; }

    bool get(const std::string& key, Timestamp now) override
    {
        return engine_.get(Key(key), now).kind != Outcome::miss;
    }

    void set(const std::string& key, std::uint32_t value_size, Timestamp now) override
    {
        engine_.set(Key(key), std::string(value_size, fill_byte(key)), now);
    }

    void erase(const std::string& key, Timestamp now) override { engine_.erase(Key(key), now); }

    MetricsReport report() const override { return engine_.report(name()); }

    Engine& engine() noexcept { return engine_; }

    static char fill_byte(std::string_view key) noexcept
    {
        return static_cast<char>('a' + hash64(0, key) % 26);
    }

private:
    static EngineOptions with_deterministic(EngineOptions o)
    {
        o.deterministic = true;
        return o;
    }

    Engine engine_;
};

inline std::unique_ptr<ReplayPolicy> make_policy(Policy policy, const EngineConfig& config,
                                                 EngineOptions options = {})
{
    switch (policy) {
    case Policy::flashield: return std::make_unique<EnginePolicy>(config, std::move(options));
    case Policy::victim: return std::make_unique<VictimCache>(config);
    case Policy::ripq8: return std::make_unique<Ripq8>(config);
    case Policy::dram_lru_oracle: return std::make_unique<LruOracle>(config);
    }
    throw Error(ErrorCode::invalid_config, "unknown policy");
}

struct ReplayOptions {
    /// After a get miss, store the object if its size is known (from the event or an
    /// earlier set), as a read-through client would.
    bool fill_on_miss = true;
    std::uint64_t seed = 0;
};

/// Cache key for an event: "tenant:key", or the bare key without a tenant.
inline std::string cache_key(const TraceEvent& ev)
{
    return ev.tenant.empty() ? ev.key : ev.tenant + ":" + ev.key;
}

inline MetricsReport replay(const std::vector<TraceEvent>& events, ReplayPolicy& policy,
                            const ReplayOptions& options = {})
{
    std::unordered_map<std::string, std::uint32_t> known_size;
    std::uint64_t fills = 0;
    std::uint64_t rejected = 0;
    for (const TraceEvent& ev : events) {
        const std::string key = cache_key(ev);
        const Timestamp now = ev.time();
        switch (ev.op) {
        case Op::get:
            if (!policy.get(key, now) && options.fill_on_miss) {
                std::uint32_t size = ev.value_size;
                if (size == 0) {
                    auto it = known_size.find(key);
                    size = it == known_size.end() ? 0 : it->second;
                }
                if (size > 0) {
                    try {
                        policy.set(key, size, now);
                        ++fills;
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::oversize) {
                            throw;
                        }
                        ++rejected;
                    }
                }
            }
            break;
        case Op::set:
            known_size[key] = ev.value_size;
            try {
                policy.set(key, ev.value_size, now);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::oversize) {
                    throw;
                }
                ++rejected;
            }
            break;
        case Op::del:
            known_size.erase(key);
            policy.erase(key, now);
            break;
        }
    }
    MetricsReport report = policy.report();
    report.events = events.size();
    report.seed = options.seed;
    report.fills = fills;
    report.counters.rejected_sets = std::max(report.counters.rejected_sets, rejected);
    return report;
}

inline MetricsReport replay(const std::vector<TraceEvent>& events, Policy policy, const EngineConfig& config,
                            const ReplayOptions& options = {}, EngineOptions engine_options = {})
{
    auto p = make_policy(policy, config, std::move(engine_options));
    return replay(events, *p, options);
}

struct SweepPoint {
    std::string label;
    EngineConfig config;
};

/// One replay per setting, same events and seed.
inline std::vector<MetricsReport> sweep(const std::vector<TraceEvent>& events, Policy policy,
                                        const std::vector<SweepPoint>& points, const ReplayOptions& options = {})
{
    std::vector<MetricsReport> out;
    for (const auto& point : points) {
        MetricsReport r = replay(events, policy, point.config, options);
        r.setting = point.label;
        out.push_back(std::move(r));
    }
    return out;
}

/// Threshold sweep: flashiness_read_threshold in `thresholds` on top of `base`.
inline std::vector<SweepPoint> threshold_points(const EngineConfig& base, const std::vector<std::uint32_t>& thresholds)
{
    std::vector<SweepPoint> points;
    for (auto n : thresholds) {
        EngineConfig c = base;
        c.flashiness_read_threshold = n;
        points.push_back({"flashiness_read_threshold=" + std::to_string(n), c});
    }
    return points;
}

/// DRAM:flash ratio sweep at fixed total capacity, e.g. ratios {15, 7, 3} for 1:15, 1:7, 1:3.
inline std::vector<SweepPoint> ratio_points(const EngineConfig& base, std::uint64_t total_bytes,
                                            const std::vector<std::uint64_t>& flash_per_dram)
{
    std::vector<SweepPoint> points;
    for (auto r : flash_per_dram) {
        EngineConfig c = base;
        const std::uint64_t dram = total_bytes / (r + 1);
        c.flash_capacity = (total_bytes - dram) / c.segment_size * c.segment_size;
        c.dram_capacity = dram;
        points.push_back({"dram:flash=1:" + std::to_string(r), c});
    }
    return points;
}

/// Fixed-width text table, one row per report.
inline std::string comparison_table(const std::vector<MetricsReport>& reports)
{
    int policy_width = 6;
    int setting_width = 7;
    for (const auto& r : reports) {
        policy_width = std::max(policy_width, static_cast<int>(r.policy.size()));
        setting_width = std::max(setting_width, static_cast<int>(r.setting.size()));
    }
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s %-*s %8s %8s %14s %14s %7s %10s\n", policy_width, "policy", setting_width,
                  "setting", "hit", "clwa", "flash_bytes", "client_bytes", "util", "reads/hit");
    out += line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-*s %-*s %8.4f %8.4f %14llu %14llu %7.4f %10.4f\n", policy_width,
                      r.policy.c_str(), setting_width, r.setting.empty() ? "-" : r.setting.c_str(), r.derived.hit_rate,
                      r.derived.clwa, static_cast<unsigned long long>(r.counters.flash_bytes_written),
                      static_cast<unsigned long long>(r.counters.client_bytes_written), r.mean_segment_utilization,
                      r.derived.flash_reads_per_flash_hit);
        out += line;
    }
    return out;
}

}  // namespace hkv
