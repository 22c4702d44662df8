#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hkv/engine.hpp"

namespace hkv {

struct LatencyStats {
    std::uint64_t count = 0;
    double mean_us = 0;
    double p50_us = 0;
    double p90_us = 0;
    double p99_us = 0;
    double max_us = 0;
};

/// Nearest-rank percentiles over samples in microseconds; sorts in place.
inline LatencyStats summarize(std::vector<double>& samples)
{
    LatencyStats s;
    s.count = samples.size();
    if (samples.empty()) {
        return s;
    }
    std::sort(samples.begin(), samples.end());
    auto rank = [&](double p) {
        const auto r = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
        return samples[std::clamp<std::size_t>(r, 1, samples.size()) - 1];
    };
    double sum = 0;
    for (double v : samples) {
        sum += v;
    }
    s.mean_us = sum / static_cast<double>(samples.size());
    s.p50_us = rank(0.50);
    s.p90_us = rank(0.90);
    s.p99_us = rank(0.99);
    s.max_us = samples.back();
    return s;
}

enum class BenchPattern { dram, flash };

inline BenchPattern parse_bench_pattern(std::string_view s)
{
    if (s == "dram") {
        return BenchPattern::dram;
    }
    if (s == "flash") {
        return BenchPattern::flash;
    }
    throw Error(ErrorCode::invalid_config, "unknown bench pattern '" + std::string(s) + "' (dram|flash)");
}

struct BenchOptions {
    BenchPattern pattern = BenchPattern::dram;
    std::uint64_t ops = 100000;          // measured gets
    std::uint32_t value_size = 257;
    std::uint64_t keys = 0;              // zero sizes the key space from the pattern
    std::uint32_t miss_every = 10;       // every n-th get asks for a key never written
};

struct BenchSummary {
    std::uint64_t keys = 0;
    std::uint64_t ops = 0;
    double load_seconds = 0;
    double seconds = 0;
    double ops_per_second = 0;
    std::map<std::string, LatencyStats> latency;  // by outcome

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["keys"] = keys;
        j["ops"] = ops;
        j["load_seconds"] = load_seconds;
        j["seconds"] = seconds;
        j["ops_per_second"] = ops_per_second;
        auto& lat = j["latency_us"];
        lat = nlohmann::ordered_json::object();
        for (const auto& [kind, s] : latency) {
            lat[kind] = {{"count", s.count}, {"mean", s.mean_us}, {"p50", s.p50_us},
                         {"p90", s.p90_us},  {"p99", s.p99_us},   {"max", s.max_us}};
        }
        return j;
    }
};

inline std::string bench_key(std::uint64_t i) { return "bench:" + std::to_string(i); }

/// Sequential-key microbenchmark. The load phase writes every key and reads it once so
/// the admission filter considers it; the measured phase walks the keys in order.
/// `dram` keeps the key space within a quarter of usable DRAM, `flash` makes it half
/// the flash capacity so most reads land on flash.
inline BenchSummary run_bench(Engine& engine, const BenchOptions& opts)
{
    using clock = std::chrono::steady_clock;
    BenchSummary out;
    if (opts.ops == 0) {
        return out;
    }
    const EngineConfig& config = engine.config();
    const std::uint64_t object = kRecordHeaderSize + bench_key(0).size() + 3 + opts.value_size;
    std::uint64_t keys = opts.keys;
    if (keys == 0) {
        keys = opts.pattern == BenchPattern::dram ? config.dram_usable() / 4 / object : config.flash_capacity / 2 / object;
    }
    keys = std::max<std::uint64_t>(keys, 1);
    out.keys = keys;

    const std::string value(opts.value_size, 'v');
    const auto load_start = clock::now();
    for (std::uint64_t i = 0; i < keys; ++i) {
        const Key key(bench_key(i));
        engine.set(key, value, engine.wall_now());
        engine.get(key, engine.wall_now());
    }
    out.load_seconds = std::chrono::duration<double>(clock::now() - load_start).count();

    std::map<std::string, std::vector<double>> samples;
    const auto start = clock::now();
    for (std::uint64_t i = 0; i < opts.ops; ++i) {
        const bool miss = opts.miss_every > 0 && i % opts.miss_every == opts.miss_every - 1;
        const Key key(miss ? "absent:" + std::to_string(i) : bench_key(i % keys));
        const auto t0 = clock::now();
        const GetResult r = engine.get(key, engine.wall_now());
        const auto t1 = clock::now();
        samples[to_string(r.kind)].push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    out.seconds = std::chrono::duration<double>(clock::now() - start).count();
    out.ops = opts.ops;
    out.ops_per_second = out.seconds > 0 ? static_cast<double>(opts.ops) / out.seconds : 0;
    for (auto& [kind, v] : samples) {
        out.latency[kind] = summarize(v);
    }
    return out;
}

}  // namespace hkv
