// Acceptance criteria, one test each. Prints a PASS/FAIL line per criterion.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "hkv/classifier.hpp"
#include "hkv/dram_store.hpp"
#include "hkv/engine.hpp"
#include "hkv/protocol.hpp"
#include "hkv/replay.hpp"
#include "hkv/segment_builder.hpp"
#include "hkv/workload.hpp"
#include "support.hpp"

using namespace hkv;
using hkv::test::at;
using hkv::test::chi_square_uniform_p;

namespace {

// Production request mix at DRAM:flash 1:7, scaled down so every policy replays in seconds.
EngineConfig scaled_config()
{
    EngineConfig c;
    c.segment_size = 256 * KiB;
    c.flash_capacity = 28 * MiB;
    c.dram_capacity = 4 * MiB;
    return c;
}

const std::vector<TraceEvent>& mixed_production_trace()
{
    static const std::vector<TraceEvent> events = [] {
        WorkloadSpec spec = WorkloadSpec::production_mix();
        spec.key_count = 100000;
        spec.op_count = 1000000;
        return generate_workload(spec, 7);
    }();
    return events;
}

std::string value_of(std::uint32_t size, std::uint64_t id) { return std::string(size, static_cast<char>('a' + id % 26)); }

}  // namespace

// 1. Packed entries are 4 bytes; blooms cost about 10 bits per live flash object.
TEST(Acceptance, C01_IndexFootprint)
{
    EngineConfig c;
    c.segment_size = 1 * MiB;
    c.flash_capacity = 48 * MiB;
    c.dram_capacity = 8 * MiB;
    c.index_slots = 131072;  // one slot per expected object, rounded to a power of two
    Engine engine(c);
    SizeMixture sizes;
    std::mt19937_64 rng(1);
    std::uint64_t id = 0;
    double t = 0;
    while (engine.footprint().live_objects < 100000) {
        const Key key("obj" + std::to_string(id));
        engine.set(key, value_of(sizes.sample(rng), id), at(t += 0.001));
        engine.get(key, at(t += 0.001));
        ++id;
        ASSERT_LT(id, 200000u);
    }
    ASSERT_EQ(engine.report().counters.segments_erased, 0u);
    const IndexFootprint f = engine.footprint();
    EXPECT_EQ(sizeof(FlashEntry), 4u);
    EXPECT_EQ(f.table_bytes, 4 * c.index_slots);
    EXPECT_GE(f.live_objects, 100000u);
    EXPECT_NEAR(f.bloom_bits_per_live_object, 10.0, 0.5);
    std::cout << "  live=" << f.live_objects << " table_bytes=" << f.table_bytes
              << " bloom_bits/object=" << f.bloom_bits_per_live_object << "\n";
}

// 2. A flash hit costs at most 1.05 flash reads on average.
TEST(Acceptance, C02_FlashReadsPerHit)
{
    EngineConfig c;
    c.segment_size = 1 * MiB;
    c.flash_capacity = 48 * MiB;
    c.dram_capacity = 8 * MiB;
    c.bloom_fp_rate = 0.01;
    c.num_hash_functions = 16;
    Engine engine(c);
    SizeMixture sizes;
    std::mt19937_64 rng(2);
    double t = 0;
    const std::uint64_t n = 120000;
    for (std::uint64_t id = 0; id < n; ++id) {
        const Key key("obj" + std::to_string(id));
        engine.set(key, value_of(sizes.sample(rng), id), at(t += 0.001));
        engine.get(key, at(t += 0.001));
    }
    ASSERT_EQ(engine.report().counters.segments_erased, 0u);
    const CounterSnapshot before = engine.report().counters;
    std::uniform_int_distribution<std::uint64_t> pick(0, n - 1);
    std::uint64_t flash_hits = 0;
    while (flash_hits < 100000) {
        const std::uint64_t id = pick(rng);
        const GetResult r = engine.get(Key("obj" + std::to_string(id)), at(t += 0.001));
        ASSERT_NE(r.kind, Outcome::miss);
        flash_hits += r.kind == Outcome::flash_hit;
    }
    const CounterSnapshot after = engine.report().counters;
    const double reads = static_cast<double>(after.flash_reads - before.flash_reads);
    const double hits = static_cast<double>(after.flash_hits - before.flash_hits);
    ASSERT_EQ(hits, 100000.0);
    EXPECT_LE(reads / hits, 1.05);
    std::cout << "  flash reads per flash hit=" << reads / hits << "\n";
}

// 3. Packing twice a segment's worth of candidates fills the segment.
TEST(Acceptance, C03_SegmentUtilization)
{
    const std::uint64_t segment = 4 * MiB;
    HashFamily hashes(16);
    SizeMixture sizes;
    std::mt19937_64 rng(3);
    double utilization = 0;
    double attempts = 0;
    const int trials = 5;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<std::string> keys;
        std::vector<std::string> values;
        std::uint64_t total = 0;
        while (total < 2 * segment) {
            keys.push_back("t" + std::to_string(trial) + ":" + std::to_string(keys.size()));
            values.push_back(value_of(sizes.sample(rng), keys.size()));
            total += record_size(keys.back().size(), values.back().size());
        }
        std::vector<SegmentCandidate> candidates;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            candidates.push_back({Key(keys[i]), values[i], 1.0});
        }
        const BuildResult r = build_segment(candidates, hashes, segment);
        utilization += r.image.utilization();
        attempts += r.avg_hash_attempts;
    }
    utilization /= trials;
    attempts /= trials;
    std::cout << "  utilization=" << utilization << " mean hash attempts=" << attempts << "\n";
    EXPECT_GE(utilization, 0.99);
    EXPECT_GE(attempts, 6.2);
    EXPECT_LE(attempts, 10.2);
}

// 4. CLWA(flashield) < 1 < CLWA(ripq8) < CLWA(victim) without giving up hit rate.
TEST(Acceptance, C04_ClwaOrdering)
{
    const auto& events = mixed_production_trace();
    const EngineConfig c = scaled_config();
    const MetricsReport f = replay(events, Policy::flashield, c);
    const MetricsReport r = replay(events, Policy::ripq8, c);
    const MetricsReport v = replay(events, Policy::victim, c);
    std::cout << "  clwa flashield=" << f.derived.clwa << " ripq8=" << r.derived.clwa << " victim=" << v.derived.clwa
              << "\n  hit flashield=" << f.derived.hit_rate << " ripq8=" << r.derived.hit_rate
              << " victim=" << v.derived.hit_rate << "\n";
    ASSERT_GT(f.counters.segments_written, 0u);
    EXPECT_LT(f.derived.clwa, 1.0);
    EXPECT_LT(1.0, r.derived.clwa);
    EXPECT_LT(r.derived.clwa, v.derived.clwa);
    EXPECT_GE(f.derived.hit_rate, r.derived.hit_rate - 0.02);
}

// 5. Never-read writes never reach flash; re-read objects nearly all do.
TEST(Acceptance, C05_FilterExtremes)
{
    EngineConfig c = hkv::test::small_config();
    c.flash_capacity = 4 * MiB;
    {
        WorkloadSpec spec;
        spec.key_count = 0;
        spec.op_count = 20000;  // ~5 MB of writes through 0.4 MB of DRAM
        spec.write_ratio = 1.0;
        spec.update_fraction = 0.0;
        spec.unread_write_fraction = 1.0;
        const MetricsReport r = replay(generate_workload(spec, 5), Policy::flashield, c);
        ASSERT_GT(r.counters.dram_evictions, 0u);
        EXPECT_EQ(r.counters.flash_bytes_written, 0u);
    }
    {
        // Each object is written and then read twice soon after; nothing is cold.
        std::vector<TraceEvent> events;
        SizeMixture sizes;
        std::mt19937_64 rng(5);
        std::uint64_t t = 0;
        const std::uint64_t n = 10000;
        for (std::uint64_t i = 0; i < n + 20; ++i) {
            if (i < n) {
                events.push_back({t++, "", Op::set, "h" + std::to_string(i), sizes.sample(rng)});
            }
            for (std::uint64_t back : {10, 20}) {
                if (i >= back && i - back < n) {
                    events.push_back({t++, "", Op::get, "h" + std::to_string(i - back), 0});
                }
            }
        }
        const MetricsReport r = replay(events, Policy::flashield, c);
        const auto& k = r.counters;
        ASSERT_EQ(k.segments_erased, 0u);
        const double overflow = static_cast<double>(k.flushed_object_bytes + k.dram_evicted_bytes);
        ASSERT_GT(overflow, 0.0);
        const double admitted = static_cast<double>(k.flushed_object_bytes) / overflow;
        std::cout << "  admitted share of overflow bytes=" << admitted << "\n";
        EXPECT_GE(admitted, 0.90);
    }
}

// 6. 2-bit CLOCK tracks exact LRU on a Zipf(0.9) DRAM-only trace.
TEST(Acceptance, C06_ClockFidelity)
{
    WorkloadSpec spec;
    spec.key_count = 100000;
    spec.op_count = 1000000;
    spec.zipf_alpha = 0.9;
    spec.write_ratio = 0;
    spec.update_fraction = 0;
    spec.unread_write_fraction = 0;
    const auto events = generate_workload(spec, 6);
    const std::uint64_t capacity = 4 * MiB;

    DramStore clock(capacity, 3);
    LruOracle lru(capacity);
    std::uint64_t clock_hits = 0;
    std::uint64_t lru_hits = 0;
    for (const auto& ev : events) {
        const Key key(ev.key);
        const Timestamp now = ev.time();
        if (clock.on_read(key, now)) {
            ++clock_hits;
        } else {
            const std::uint64_t need = record_size(ev.key.size(), ev.value_size);
            while (clock.free_bytes() < need) {
                ASSERT_TRUE(clock.evict_one());
            }
            clock.put(key, std::string(ev.value_size, 'x'), now);
        }
        if (lru.get(ev.key, now)) {
            ++lru_hits;
        } else {
            lru.set(ev.key, ev.value_size, now);
        }
    }
    const double n = static_cast<double>(events.size());
    std::cout << "  clock hit=" << clock_hits / n << " lru hit=" << lru_hits / n << "\n";
    EXPECT_GT(lru_hits / n, 0.2);
    EXPECT_LT(lru_hits / n, 0.9);
    EXPECT_NEAR(clock_hits / n, lru_hits / n, 0.01);
}

// 7. The retained read is uniform over the N reads.
TEST(Acceptance, C07_SamplingUniformity)
{
    std::mt19937_64 rng(7);
    const int n = 8;
    std::vector<std::uint64_t> kept(n, 0);
    for (int trial = 0; trial < 10000; ++trial) {
        int held = -1;
        for (int r = 1; r <= n; ++r) {
            if (reservoir_accept(static_cast<std::uint32_t>(r), rng)) {
                held = r - 1;
            }
        }
        ASSERT_GE(held, 0);
        ++kept[held];
    }
    const double p = chi_square_uniform_p(kept);
    std::cout << "  chi-square p=" << p << "\n";
    EXPECT_GT(p, 0.01);
}

// 8. Separable features: near-perfect accuracy, full recall, reproducible weights.
TEST(Acceptance, C08_Classifier)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TrainingSample> samples;
    for (int i = 0; i < 3000; ++i) {
        const bool pos = u(rng) < 0.2;
        FeatureVector f{};
        for (auto& x : f) {
            x = 5.0 + noise(rng);
        }
        f[0] += pos ? 9.0 : -9.0;
        f[4] += pos ? -2.0 : 2.0;
        samples.push_back(TrainingSample{Key("c" + std::to_string(i)), f, at(0), pos ? 3u : 0u});
    }
    const auto model = train(samples, TrainOptions{});
    ASSERT_TRUE(model);
    std::size_t correct = 0, pos = 0, tp = 0;
    for (const auto& s : samples) {
        const bool predicted = model->margin(s.features) > 0;
        correct += predicted == s.label(1);
        pos += s.label(1);
        tp += predicted && s.label(1);
    }
    const double accuracy = static_cast<double>(correct) / samples.size();
    std::cout << "  accuracy=" << accuracy << " recall=" << static_cast<double>(tp) / pos << "\n";
    EXPECT_GE(accuracy, 0.99);
    EXPECT_EQ(tp, pos);
    const auto again = train(samples, TrainOptions{});
    ASSERT_TRUE(again);
    EXPECT_EQ(again->weights, model->weights);
    EXPECT_EQ(again->bias, model->bias);
}

// 9. The flash file only ever sees whole, aligned segment writes in FIFO slot order.
TEST(Acceptance, C09_SequentialWrites)
{
    hkv::test::TempPath path("hkv-acceptance-flash");
    EngineConfig c = hkv::test::small_config();
    EngineOptions o;
    o.flash_file = path.str();
    o.record_device_writes = true;
    Engine engine(c, o);
    std::mt19937_64 rng(9);
    SizeMixture sizes;
    std::uniform_int_distribution<int> key_pick(0, 5000);
    for (int i = 0; i < 100000; ++i) {
        const Key key("r" + std::to_string(key_pick(rng)));
        const Timestamp now = at(i * 0.01);
        const auto op = rng() % 10;
        if (op < 6) {
            engine.get(key, now);
        } else if (op < 9) {
            engine.set(key, std::string(sizes.sample(rng), 'z'), now);
        } else {
            engine.erase(key, now);
        }
    }
    auto* backend = dynamic_cast<FileBackend*>(&engine.device().backend());
    ASSERT_NE(backend, nullptr);
    const auto log = backend->write_log();
    const std::uint64_t slots = c.segment_count();
    ASSERT_GT(log.size(), slots) << "the run should wrap the device at least once";
    std::uint64_t violations = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        violations += log[i].length != c.segment_size;
        violations += log[i].offset != (i % slots) * c.segment_size;
    }
    std::cout << "  segment writes=" << log.size() << " violations=" << violations << "\n";
    EXPECT_EQ(violations, 0u);
}

namespace {

// Follows each admitted version through the observer callbacks. Flash versions are
// also keyed by (segment, offset) so a reclaim report finds exactly the version it
// concerns; records the audit has no live version for are garbage (superseded data or
// bytes that were never indexed).
class ConservationLedger : public LifecycleObserver {
public:
    enum class State { dram, flash, evicted, dropped, displaced, superseded };

    void admitted(const Key& key) override
    {
        versions_.push_back({key.str(), State::dram, 0, 0});
        current_[key.str()] = versions_.size() - 1;
    }
    void superseded(const Key& key) override { move(key, {State::dram, State::flash}, State::superseded, true); }
    void flushed(const Key& key, SegmentSeq seq, std::uint64_t offset) override
    {
        const std::size_t v = move(key, {State::dram}, State::flash, false);
        versions_[v].seq = seq;
        versions_[v].offset = offset;
        at_[{seq, offset}] = v;
    }
    void reinserted(const Key& key) override { move(key, {State::flash}, State::dram, false); }
    void evicted(const Key& key) override { move(key, {State::dram}, State::evicted, true); }
    void dropped(const Key& key) override { move(key, {State::flash}, State::dropped, true); }
    void unreachable(const Key& key, SegmentSeq seq, std::uint64_t offset) override
    {
        auto it = at_.find({seq, offset});
        if (it == at_.end() || versions_[it->second].state != State::flash) {
            return;
        }
        Version& v = versions_[it->second];
        if (v.key != key.str()) {
            ++errors;
            return;
        }
        v.state = State::displaced;
        auto cur = current_.find(v.key);
        if (cur != current_.end() && cur->second == it->second) {
            current_.erase(cur);
        }
    }

    struct Version {
        std::string key;
        State state;
        SegmentSeq seq;
        std::uint64_t offset;
    };

    const std::vector<Version>& versions() const { return versions_; }
    std::uint64_t errors = 0;

private:
    std::size_t move(const Key& key, std::initializer_list<State> from, State to, bool ends)
    {
        auto it = current_.find(key.str());
        if (it == current_.end()) {
            ++errors;
            return 0;
        }
        const std::size_t v = it->second;
        if (std::find(from.begin(), from.end(), versions_[v].state) == from.end()) {
            ++errors;
        }
        versions_[v].state = to;
        if (ends) {
            current_.erase(it);
        }
        return v;
    }

    std::vector<Version> versions_;
    std::unordered_map<std::string, std::size_t> current_;
    std::map<std::pair<SegmentSeq, std::uint64_t>, std::size_t> at_;
};

}  // namespace

// 10. Every admitted object ends up in exactly one place, and the places reconcile
// with the engine's own state and counters.
TEST(Acceptance, C10_ConservationAudit)
{
    ConservationLedger ledger;
    EngineOptions o;
    o.observer = &ledger;
    EngineConfig c = hkv::test::small_config();
    c.hot_fraction = 0.3;  // ghost rounds early, so reclaim drops ghosts too
    Engine engine(c, o);
    std::mt19937_64 rng(10);
    SizeMixture sizes;
    std::uniform_int_distribution<int> key_pick(0, 8000);
    std::map<std::string, std::uint32_t> known;
    for (int i = 0; i < 100000; ++i) {
        const std::string k = "a" + std::to_string(key_pick(rng));
        const Key key(k);
        const Timestamp now = at(i * 0.01);
        const auto op = rng() % 20;
        if (op < 14) {
            if (engine.get(key, now).kind == Outcome::miss && known.count(k)) {
                engine.set(key, std::string(known[k], 'f'), now);
            }
        } else if (op < 19) {
            known[k] = sizes.sample(rng);
            engine.set(key, std::string(known[k], 's'), now);
        } else {
            known.erase(k);
            engine.erase(key, now);
        }
    }
    EXPECT_EQ(ledger.errors, 0u);

    std::map<ConservationLedger::State, std::uint64_t> count;
    for (const auto& v : ledger.versions()) {
        auto s = v.state;
        if (s == ConservationLedger::State::flash && !engine.flash_reachable(Key(v.key), v.seq, v.offset)) {
            s = ConservationLedger::State::displaced;  // entry overwritten, record not yet reclaimed
        }
        ++count[s];
    }
    using S = ConservationLedger::State;
    const auto& k = engine.report().counters;
    std::uint64_t total = 0;
    for (const auto& [state, n] : count) {
        total += n;
    }
    std::cout << "  admitted=" << ledger.versions().size() << " dram=" << count[S::dram] << " flash=" << count[S::flash]
              << " evicted=" << count[S::evicted] << " dropped=" << count[S::dropped]
              << " displaced=" << count[S::displaced] << " superseded=" << count[S::superseded] << "\n";
    // Each version is in exactly one state by construction; the balance checks the
    // ledger against what the engine actually holds.
    EXPECT_EQ(total, ledger.versions().size());
    EXPECT_EQ(ledger.versions().size(), k.sets);
    EXPECT_EQ(count[S::dram], engine.dram().size());
    EXPECT_EQ(count[S::flash], engine.footprint().live_objects);
    EXPECT_EQ(count[S::evicted], k.dram_evictions);
    EXPECT_GT(k.segments_erased, 0u);
    EXPECT_GT(count[S::dropped], 0u);
    const std::int64_t balance = static_cast<std::int64_t>(ledger.versions().size()) -
                                 static_cast<std::int64_t>(count[S::dram] + count[S::flash] + count[S::evicted] +
                                                           count[S::dropped] + count[S::displaced] +
                                                           count[S::superseded]);
    EXPECT_EQ(balance, 0);
}

// 11. Raising the flashiness threshold does not raise flash writes (5% slack).
TEST(Acceptance, C11_ThresholdSweep)
{
    const auto reports = sweep(mixed_production_trace(), Policy::flashield, threshold_points(scaled_config(), {1, 10, 100}));
    ASSERT_EQ(reports.size(), 3u);
    for (const auto& r : reports) {
        std::cout << "  " << r.setting << " flash_bytes_written=" << r.counters.flash_bytes_written << "\n";
    }
    for (std::size_t i = 1; i < reports.size(); ++i) {
        EXPECT_LE(static_cast<double>(reports[i].counters.flash_bytes_written),
                  1.05 * static_cast<double>(reports[i - 1].counters.flash_bytes_written))
            << reports[i].setting;
    }
}

// 12. Scripted session, compared byte for byte.
TEST(Acceptance, C12_ProtocolGolden)
{
    Engine engine(hkv::test::small_config());
    double t = 0;
    ProtocolSession session(engine, [&t] { return at(t += 1); });
    const std::vector<std::pair<std::string, std::string>> transcript{
        {"get missing\r\n", "END\r\n"},
        {"set foo 0 0 3\r\nbar\r\n", "STORED\r\n"},
        {"get foo\r\n", "VALUE foo 0 3\r\nbar\r\nEND\r\n"},
        {"set foo 42 3600 5\r\nhello\r\n", "STORED\r\n"},
        {"get foo\r\n", "VALUE foo 0 5\r\nhello\r\nEND\r\n"},
        {"set empty 0 0 0\r\n\r\n", "STORED\r\n"},
        {"get foo empty missing\r\n", "VALUE foo 0 5\r\nhello\r\nVALUE empty 0 0\r\n\r\nEND\r\n"},
        {"gets foo\r\n", "VALUE foo 0 5\r\nhello\r\nEND\r\n"},
        {"set bad 0 0 3\r\nabcd\r\n", "CLIENT_ERROR bad data chunk\r\n"},
        {"get bad\r\n", "END\r\n"},
        {"set q 0 0 1 noreply\r\nx\r\n", ""},
        {"get q\r\n", "VALUE q 0 1\r\nx\r\nEND\r\n"},
        {"set short 0 0\r\n", "CLIENT_ERROR bad command line format\r\n"},
        {"delete foo\r\n", "DELETED\r\n"},
        {"delete foo\r\n", "NOT_FOUND\r\n"},
        {"delete q noreply\r\n", ""},
        {"get foo q\r\n", "END\r\n"},
        {"append foo 0 0 1\r\n", "ERROR\r\n"},
        {"set big 0 0 70000\r\n" + std::string(70000, 'b') + "\r\n", "SERVER_ERROR object too large for cache\r\n"},
        {"get big\r\n", "END\r\n"},
        {"set a 1 2 1\r\n1\r\nset b 1 2 1\r\n2\r\nget a b\r\n",
         "STORED\r\nSTORED\r\nVALUE a 0 1\r\n1\r\nVALUE b 0 1\r\n2\r\nEND\r\n"},
        {"quit\r\n", ""},
    };
    for (const auto& [request, response] : transcript) {
        EXPECT_EQ(session.feed(request), response) << "request: " << request.substr(0, 60);
    }
    EXPECT_TRUE(session.closed());
}

namespace {

/// One line per criterion, in addition to gtest's own output.
class CriterionPrinter : public ::testing::EmptyTestEventListener {
    void OnTestEnd(const ::testing::TestInfo& info) override
    {
        const char* verdict = info.result()->Passed() ? "PASS" : "FAIL";
        std::cout << "ACCEPTANCE " << verdict << " " << info.name() << " ("
                  << info.result()->elapsed_time() << " ms)" << std::endl;
    }
};

}  // namespace

int main(int argc, char** argv)
{
    ::testing::InitGoogleTest(&argc, argv);
    ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionPrinter);
    return RUN_ALL_TESTS();
}
