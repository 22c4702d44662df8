// Record codec, hashing, blooms, the flash device, segment packing and the flash index.

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <unordered_set>

#include "hkv/bloom.hpp"
#include "hkv/device.hpp"
#include "hkv/flash_entry.hpp"
#include "hkv/flash_index.hpp"
#include "hkv/hash.hpp"
#include "hkv/record.hpp"
#include "hkv/segment_builder.hpp"
#include "support.hpp"

using namespace hkv;
using hkv::test::chi_square_uniform_p;
using hkv::test::random_key;

// ---- record ----

TEST(Record, SmallestRecordLayout)
{
    const std::string bytes = serialize_record(Key("k"), "v");
    ASSERT_EQ(bytes.size(), 7u);
    EXPECT_EQ(bytes, std::string("\x01\x01\x00\x00\x00kv", 7));
}

TEST(Record, BoundaryLengths)
{
    const Key key(std::string(250, 'x'));
    EXPECT_EQ(serialize_record(key, "").size(), 255u);
    EXPECT_EQ(record_size(key, ""), 255u);
}

TEST(Record, ValueLengthIsLittleEndian)
{
    const std::string bytes = serialize_record(Key("ab"), std::string(0x010203, 'q'));
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 2);
    EXPECT_EQ(static_cast<unsigned char>(bytes[1]), 0x03);
    EXPECT_EQ(static_cast<unsigned char>(bytes[2]), 0x02);
    EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 0x01);
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x00);
}

TEST(Record, RoundTripRandom)
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> klen(1, 250), vlen(0, 3000);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int i = 0; i < 500; ++i) {
        std::string k(klen(rng), '\0'), v(vlen(rng), '\0');
        for (auto& c : k) {
            c = static_cast<char>(byte(rng));
        }
        for (auto& c : v) {
            c = static_cast<char>(byte(rng));
        }
        auto [key, value] = deserialize_record(serialize_record(Key(k), v));
        EXPECT_EQ(key.str(), k);
        EXPECT_EQ(value, v);
    }
}

TEST(Record, RejectsTruncatedAndEmpty)
{
    const std::string bytes = serialize_record(Key("key"), "value");
    EXPECT_FALSE(decode_record(std::string_view(bytes).substr(0, bytes.size() - 1)));
    EXPECT_FALSE(decode_record(std::string_view(bytes).substr(0, 4)));
    EXPECT_FALSE(decode_record(std::string(16, '\0')));
    EXPECT_THROW(deserialize_record("\x03\x00"), Error);
}

TEST(Key, Limits)
{
    EXPECT_THROW(Key(""), Error);
    EXPECT_THROW(Key(std::string(251, 'k')), Error);
    try {
        Key bad("");
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_key);
    }
    EXPECT_NO_THROW(Key(std::string(250, 'k')));
}

// ---- hashing ----

TEST(Hash, Deterministic)
{
    EXPECT_EQ(hash64(0, "a"), hash64(0, "a"));
    HashFamily a, b;
    for (std::size_t i = 0; i < kMaxHashFunctions; ++i) {
        EXPECT_EQ(a(i, "some key"), b(i, "some key"));
    }
}

TEST(Hash, FunctionsDiffer)
{
    HashFamily h;
    EXPECT_NE(h(0, "a"), h(1, "a"));
    // 10^6 keys: expected 64-bit collisions between two functions is ~5e-14.
    std::mt19937_64 rng(11);
    std::uint64_t same = 0;
    std::vector<std::uint64_t> outputs;
    outputs.reserve(1000000);
    for (int i = 0; i < 1000000; ++i) {
        const std::string k = "key" + std::to_string(i);
        same += h.unchecked(0, k) == h.unchecked(1, k);
        outputs.push_back(h.unchecked(0, k));
    }
    EXPECT_EQ(same, 0u);
    std::sort(outputs.begin(), outputs.end());
    EXPECT_EQ(std::adjacent_find(outputs.begin(), outputs.end()), outputs.end());
}

TEST(Hash, BucketsUniform)
{
    HashFamily h;
    std::mt19937_64 rng(5);
    for (std::size_t fn : {0u, 7u, 15u}) {
        std::vector<std::uint64_t> buckets(1024, 0);
        for (int i = 0; i < 1000000; ++i) {
            ++buckets[h(fn, random_key(rng, 12)) % 1024];
        }
        EXPECT_GT(chi_square_uniform_p(buckets), 0.01) << "fn " << fn;
    }
}

TEST(Hash, IndexOutOfRange)
{
    HashFamily h(4);
    EXPECT_THROW(h(4, "k"), Error);
    EXPECT_THROW(HashFamily(0), Error);
    EXPECT_THROW(HashFamily(17), Error);
}

// ---- bloom ----

TEST(Bloom, TenBitsPerItemAtOnePercent)
{
    EXPECT_EQ(BloomFilter::bits_per_item(0.01), 10u);
    // 10^6 objects at p = 0.01: ~1.25 MB of filter.
    EXPECT_NEAR(static_cast<double>(BloomFilter(1000000, 0.01).byte_size()), 1.25e6, 64);
}

TEST(Bloom, NoFalseNegativesAndCalibratedFalsePositives)
{
    BloomFilter bloom(10000, 0.01);
    for (int i = 0; i < 10000; ++i) {
        bloom.add("in" + std::to_string(i));
    }
    for (int i = 0; i < 10000; ++i) {
        ASSERT_TRUE(bloom.contains("in" + std::to_string(i)));
    }
    int fp = 0;
    for (int i = 0; i < 100000; ++i) {
        fp += bloom.contains("out" + std::to_string(i));
    }
    EXPECT_GT(fp, 500);
    EXPECT_LT(fp, 1500);
}

// ---- device ----

namespace {

std::string payload(std::uint64_t size, char fill) { return std::string(size, fill); }

}  // namespace

TEST(Device, FirstAppendIsSeqZeroSlotZero)
{
    auto dev = FlashDevice::in_memory(4096, 4);
    EXPECT_EQ(dev.append_segment(payload(4096, 'a')), 0u);
    EXPECT_EQ(dev.slot_of(0), 0u);
}

TEST(Device, FifoSlotRecycling)
{
    const std::uint64_t k = 5;
    auto dev = FlashDevice::in_memory(4096, k);
    for (std::uint64_t i = 0; i < k; ++i) {
        dev.append_segment(payload(4096, static_cast<char>('a' + i)));
    }
    EXPECT_TRUE(dev.full());
    EXPECT_THROW(dev.append_segment(payload(4096, 'z')), Error);
    EXPECT_EQ(dev.erase_oldest(), 0u);
    const SegmentSeq seq = dev.append_segment(payload(4096, 'z'));
    EXPECT_EQ(seq, k);
    EXPECT_EQ(dev.slot_of(seq), 0u);
    EXPECT_EQ(dev.read(seq, 0, 4), "zzzz");
}

TEST(Device, WrongPayloadSize)
{
    auto dev = FlashDevice::in_memory(4096, 2);
    try {
        dev.append_segment(payload(4095, 'a'));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::size_mismatch);
    }
}

TEST(Device, EraseOrderAndLiveness)
{
    auto dev = FlashDevice::in_memory(4096, 4);
    try {
        dev.erase_oldest();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::device_empty);
    }
    for (int i = 0; i < 3; ++i) {
        dev.append_segment(payload(4096, 'a'));
    }
    EXPECT_EQ(dev.erase_oldest(), 0u);
    EXPECT_EQ(dev.oldest_live(), 1u);
    EXPECT_FALSE(dev.is_live(0));
    try {
        dev.read(0, 0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dead_segment);
    }
}

TEST(Device, ReadsAndAccounting)
{
    auto dev = FlashDevice::in_memory(4096, 2);
    std::string data(4096, '\0');
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<char>(i * 31);
    }
    const SegmentSeq seq = dev.append_segment(data);
    EXPECT_EQ(dev.read(seq, 0, 4096), data);
    try {
        dev.read(seq, 4095, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::out_of_range);
    }
    const auto before = dev.stats().flash_reads;
    for (int i = 0; i < 100; ++i) {
        dev.read(seq, static_cast<std::uint64_t>(i), 8);
    }
    EXPECT_EQ(dev.stats().flash_reads, before + 100);
    EXPECT_EQ(dev.stats().bytes_written_to_flash, 4096u);
}

TEST(Device, FileBackendMatchesMemoryBackend)
{
    const std::uint64_t seg = 8192, slots = 3;
    test::TempPath path("hkv-device");
    FlashDevice file(std::make_unique<FileBackend>(path.str(), slots, seg, true, true), seg, slots);
    auto mem = FlashDevice::in_memory(seg, slots);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int round = 0; round < 20; ++round) {
        if (mem.full()) {
            EXPECT_EQ(mem.erase_oldest(), file.erase_oldest());
        }
        std::string data(seg, '\0');
        for (auto& c : data) {
            c = static_cast<char>(byte(rng));
        }
        EXPECT_EQ(mem.append_segment(data), file.append_segment(data));
        for (SegmentSeq s = mem.oldest_live(); s < mem.next_seq(); ++s) {
            const std::uint64_t off = rng() % seg;
            const std::uint64_t len = std::min<std::uint64_t>(seg - off, 1 + rng() % 5000);
            ASSERT_EQ(mem.read(s, off, len), file.read(s, off, len));
        }
    }
    auto* backend = dynamic_cast<FileBackend*>(&file.backend());
    ASSERT_NE(backend, nullptr);
    const auto log = backend->write_log();
    ASSERT_EQ(log.size(), 20u);
    for (std::size_t i = 0; i < log.size(); ++i) {
        EXPECT_EQ(log[i].offset, (i % slots) * seg);
        EXPECT_EQ(log[i].length, seg);
    }
}

// ---- segment builder ----

TEST(SegmentBuilder, EmptyImageUsesFirstFunction)
{
    HashFamily h;
    SegmentImage image(64 * KiB);
    auto p = try_place(image, h, Key("alpha"), "value");
    ASSERT_TRUE(p);
    EXPECT_EQ(p->hash_fn_id, 0);
    EXPECT_EQ(p->offset, placement_offset(h, 0, "alpha", 64 * KiB));
    auto view = decode_record(std::string_view(image.bytes()).substr(p->offset));
    ASSERT_TRUE(view);
    EXPECT_EQ(view->key, "alpha");
    EXPECT_EQ(view->value, "value");
}

namespace {

// Occupies the extents the target would take under functions [0, upto) with 6-byte
// filler records; returns false if the fillers can't be placed without touching
// `keep_free`.
bool block_functions(SegmentImage& image, const HashFamily& h, const std::string& key, std::size_t len,
                     std::size_t upto, std::uint64_t keep_free_start, std::uint64_t keep_free_len)
{
    for (std::size_t fn = 0; fn < upto; ++fn) {
        const std::uint64_t off = placement_offset(h, fn, key, image.segment_size());
        if (!image.is_free(off, 1)) {
            continue;  // already covered by an earlier filler
        }
        const std::uint64_t start = std::min<std::uint64_t>(off, image.segment_size() - 6);
        if (!image.is_free(start, 6)) {
            return false;
        }
        if (start < keep_free_start + keep_free_len && keep_free_start < start + 6) {
            return false;
        }
        image.place(Key("f" + std::to_string(fn)), "", 0, start);
    }
    (void)len;
    return true;
}

}  // namespace

TEST(SegmentBuilder, AdversarialLastFunctionWins)
{
    HashFamily h;
    const std::uint64_t seg = 64 * KiB;
    const std::string value(20, 'v');
    for (int attempt = 0; attempt < 100; ++attempt) {
        const std::string key = "target" + std::to_string(attempt);
        const std::size_t len = record_size(key.size(), value.size());
        const std::uint64_t last = placement_offset(h, h.size() - 1, key, seg);
        SegmentImage image(seg);
        if (!block_functions(image, h, key, len, h.size() - 1, last, len)) {
            continue;
        }
        if (!image.is_free(last, len)) {
            continue;
        }
        auto p = try_place(image, h, Key(key), value);
        ASSERT_TRUE(p);
        EXPECT_EQ(p->hash_fn_id, h.size() - 1);
        EXPECT_EQ(p->offset, last);
        return;
    }
    FAIL() << "no key admitted the construction";
}

TEST(SegmentBuilder, AllFunctionsCollideLeavesImageUntouched)
{
    HashFamily h;
    const std::uint64_t seg = 64 * KiB;
    const std::string key = "victim";
    SegmentImage image(seg);
    ASSERT_TRUE(block_functions(image, h, key, 0, h.size(), seg, 0));
    const std::string before = image.bytes();
    const auto placements_before = image.placements().size();
    EXPECT_FALSE(try_place(image, h, Key(key), "payload"));
    EXPECT_EQ(image.bytes(), before);
    EXPECT_EQ(image.placements().size(), placements_before);
}

TEST(SegmentBuilder, SingleCandidateUtilization)
{
    HashFamily h;
    const std::string value(1000, 'x');
    std::vector<SegmentCandidate> c{{Key("solo"), value, 1.0}};
    auto r = build_segment(c, h, 64 * KiB);
    ASSERT_EQ(r.placed.size(), 1u);
    EXPECT_DOUBLE_EQ(r.image.utilization(), static_cast<double>(record_size(4, 1000)) / (64 * KiB));
    EXPECT_DOUBLE_EQ(r.avg_hash_attempts, 1.0);
}

TEST(SegmentBuilder, PackedImageParsesBackExactly)
{
    HashFamily h;
    const std::uint64_t seg = 64 * KiB;
    std::mt19937_64 rng(9);
    std::vector<std::string> keys, values;
    std::uint64_t total = 0;
    while (total < 2 * seg) {
        keys.push_back(random_key(rng, 1 + rng() % 40));
        values.emplace_back(1 + rng() % 900, static_cast<char>('a' + rng() % 26));
        total += record_size(keys.back().size(), values.back().size());
    }
    std::vector<SegmentCandidate> c;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        c.push_back({Key(keys[i]), values[i], 0.0});
    }
    auto r = build_segment(c, h, seg);
    EXPECT_EQ(r.placed.size() + r.skipped.size(), c.size());

    // Independent parse: every placement decodes to its candidate at its hashed offset,
    // extents are disjoint, and bytes outside extents are zero.
    std::vector<bool> covered(seg, false);
    const auto& placements = r.image.placements();
    ASSERT_EQ(placements.size(), r.placed.size());
    std::uint64_t used = 0;
    for (std::size_t k = 0; k < placements.size(); ++k) {
        const auto& p = placements[k];
        const auto& cand = c[r.placed[k]];
        EXPECT_EQ(p.key, cand.key.str());
        EXPECT_EQ(p.offset, placement_offset(h, p.hash_fn_id, p.key, seg));
        auto view = decode_record(std::string_view(r.image.bytes()).substr(p.offset));
        ASSERT_TRUE(view);
        EXPECT_EQ(view->key, cand.key.view());
        EXPECT_EQ(view->value, cand.value);
        for (std::uint64_t b = p.offset; b < p.offset + p.record_len; ++b) {
            ASSERT_FALSE(covered[b]);
            covered[b] = true;
        }
        used += p.record_len;
    }
    for (std::uint64_t b = 0; b < seg; ++b) {
        if (!covered[b]) {
            ASSERT_EQ(r.image.bytes()[b], '\0');
        }
    }
    EXPECT_EQ(used, r.image.used_bytes());
}

TEST(SegmentBuilder, OversizeRecordRejected)
{
    HashFamily h;
    SegmentImage image(4096);
    EXPECT_THROW(try_place(image, h, Key("big"), std::string(4096, 'x')), Error);
}

// ---- flash entry ----

TEST(FlashEntry, PackingExhaustiveOverFlags)
{
    EXPECT_EQ(sizeof(FlashEntry), 4u);
    EXPECT_FALSE(FlashEntry{}.valid());
    const std::vector<std::uint64_t> seqs{0, 1, 2, 0x7fffff, 0x800000, 0xfffffe, 0xffffff, 0x1000000, 0x1234567};
    for (std::uint64_t seq : seqs) {
        for (unsigned fn = 0; fn < 16; ++fn) {
            for (unsigned clock = 0; clock < 4; ++clock) {
                for (bool ghost : {false, true}) {
                    const FlashEntry e = FlashEntry::make(seq, fn, clock, ghost);
                    ASSERT_TRUE(e.valid());
                    ASSERT_EQ(e.seq24(), seq & 0xffffff);
                    ASSERT_EQ(e.hash_fn_id(), fn);
                    ASSERT_EQ(e.clock(), clock);
                    ASSERT_EQ(e.ghost(), ghost);
                    ASSERT_EQ(e.raw(), (1u << 31) | (ghost ? 1u << 30 : 0u) | (clock << 28) | (fn << 24) |
                                           static_cast<std::uint32_t>(seq & 0xffffff));
                    ASSERT_EQ(e.with_ghost(!ghost).ghost(), !ghost);
                    ASSERT_EQ(e.with_ghost(!ghost).with_ghost(ghost), e);
                    for (unsigned c2 = 0; c2 < 4; ++c2) {
                        ASSERT_EQ(e.with_clock(c2).clock(), c2);
                        ASSERT_EQ(e.with_clock(c2).with_clock(clock), e);
                    }
                }
            }
        }
    }
}

TEST(FlashEntry, EverySequenceValueRoundTrips)
{
    for (std::uint32_t seq = 0; seq <= FlashEntry::kSeqMask; ++seq) {
        const FlashEntry e = FlashEntry::make(seq, 15, 3, true);
        if (e.seq24() != seq || e.hash_fn_id() != 15 || e.clock() != 3 || !e.ghost()) {
            FAIL() << "seq " << seq;
        }
    }
}

// ---- flash index ----

namespace {

struct IndexRig {
    explicit IndexRig(EngineConfig c) : config(c), hashes(c.num_hash_functions, c.hash_seed),
        device(FlashDevice::in_memory(c.segment_size, c.segment_count())), index(config, hashes)
    {
    }

    /// Packs, appends and indexes the objects; returns the segment and the keys placed.
    std::pair<SegmentSeq, std::vector<std::string>> write(const std::vector<std::pair<std::string, std::string>>& kvs,
                                                          unsigned clock = 3)
    {
        std::vector<SegmentCandidate> c;
        for (const auto& [k, v] : kvs) {
            c.push_back({Key(k), v, 1.0});
        }
        auto built = build_segment(c, hashes, config.segment_size);
        const SegmentSeq seq = device.append_segment(built.image.bytes());
        index.add_segment(seq, built.image.seal_bloom(config.bloom_fp_rate), built.placed.size(),
                          built.image.used_bytes());
        std::vector<std::string> placed;
        for (std::size_t k = 0; k < built.placed.size(); ++k) {
            const auto& p = built.image.placements()[k];
            index.insert(Key(p.key), seq, p.hash_fn_id, clock);
            placed.push_back(p.key);
        }
        return {seq, placed};
    }

    EngineConfig config;
    HashFamily hashes;
    FlashDevice device;
    FlashIndex index;
};

EngineConfig index_config(std::uint64_t slots = 0)
{
    EngineConfig c = test::small_config();
    c.index_slots = slots;
    return c;
}

}  // namespace

TEST(FlashIndex, EmptyTableLandsAtFirstProbe)
{
    IndexRig rig(index_config());
    rig.index.add_segment(0, BloomFilter(1, 0.01), 1, 10);
    auto r = rig.index.insert(Key("a"), 0, 0, 3);
    EXPECT_FALSE(r.displaced);
    EXPECT_EQ(r.slot, rig.index.probe_slot(0, "a"));
}

TEST(FlashIndex, OccupiedFirstProbeFallsThrough)
{
    IndexRig rig(index_config(64));
    rig.index.add_segment(0, BloomFilter(2, 0.01), 1, 10);
    rig.index.add_segment(1, BloomFilter(2, 0.01), 1, 10);
    rig.index.insert(Key("a"), 0, 0, 3);
    const auto taken = rig.index.probe_slot(0, "a");
    std::string b;
    for (int i = 0;; ++i) {
        b = "b" + std::to_string(i);
        if (rig.index.probe_slot(0, b) == taken && rig.index.probe_slot(1, b) != taken) {
            break;
        }
    }
    auto r = rig.index.insert(Key(b), 1, 0, 3);
    EXPECT_EQ(r.slot, rig.index.probe_slot(1, b));
    EXPECT_FALSE(r.displaced);
    EXPECT_FALSE(r.aliased);
}

TEST(FlashIndex, SameSegmentAliasLeftUnindexed)
{
    // b's first probe holds a's entry for the same segment and function, which would
    // resolve b's own record. b must not be indexed behind it.
    IndexRig rig(index_config(64));
    rig.index.add_segment(0, BloomFilter(2, 0.01), 2, 10);
    rig.index.insert(Key("a"), 0, 3, 3);
    const auto taken = rig.index.probe_slot(0, "a");
    std::string b;
    for (int i = 0;; ++i) {
        b = "b" + std::to_string(i);
        if (rig.index.probe_slot(0, b) == taken) {
            break;
        }
    }
    auto r = rig.index.insert(Key(b), 0, 3, 3);
    EXPECT_TRUE(r.aliased);
    EXPECT_EQ(rig.index.live_objects(), 1u);
    EXPECT_FALSE(rig.index.locate(Key(b), 0, placement_offset(rig.hashes, 3, b, rig.config.segment_size)));
    // A different function gives b a different offset, so no alias.
    auto r2 = rig.index.insert(Key(b), 0, 4, 3);
    EXPECT_FALSE(r2.aliased);
    EXPECT_EQ(rig.index.live_objects(), 2u);
}

TEST(FlashIndex, AliasedKeysStayOutOfFlashDuringFlush)
{
    // Many same-segment records in a small table: every key the index accepted is found
    // through its own slot, so invalidating it never disturbs another key.
    IndexRig rig(index_config(512));
    std::vector<std::pair<std::string, std::string>> kvs;
    for (int i = 0; i < 400; ++i) {
        kvs.emplace_back("k" + std::to_string(i), std::string(20, 'x'));
    }
    std::vector<SegmentCandidate> c;
    for (const auto& [k, v] : kvs) {
        c.push_back({Key(k), v, 1.0});
    }
    auto built = build_segment(c, rig.hashes, rig.config.segment_size);
    const SegmentSeq seq = rig.device.append_segment(built.image.bytes());
    rig.index.add_segment(seq, built.image.seal_bloom(0.01), built.placed.size(), built.image.used_bytes());
    std::vector<std::string> indexed;
    std::map<std::string, std::uint64_t> slot_of;
    for (std::size_t k = 0; k < built.placed.size(); ++k) {
        const auto& p = built.image.placements()[k];
        auto r = rig.index.insert(Key(p.key), seq, p.hash_fn_id, 3);
        if (!r.aliased) {
            indexed.push_back(p.key);
            slot_of[p.key] = r.slot;
        } else {
            EXPECT_FALSE(rig.index.peek(Key(p.key), rig.device).hit) << p.key;
        }
    }
    ASSERT_LT(indexed.size(), built.placed.size());  // the table is small enough to alias
    for (const auto& k : indexed) {
        auto hit = rig.index.peek(Key(k), rig.device).hit;
        ASSERT_TRUE(hit) << k;
        EXPECT_EQ(hit->slot, slot_of[k]) << k;
    }
    for (std::size_t i = 0; i < indexed.size(); i += 2) {
        ASSERT_TRUE(rig.index.invalidate(Key(indexed[i]), rig.device).hit);
    }
    for (std::size_t i = 0; i < indexed.size(); ++i) {
        EXPECT_EQ(rig.index.peek(Key(indexed[i]), rig.device).hit.has_value(), i % 2 == 1) << indexed[i];
    }
}

TEST(FlashIndex, FullProbeSetDisplacesLastProbe)
{
    IndexRig rig(index_config(16));
    rig.index.add_segment(0, BloomFilter(64, 0.01), 64, 640);
    rig.index.add_segment(1, BloomFilter(1, 0.01), 1, 10);
    int i = 0;
    auto all_full = [&] {
        for (std::uint64_t s = 0; s < 16; ++s) {
            if (!rig.index.entry(s).valid()) {
                return false;
            }
        }
        return true;
    };
    while (!all_full()) {
        rig.index.insert(Key("fill" + std::to_string(i)), 0, i % 16, 1);
        ++i;
    }
    const auto displaced_before = rig.index.stats().displaced;
    const std::string x = "newcomer";
    const auto last = rig.index.probe_slot(rig.hashes.size() - 1, x);
    const FlashEntry occupant = rig.index.entry(last);
    auto r = rig.index.insert(Key(x), 1, 5, 2);
    EXPECT_TRUE(r.displaced);
    EXPECT_EQ(r.slot, last);
    EXPECT_EQ(r.victim, occupant);
    EXPECT_EQ(rig.index.stats().displaced, displaced_before + 1);
    EXPECT_EQ(rig.index.entry(last).hash_fn_id(), 5u);
}

TEST(FlashIndex, MissWithoutBloomsReadsNothing)
{
    IndexRig rig(index_config());
    auto r = rig.index.lookup(Key("ghost"), rig.device);
    EXPECT_FALSE(r.hit);
    EXPECT_EQ(r.flash_reads, 0u);
}

TEST(FlashIndex, HitCostsOneReadAndReturnsValue)
{
    IndexRig rig(index_config());
    auto [seq, placed] = rig.write({{"alpha", "one"}, {"beta", std::string(300, 'b')}});
    ASSERT_EQ(placed.size(), 2u);
    auto r = rig.index.lookup(Key("beta"), rig.device);
    ASSERT_TRUE(r.hit);
    EXPECT_EQ(r.hit->value, std::string(300, 'b'));
    EXPECT_EQ(r.hit->seq, seq);
    EXPECT_EQ(r.flash_reads, 1u);
}

TEST(FlashIndex, RecordLongerThanProbeNeedsSecondRead)
{
    IndexRig rig(index_config());
    const std::string big(10000, 'B');
    rig.write({{"big", big}});
    auto r = rig.index.lookup(Key("big"), rig.device);
    ASSERT_TRUE(r.hit);
    EXPECT_EQ(r.hit->value, big);
    EXPECT_EQ(r.flash_reads, 2u);
}

TEST(FlashIndex, ClockSaturatesAndFloors)
{
    IndexRig rig(index_config());
    rig.index.add_segment(0, BloomFilter(2, 0.01), 2, 10);
    const auto hot = rig.index.insert(Key("hot"), 0, 0, 3).slot;
    rig.index.clock_touch(hot);
    EXPECT_EQ(rig.index.entry(hot).clock(), 3u);
    const auto cold = rig.index.insert(Key("cold"), 0, 1, 0).slot;
    rig.index.clock_decrement(cold);
    EXPECT_EQ(rig.index.entry(cold).clock(), 0u);
    rig.index.clock_decrement(hot);
    EXPECT_EQ(rig.index.entry(hot).clock(), 2u);
}

TEST(FlashIndex, InvalidateThenMiss)
{
    IndexRig rig(index_config());
    rig.write({{"gone", "value"}, {"kept", "value2"}});
    auto inv = rig.index.invalidate(Key("gone"), rig.device);
    EXPECT_TRUE(inv.hit);
    EXPECT_FALSE(rig.index.lookup(Key("gone"), rig.device).hit);
    EXPECT_TRUE(rig.index.lookup(Key("kept"), rig.device).hit);
    EXPECT_FALSE(rig.index.invalidate(Key("gone"), rig.device).hit);
    EXPECT_EQ(rig.index.live_objects(), 1u);
}

TEST(FlashIndex, DroppedSegmentEntriesAreDead)
{
    IndexRig rig(index_config());
    rig.write({{"old", "x"}});
    rig.write({{"new", "y"}});
    rig.index.drop_oldest_segment();
    rig.device.erase_oldest();
    auto r = rig.index.lookup(Key("old"), rig.device);
    EXPECT_FALSE(r.hit);
    EXPECT_TRUE(rig.index.lookup(Key("new"), rig.device).hit);
    EXPECT_EQ(rig.index.live_objects(), 1u);
}

TEST(FlashIndex, GhostMarksMoveHotBytes)
{
    IndexRig rig(index_config());
    auto [seq, placed] = rig.write({{"a", std::string(95, 'a')}, {"b", std::string(95, 'b')}});
    ASSERT_EQ(placed.size(), 2u);
    EXPECT_DOUBLE_EQ(rig.index.flash_hot_bytes(), 2 * 101.0);
    auto slot = rig.index.locate(Key("a"), seq, placement_offset(rig.hashes, 0, "a", rig.config.segment_size));
    ASSERT_TRUE(slot);
    rig.index.mark_ghost(*slot);
    EXPECT_DOUBLE_EQ(rig.index.flash_hot_bytes(), 101.0);
    EXPECT_EQ(rig.index.ghost_objects(), 1u);
    rig.index.mark_ghost(*slot);
    EXPECT_EQ(rig.index.ghost_objects(), 1u);
    rig.index.unmark_ghost(*slot);
    EXPECT_DOUBLE_EQ(rig.index.flash_hot_bytes(), 2 * 101.0);
}

TEST(FlashIndex, SequenceWindowSurvivesWraparound)
{
    EngineConfig c = index_config(16);
    IndexRig rig(c);
    const std::uint64_t n = (std::uint64_t{1} << 24) + 3;
    for (std::uint64_t s = 0; s < n; ++s) {
        rig.index.add_segment(s, BloomFilter{}, 0, 0);
        if (s >= 3) {
            rig.index.drop_oldest_segment();
        }
    }
    const SegmentSeq newest = rig.index.newest_seq();
    ASSERT_EQ(newest, n - 1);
    auto r = rig.index.insert(Key("late"), newest, 0, 1);
    EXPECT_EQ(rig.index.full_seq(rig.index.entry(r.slot)), newest);
    auto r2 = rig.index.insert(Key("earlier"), newest - 2, 0, 1);
    EXPECT_EQ(rig.index.full_seq(rig.index.entry(r2.slot)), newest - 2);
    EXPECT_TRUE(rig.index.is_live(rig.index.entry(r2.slot)));
    // An entry whose 24-bit seq aliases a long-dead segment is not live.
    EXPECT_FALSE(rig.index.is_live(FlashEntry::make(newest - 3, 0, 1)));
}

TEST(FlashIndex, FootprintArithmetic)
{
    {
        EngineConfig c = index_config(std::uint64_t{1} << 20);
        HashFamily h;
        FlashIndex index(c, h);
        const auto f = index.memory_footprint();
        EXPECT_EQ(f.table_bytes, 4 * MiB);
        EXPECT_EQ(f.bloom_bytes, 0u);
    }
    // 80% occupancy with 10-bit blooms: 4/0.8 + 10/8 = 6.25 bytes per object.
    EngineConfig c = index_config(1024);
    HashFamily h;
    FlashIndex index(c, h);
    const std::uint64_t live = 819;
    index.add_segment(0, BloomFilter(live, 0.01), live, live * 100);
    for (std::uint64_t i = 0; i < live; ++i) {
        // Rotate the function until the entry doesn't alias an earlier one.
        for (unsigned fn = 0; fn < 16; ++fn) {
            if (!index.insert(Key("o" + std::to_string(i)), 0, (i + fn) % 16, 1).aliased) {
                break;
            }
        }
    }
    const auto f = index.memory_footprint();
    const std::uint64_t alive = f.live_objects;
    ASSERT_GT(alive, 0u);
    EXPECT_DOUBLE_EQ(f.table_bytes_per_live_object, 4.0 * 1024 / static_cast<double>(alive));
    EXPECT_DOUBLE_EQ(f.bytes_per_live_object, static_cast<double>(4 * 1024 + f.bloom_bytes) / static_cast<double>(alive));
    ASSERT_GE(alive + 2, live);  // a displacement or two at this load
    EXPECT_NEAR(f.bytes_per_live_object, 6.25, 0.02);
}
