#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>

#include "oracle/oracle_cache.hpp"
#include "test_rng.hpp"
#include "test_stores.hpp"
#include "vbcache/engine.hpp"

using namespace vbcache;

namespace {

const BlockSizeConfig kDefaultSizes{32 * KiB, 64 * KiB, 128 * KiB, 256 * KiB};

EngineOptions opts(std::uint64_t capacity, BlockSizeConfig sizes = kDefaultSizes) {
    EngineOptions o;
    o.sizes = std::move(sizes);
    o.capacity = capacity;
    return o;
}

// Mirrors the oracle's event vocabulary.
class LogObserver final : public CacheObserver {
public:
    void on_hit(DeviceId, const BlockRef& b) override { log.push_back({oracle::EventKind::hit, b.offset, false}); }
    void on_install(DeviceId, const BlockRef& b) override { log.push_back({oracle::EventKind::miss, b.offset, false}); }
    void on_evict(DeviceId, const BlockRef& b, bool dirty) override {
        log.push_back({oracle::EventKind::evict, b.offset, dirty});
        ++evicted_blocks;
        evicted_since_group.push_back(b.size);
    }
    void on_group_evict(std::uint32_t, std::uint64_t size, std::uint32_t members) override {
        ++group_evictions;
        // Members of a group eviction are reported just before it, all of one size.
        REQUIRE(evicted_since_group.size() >= members);
        for (std::size_t i = evicted_since_group.size() - members; i < evicted_since_group.size(); ++i)
            REQUIRE(evicted_since_group[i] == size);
        evicted_since_group.clear();
    }

    std::vector<oracle::Event> log;
    std::uint64_t evicted_blocks = 0;
    std::uint64_t group_evictions = 0;
    std::vector<std::uint64_t> evicted_since_group;
};

std::vector<std::byte> pattern(std::uint64_t len, std::uint64_t seed) {
    std::vector<std::byte> v(len);
    testing::Rng rng(seed);
    for (auto& b : v)
        b = static_cast<std::byte>(rng.next());
    return v;
}

}  // namespace

TEST_CASE("capacity is rounded down to whole groups") {
    NullStore store;
    CacheEngine e(opts(3 * 256 * KiB + 100 * KiB), store);
    CHECK(e.capacity() == 3 * 256 * KiB);
    CHECK(e.group_count() == 3);
    CHECK_THROWS_AS(CacheEngine(opts(255 * KiB), store), std::invalid_argument);

    testing::MemStore data_store(true);
    CHECK_THROWS_AS(CacheEngine(opts(MiB), data_store), std::invalid_argument);
}

TEST_CASE("worked example through the engine") {
    testing::MemStore store(false);
    CacheEngine e(opts(4 * MiB), store);
    e.read(0, 128 * KiB, 128 * KiB - 1);  // installs exactly one 128K block at 128K
    REQUIRE(e.contents_snapshot().size() == 1);
    CHECK(e.contents_snapshot()[0].size == 128 * KiB);
    store.calls.clear();

    const auto r = e.read(0, 48 * KiB, 184 * KiB);
    REQUIRE(store.calls.size() == 2);
    CHECK(store.calls[0].offset == 32 * KiB);
    CHECK(store.calls[0].length == 32 * KiB);
    CHECK(store.calls[1].offset == 64 * KiB);
    CHECK(store.calls[1].length == 64 * KiB);
    std::uint64_t fetched = 0;
    for (const auto& c : store.calls)
        fetched += c.length;
    CHECK(fetched == 96 * KiB);  // exactly [32K, 128K)

    const auto snap = e.contents_snapshot();
    REQUIRE(snap.size() == 3);
    CHECK(snap[0].source_offset == 32 * KiB);
    CHECK(snap[0].size == 32 * KiB);
    CHECK(snap[1].source_offset == 64 * KiB);
    CHECK(snap[1].size == 64 * KiB);
    CHECK(snap[2].source_offset == 128 * KiB);
    CHECK(r.bytes_from_cache + r.bytes_from_backend == 184 * KiB);
    CHECK(r.bytes_from_cache == 104 * KiB);  // [128K, 232K)
    CHECK_FALSE(r.full_hit());
    e.check_invariants();

    // Highest-offset touched block ends at the LRU head.
    CHECK(e.lru_head()->source_offset == 128 * KiB);
    CHECK(*e.group_lru_head() == e.lru_head()->group_id);
}

TEST_CASE("read contained in one resident block is a pure hit") {
    NullStore store;
    CacheEngine e(opts(MiB), store);
    e.read(0, 0, 256 * KiB - 1);
    const auto before = store.read_bytes();
    const auto r = e.read(0, 10 * KiB, 100 * KiB);
    CHECK(r.bytes_from_backend == 0);
    CHECK(r.bytes_from_cache == 100 * KiB);
    CHECK(r.full_hit());
    CHECK(store.read_bytes() == before);
}

TEST_CASE("write policies") {
    SUBCASE("write-through sends every write to the backend and never dirties") {
        NullStore store;
        auto o = opts(MiB);
        o.policy = WritePolicy::write_through;
        CacheEngine e(o, store);
        testing::Rng rng(3);
        for (int i = 0; i < 2000; ++i) {
            const auto len = rng.range(1, 300 * KiB);
            const auto w = e.write(0, rng.below(8 * MiB), len);
            CHECK(w.bytes_to_backend >= len);
            for (const auto& b : e.contents_snapshot())
                REQUIRE_FALSE(b.dirty);
        }
        e.check_invariants();
    }
    SUBCASE("write-back hit on a clean block stays in the cache") {
        NullStore store;
        CacheEngine e(opts(MiB), store);
        e.read(0, 0, 64 * KiB - 1);
        REQUIRE_FALSE(e.contents_snapshot()[0].dirty);
        const auto w = e.write(0, 4 * KiB, 8 * KiB);
        CHECK(w.bytes_to_backend == 0);
        CHECK(w.full_hit());
        CHECK(store.write_bytes() == 0);
        CHECK(e.contents_snapshot()[0].dirty);
    }
    SUBCASE("full-block aligned write miss needs no fill") {
        testing::MemStore store(false);
        auto o = opts(2 * MiB);
        o.range_mode = RangeMode::strict;
        CacheEngine e(o, store);
        const auto w = e.write(0, 512 * KiB, 512 * KiB);
        CHECK(w.fill_bytes == 0);
        CHECK(store.calls.empty());
        CHECK(e.contents_snapshot().size() == 2);
        CHECK(e.stats().volumes.read_from_core == 0);
    }
    SUBCASE("extended scan range adds one filled step after an aligned write") {
        NullStore store;
        CacheEngine e(opts(2 * MiB), store);
        const auto w = e.write(0, 512 * KiB, 256 * KiB);
        CHECK(w.fill_bytes == 32 * KiB);  // the extra 32K step at 768K
    }
    SUBCASE("partial write miss fills only the uncovered head and tail") {
        testing::MemStore store(false);
        CacheEngine e(opts(MiB, BlockSizeConfig{64 * KiB}), store);
        const auto w = e.write(0, 10 * KiB, 20 * KiB);
        CHECK(w.fill_bytes == 44 * KiB);
        REQUIRE(store.calls.size() == 2);
        CHECK(store.calls[0].offset == 0);
        CHECK(store.calls[0].length == 10 * KiB);
        CHECK(store.calls[1].offset == 30 * KiB);
        CHECK(store.calls[1].length == 34 * KiB);
    }
    SUBCASE("always-fill fetches whole blocks") {
        NullStore store;
        auto o = opts(MiB, BlockSizeConfig{64 * KiB});
        o.always_fill = true;
        CacheEngine e(o, store);
        CHECK(e.write(0, 0, 64 * KiB - 1).fill_bytes == 64 * KiB);
    }
}

TEST_CASE("group allocation and two-level replacement") {
    NullStore store;
    auto o = opts(512 * KiB);
    o.range_mode = RangeMode::strict;
    CacheEngine e(o, store);

    e.read(0, 0, 32 * KiB);         // group 0 opens for 32K
    e.read(0, 1 * MiB, 256 * KiB);  // group 1 holds one 256K block
    CHECK(e.open_groups() == 1);
    e.read(0, 2 * MiB, 32 * KiB);   // cache has no free extent, but the 32K group is open
    CHECK(e.stats().group_evictions == 0);
    CHECK(e.stats().block_evictions == 0);

    // 64K: no open group, no free extent; the block tail (32K@0) does not match,
    // so the group-LRU tail (the 256K group) goes.
    e.read(0, 3 * MiB, 64 * KiB);
    CHECK(e.stats().group_evictions == 1);
    CHECK(e.stats().blocks_evicted_in_groups == 1);
    auto snap = e.contents_snapshot();
    CHECK(std::none_of(snap.begin(), snap.end(), [](const auto& b) { return b.size == 256 * KiB; }));
    CHECK(e.open_groups() == 2);
    e.check_invariants();

    // Fill the 32K group (8 slots, 2 used).
    for (int i = 0; i < 6; ++i)
        e.read(0, (4 + i) * MiB, 32 * KiB);
    CHECK(e.open_groups() == 1);
    const auto tail = *e.lru_tail();
    CHECK(tail.source_offset == 0);
    CHECK(tail.size == 32 * KiB);

    // Next 32K block: tail size matches, so exactly that block is replaced and
    // its slot reused.
    e.read(0, 20 * MiB, 32 * KiB);
    CHECK(e.stats().block_evictions == 1);
    CHECK(e.stats().group_evictions == 1);
    snap = e.contents_snapshot();
    auto it = std::find_if(snap.begin(), snap.end(), [](const auto& b) { return b.source_offset == 20 * MiB; });
    REQUIRE(it != snap.end());
    CHECK(it->cache_offset == tail.cache_offset);
    CHECK(it->group_id == tail.group_id);
    CHECK(e.lru_head()->source_offset == 20 * MiB);
    CHECK(*e.group_lru_head() == tail.group_id);
    e.check_invariants();
}

TEST_CASE("property: single-size engine matches the fixed-size LRU oracle") {
    for (const std::uint64_t b : {4 * KiB, 32 * KiB, 256 * KiB}) {
        for (const bool write_back : {true, false}) {
            for (const bool strict : {false, true}) {
                CAPTURE(b);
                CAPTURE(write_back);
                CAPTURE(strict);
                NullStore store;
                auto o = opts(16 * b, BlockSizeConfig{b});
                o.policy = write_back ? WritePolicy::write_back : WritePolicy::write_through;
                o.range_mode = strict ? RangeMode::strict : RangeMode::extended;
                o.always_fill = !strict;
                CacheEngine e(o, store);
                LogObserver obs;
                e.set_observer(&obs);
                oracle::OracleCache ref({b, 16, write_back, strict, o.always_fill});
                testing::Rng rng(b + write_back * 2 + strict);
                for (int i = 0; i < 5000; ++i) {
                    const bool is_write = rng.chance(0.4);
                    const auto off = rng.below(64 * b);
                    const auto len = rng.range(1, 3 * b);
                    const auto expect = ref.access(is_write, off, len);
                    if (is_write) {
                        const auto w = e.write(0, off, len);
                        REQUIRE(w.hit_bytes == expect.hit_bytes);
                        REQUIRE(w.full_hit() == expect.full_hit);
                    } else {
                        const auto r = e.read(0, off, len);
                        REQUIRE(r.bytes_from_cache == expect.hit_bytes);
                        REQUIRE(r.bytes_from_backend == expect.miss_bytes);
                        REQUIRE(r.full_hit() == expect.full_hit);
                    }
                }
                REQUIRE(obs.log == ref.log());
                const auto& v = e.stats().volumes;
                CHECK(v.read_from_core == ref.volumes().read_from_core);
                CHECK(v.write_to_core == ref.volumes().write_to_core);
                CHECK(v.read_from_cache == ref.volumes().read_from_cache);
                CHECK(v.write_to_cache == ref.volumes().write_to_cache);
                CHECK(e.flush() == ref.flush());
                CHECK(e.stats().volumes.write_to_core == ref.volumes().write_to_core);
                CHECK(store.read_bytes() == v.read_from_core);
            }
        }
    }
}

TEST_CASE("property: invariants, LRU coherence and eviction granularity under random traffic") {
    for (const auto policy : {WritePolicy::write_back, WritePolicy::write_through}) {
        NullStore store;
        auto o = opts(8 * 256 * KiB);
        o.policy = policy;
        CacheEngine e(o, store);
        LogObserver obs;
        e.set_observer(&obs);
        testing::Rng rng(policy == WritePolicy::write_back ? 11 : 12);
        for (int i = 0; i < 20000; ++i) {
            const auto off = rng.below(32 * MiB);
            const auto len = rng.chance(0.7) ? rng.range(1, 16 * KiB) : rng.range(1, 300 * KiB);
            Interval range;
            if (rng.chance(0.5))
                range = e.read(0, off, len).range;
            else
                range = e.write(0, off, len).range;
            e.check_invariants();
            REQUIRE(e.open_groups() <= o.sizes.count());

            // The block covering the last scanned step was promoted last.
            const auto head = *e.lru_head();
            const std::uint64_t last_step = range.end - o.sizes.smallest();
            REQUIRE(head.source_offset <= last_step);
            REQUIRE(head.source_offset + head.size > last_step);
            REQUIRE(*e.group_lru_head() == head.group_id);
        }
        CHECK(obs.evicted_blocks == e.stats().block_evictions + e.stats().blocks_evicted_in_groups);
        CHECK(obs.group_evictions == e.stats().group_evictions);
        CHECK(e.stats().group_evictions > 0);
        CHECK(e.stats().block_evictions > 0);
    }
}

TEST_CASE("data integrity against a shadow copy") {
    for (const auto policy : {WritePolicy::write_back, WritePolicy::write_through}) {
        for (const bool always_fill : {false, true}) {
            testing::MemStore store(true);
            auto o = opts(4 * 256 * KiB);
            o.policy = policy;
            o.always_fill = always_fill;
            o.store_data = true;
            o.flush_interval = always_fill ? 97 : 0;
            CacheEngine e(o, store);
            const std::uint64_t space = 8 * MiB;
            std::vector<std::byte> shadow(space + 512 * KiB, std::byte{0});
            store.disk(0, shadow.size());
            testing::Rng rng(policy == WritePolicy::write_back ? 21 : 22);
            for (int i = 0; i < 4000; ++i) {
                const auto off = rng.below(space);
                const auto len = rng.range(1, rng.chance(0.8) ? 40 * KiB : 300 * KiB);
                if (rng.chance(0.5)) {
                    std::vector<std::byte> got(len);
                    e.read(0, off, len, got);
                    REQUIRE(std::equal(got.begin(), got.end(), shadow.begin() + off));
                } else {
                    auto data = pattern(len, rng.next());
                    e.write(0, off, len, data);
                    std::copy(data.begin(), data.end(), shadow.begin() + off);
                }
            }
            e.check_invariants();
            e.flush();
            CHECK(e.flush() == 0);
            auto& disk = store.disk(0, shadow.size());
            CHECK(std::equal(shadow.begin(), shadow.end(), disk.begin()));
        }
    }
}

TEST_CASE("file-backed store round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "vbcache_engine_test";
    std::filesystem::remove_all(dir);
    {
        FileStore store(dir);
        auto o = opts(MiB);
        o.store_data = true;
        CacheEngine e(o, store);
        auto data = pattern(100 * KiB, 5);
        e.write(3, 7 * KiB, data.size(), data);
        CHECK(e.flush(3) > 0);
        std::vector<std::byte> back(data.size());
        store.read(3, 7 * KiB, back.size(), back);
        CHECK(back == data);
        std::vector<std::byte> zeros(4096);
        store.read(3, 64 * MiB, zeros.size(), zeros);  // past EOF
        CHECK(std::all_of(zeros.begin(), zeros.end(), [](std::byte b) { return b == std::byte{0}; }));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("backend failures") {
    SUBCASE("failed fetch installs nothing for that block") {
        testing::MemStore store(false);
        CacheEngine e(opts(MiB, BlockSizeConfig{32 * KiB, 64 * KiB}), store);
        store.fail_if = [](const auto& c) { return !c.write && c.offset == 64 * KiB; };
        CHECK_THROWS_AS(e.read(0, 0, 128 * KiB - 1), BackendError);
        const auto snap = e.contents_snapshot();
        CHECK(std::none_of(snap.begin(), snap.end(), [](const auto& b) { return b.source_offset == 64 * KiB; }));
        e.check_invariants();
        store.fail_if = nullptr;
        CHECK(e.read(0, 0, 128 * KiB - 1).bytes_from_cache == 64 * KiB);
        e.check_invariants();
    }
    SUBCASE("write-through failure leaves the cache untouched") {
        testing::MemStore store(false);
        auto o = opts(MiB);
        o.policy = WritePolicy::write_through;
        CacheEngine e(o, store);
        store.fail_if = [](const auto& c) { return c.write; };
        CHECK_THROWS_AS(e.write(0, 0, 4 * KiB), BackendError);
        CHECK(e.resident_blocks() == 0);
    }
    SUBCASE("write-back failure during eviction is counted and the block still goes") {
        testing::MemStore store(false);
        CacheEngine e(opts(256 * KiB, BlockSizeConfig{256 * KiB}), store);
        e.write(0, 0, 4 * KiB);
        store.fail_if = [](const auto& c) { return c.write; };
        e.read(0, 10 * MiB, 4 * KiB);
        CHECK(e.stats().writeback_errors == 1);
        CHECK(e.resident_blocks() == 1);
        CHECK(e.contents_snapshot()[0].source_offset == 10 * MiB);
        e.check_invariants();
    }
}

TEST_CASE("flush, periodic flush and invalidate") {
    NullStore store;
    auto o = opts(2 * MiB);
    o.flush_interval = 10;
    CacheEngine e(o, store);
    for (int i = 0; i < 9; ++i)
        e.write(i % 2, i * MiB, 8 * KiB);
    CHECK(store.write_bytes() == 0);
    e.write(1, 50 * MiB, 8 * KiB);  // 10th request triggers the flush
    CHECK(e.stats().periodic_flushes == 1);
    CHECK(store.write_bytes() > 0);
    for (const auto& b : e.contents_snapshot())
        CHECK_FALSE(b.dirty);

    e.write(0, 0, 8 * KiB);
    e.write(1, 0, 8 * KiB);
    const auto before = store.write_bytes();
    e.invalidate(1);
    CHECK(store.write_bytes() == before + 32 * KiB);
    for (const auto& b : e.contents_snapshot())
        CHECK(b.dev == 0);
    e.check_invariants();
    CHECK(e.flush() == 32 * KiB);
    CHECK(e.flush() == 0);

    // Freed extents are reusable.
    for (int i = 0; i < 64; ++i)
        e.read(1, i * MiB, 200 * KiB);
    e.check_invariants();
}
