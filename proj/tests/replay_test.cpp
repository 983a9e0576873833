#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracle/oracle_cache.hpp"
#include "vbcache/replay.hpp"

using namespace vbcache;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures{VBCACHE_FIXTURE_DIR};

Trace msr_fixture() {
    TraceLoadOptions opt;
    return load_trace(fixtures / "msr_sample.csv", opt);
}

RunConfig fixture_config() {
    RunConfig cfg;
    cfg.traces = {"msr_sample.csv"};
    cfg.wss_ratio = 0.1;
    return cfg;
}

std::string dump(const ReplayReport& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace

TEST_CASE("msr fixture report has every field and holds its invariants") {
    auto trace = msr_fixture();
    auto report = replay(trace, fixture_config());
    REQUIRE(report.devices.size() == 2);
    CHECK(report.devices[0].device == "proj_1");
    CHECK(report.devices[1].device == "usr_0");
    CHECK(report.total.events == 1000);

    for (const auto& d : report.devices) {
        CAPTURE(d.device);
        CHECK(d.cache_bytes % (256 * KiB) == 0);
        CHECK(d.cache_bytes >= 256 * KiB);
        CHECK(d.cache_bytes <= d.wss_bytes / 10 + 256 * KiB);
        CHECK(d.hits.read_hit_bytes <= d.hits.read_total_bytes);
        CHECK(d.hits.write_hit_bytes <= d.hits.write_total_bytes);
        CHECK(d.hits.read_full_hits <= d.hits.read_requests);
        std::uint64_t blocks = 0;
        for (const auto& [size, n] : d.adaptiveness.allocations_by_size)
            blocks += n;
        CHECK(blocks == d.adaptiveness.allocated_blocks);
        CHECK(d.memory.peak_bytes <= d.cache_bytes / (32 * KiB) * 40);
    }

    auto j = to_json(report);
    CHECK(j["schema_version"] == kReportSchemaVersion);
    CHECK(j["config"]["block_sizes"] == "32K,64K,128K,256K");
    CHECK(j["config"]["wss_ratio"] == 0.1);
    for (const char* key : {"events", "wss_bytes", "cache_bytes", "hits", "volumes", "metadata_memory", "adaptiveness",
                            "resident_blocks_by_size", "engine"})
        CHECK(j["total"].contains(key));
    for (const char* key : {"read_hit_ratio", "read_byte_hit_ratio", "write_hit_ratio", "write_byte_hit_ratio"})
        CHECK(j["total"]["hits"].contains(key));
    for (const char* key : {"avg_missed_request_size", "avg_allocated_block_size", "allocations_by_size"})
        CHECK(j["total"]["adaptiveness"].contains(key));
}

TEST_CASE("msr fixture report matches the golden file") {
    auto report = replay(msr_fixture(), fixture_config());
    const auto text = dump(report);
    const auto golden = fixtures / "msr_sample_report.json";
    if (std::getenv("VBCACHE_UPDATE_GOLDEN")) {
        std::ofstream(golden, std::ios::binary) << text;
        MESSAGE("golden file rewritten");
    }
    std::ifstream in(golden, std::ios::binary);
    REQUIRE(in);
    std::stringstream want;
    want << in.rdbuf();
    CHECK(text == want.str());
}

TEST_CASE("replay is deterministic across runs and worker counts") {
    auto trace = msr_fixture();
    auto cfg = fixture_config();
    const auto a = dump(replay(trace, cfg));
    const auto b = dump(replay(trace, cfg));
    cfg.jobs = 1;
    const auto serial = dump(replay(trace, cfg));
    CHECK(a == b);
    CHECK(a == serial);
}

TEST_CASE("single 64K size agrees with the oracle on the fixture") {
    auto trace = msr_fixture();
    auto cfg = fixture_config();
    cfg.sizes = BlockSizeConfig{64 * KiB};
    auto report = replay(trace, cfg);
    for (const auto& d : report.devices) {
        CAPTURE(d.device);
        DeviceId dev = 0;
        while (trace.devices[dev] != d.device)
            ++dev;
        oracle::OracleCache oc({64 * KiB, d.cache_bytes / (64 * KiB), true, false, false});
        std::uint64_t read_hits = 0, write_hits = 0, read_hit_bytes = 0, write_hit_bytes = 0;
        for (const auto& e : trace.events) {
            if (e.device != dev)
                continue;
            const bool w = e.op == OpKind::write;
            auto r = oc.access(w, e.offset, e.length);
            (w ? write_hits : read_hits) += r.full_hit;
            (w ? write_hit_bytes : read_hit_bytes) += r.hit_bytes;
        }
        CHECK(d.hits.read_full_hits == read_hits);
        CHECK(d.hits.write_full_hits == write_hits);
        CHECK(d.hits.read_hit_bytes == read_hit_bytes);
        CHECK(d.hits.write_hit_bytes == write_hit_bytes);
        CHECK(d.volumes.read_from_core == oc.volumes().read_from_core);
        CHECK(d.volumes.write_to_core == oc.volumes().write_to_core);
        CHECK(d.volumes.read_from_cache == oc.volumes().read_from_cache);
        CHECK(d.volumes.write_to_cache == oc.volumes().write_to_cache);
    }
}

TEST_CASE("file-backed replay reports the same metrics as the null store") {
    auto trace = msr_fixture();
    auto cfg = fixture_config();
    cfg.max_events = 0;
    const auto dir = fs::temp_directory_path() / "vbcache_replay_test";
    fs::remove_all(dir);
    auto null_report = to_json(replay(trace, cfg));
    cfg.backing = dir.string();
    auto file_report = to_json(replay(trace, cfg));
    null_report.erase("config");
    file_report.erase("config");
    CHECK(null_report == file_report);
    CHECK(fs::exists(dir / "proj_1"));
    fs::remove_all(dir);
}

TEST_CASE("capacity plan and sizing modes") {
    CHECK(size_cache(10 * MiB, 0.1, 256 * KiB) == 1 * MiB);
    CHECK(size_cache(100 * KiB, 0.1, 256 * KiB) == 256 * KiB);
    CHECK(size_cache(0, 0.1, 256 * KiB) == 256 * KiB);

    auto trace = msr_fixture();
    auto cfg = fixture_config();
    CapacityPlan plan{{"proj_1", 1 * MiB}, {"usr_0", 2 * MiB}};
    auto r = replay(trace, cfg, &plan);
    CHECK(r.devices[0].cache_bytes == 1 * MiB);
    CHECK(r.devices[1].cache_bytes == 2 * MiB);
    CapacityPlan partial{{"proj_1", 1 * MiB}};
    CHECK_THROWS_AS(replay(trace, cfg, &partial), ConfigError);

    RunConfig both;
    both.cache_bytes = 1 * MiB;
    both.wss_ratio = 0.1;
    CHECK_THROWS_AS(both.validate(), ConfigError);
    RunConfig tiny;
    tiny.cache_bytes = 64 * KiB;
    CHECK_THROWS_AS(tiny.validate(), ConfigError);
    RunConfig none;
    none.validate();
    CHECK(none.wss_ratio == 0.1);
}

TEST_CASE("config JSON round trip and unknown keys") {
    RunConfig cfg;
    apply_json(cfg, nlohmann::json::parse(R"({"block_sizes": "64K,256K", "cache_bytes": "4M", "policy": "write-through",
                                              "strict_range": true, "flush_interval": 10})"));
    CHECK(cfg.sizes == BlockSizeConfig{64 * KiB, 256 * KiB});
    CHECK(cfg.cache_bytes == 4 * MiB);
    CHECK(cfg.policy == WritePolicy::write_through);
    CHECK(cfg.strict_range);
    CHECK(cfg.flush_interval == 10);
    RunConfig back;
    apply_json(back, to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS_AS(apply_json(cfg, nlohmann::json::parse(R"({"blocksizes": "32K"})")), ConfigError);
    CHECK_THROWS_AS(apply_json(cfg, nlohmann::json::parse(R"({"policy": "sometimes"})")), ConfigError);
}
