#pragma once

// Replay metrics: hit ratios, core/cache traffic, modeled metadata memory and
// request-size vs. block-size adaptiveness. Reports serialize to JSON (schema
// in docs/report-schema.md) and flat CSV.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vbcache/counters.hpp"
#include "vbcache/engine.hpp"
#include "vbcache/trace.hpp"

namespace vbcache {

inline constexpr int kReportSchemaVersion = 1;

/// In-memory bookkeeping per resident block: source address, cache address,
/// one index pointer and two LRU pointers.
inline constexpr std::uint64_t kMetadataBytesPerBlock = 40;

/// Sum of count x 40 bytes.
std::uint64_t metadata_memory(std::span<const std::uint64_t> block_counts);
/// A completely full fixed-size cache: capacity / block_size x 40 bytes.
std::uint64_t metadata_memory_full(std::uint64_t capacity, std::uint64_t block_size);

struct HitStats {
    std::uint64_t read_requests = 0;
    std::uint64_t read_full_hits = 0;
    std::uint64_t write_requests = 0;
    std::uint64_t write_full_hits = 0;
    std::uint64_t read_hit_bytes = 0;
    std::uint64_t read_total_bytes = 0;
    std::uint64_t write_hit_bytes = 0;
    std::uint64_t write_total_bytes = 0;

    double read_hit_ratio() const noexcept;
    double write_hit_ratio() const noexcept;
    double read_byte_hit_ratio() const noexcept;
    double write_byte_hit_ratio() const noexcept;
    HitStats& operator+=(const HitStats& o) noexcept;
};

struct SizeAdaptiveness {
    std::uint64_t missed_request_bytes = 0;
    std::uint64_t missed_requests = 0;
    std::uint64_t allocated_bytes = 0;
    std::uint64_t allocated_blocks = 0;
    std::map<std::uint64_t, std::uint64_t> allocations_by_size;

    double avg_missed_request_size() const noexcept;
    double avg_allocated_block_size() const noexcept;
    SizeAdaptiveness& operator+=(const SizeAdaptiveness& o);
};

struct MemoryStats {
    std::uint64_t final_bytes = 0;
    std::uint64_t peak_bytes = 0;
    long double sample_sum = 0;  // one sample per request
    std::uint64_t samples = 0;

    double average_bytes() const noexcept;
    void sample(std::uint64_t bytes) noexcept;
};

struct EpochSample {
    std::uint64_t events = 0;
    HitStats hits;
    VolumeCounters volumes;
    std::uint64_t metadata_bytes = 0;
};

struct DeviceReport {
    std::string device;
    std::uint64_t events = 0;
    std::uint64_t wss_bytes = 0;
    std::uint64_t cache_bytes = 0;
    HitStats hits;
    VolumeCounters volumes;
    SizeAdaptiveness adaptiveness;
    MemoryStats memory;
    EngineStats engine;
    std::uint64_t dirty_bytes_at_end = 0;
    std::map<std::uint64_t, std::uint64_t> resident_blocks_by_size;
    std::vector<EpochSample> epochs;
};

/// Folds per-device reports. Memory figures are summed (devices run side by side).
DeviceReport aggregate(std::span<const DeviceReport> devices);

/// One collector per engine. Attach as the engine's observer, then feed every
/// request outcome through record().
class MetricsCollector final : public CacheObserver {
public:
    explicit MetricsCollector(std::uint64_t epoch_interval = 0) : epoch_interval_(epoch_interval) {}

    void on_install(DeviceId, const BlockRef& block) override;

    void record(const IoEvent& event, const ReadOutcome& outcome, const CacheEngine& engine);
    void record(const IoEvent& event, const WriteOutcome& outcome, const CacheEngine& engine);

    DeviceReport finish(std::string device, const CacheEngine& engine, std::uint64_t wss_bytes) const;

private:
    void after(const CacheEngine& engine);

    std::uint64_t epoch_interval_;
    std::uint64_t events_ = 0;
    HitStats hits_;
    SizeAdaptiveness adapt_;
    MemoryStats memory_;
    std::vector<EpochSample> epochs_;
};

struct ReplayReport {
    nlohmann::ordered_json config;  // echo of the run configuration
    std::uint64_t trace_lines = 0;
    std::uint64_t skipped_lines = 0;
    std::vector<DeviceReport> devices;
    DeviceReport total;
    nlohmann::ordered_json timing;  // wall-clock data; null unless requested
};

nlohmann::ordered_json to_json(const DeviceReport& r);
nlohmann::ordered_json to_json(const ReplayReport& r);
/// Header plus one row per device and a final "total" row.
std::string to_csv(const ReplayReport& r);

/// Numeric leaves of a JSON object as dotted paths, in document order.
std::vector<std::pair<std::string, double>> flatten_metrics(const nlohmann::ordered_json& j);

/// Side-by-side table of every numeric metric under each report's "total"
/// object. The first report is the baseline for deltas and ratios.
struct Comparison {
    std::vector<std::string> labels;
    struct Row {
        std::string metric;
        std::vector<double> values;  // NaN where a report lacks the metric
    };
    std::vector<Row> rows;

    std::string to_text() const;
    std::string to_csv() const;
};

Comparison compare(std::span<const std::pair<std::string, nlohmann::ordered_json>> reports);

}  // namespace vbcache
