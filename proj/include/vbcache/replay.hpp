#pragma once

// Trace replay driver shared by the CLI and the acceptance suite: sizes one
// cache per device (absolute or as a fraction of that device's working set),
// replays events in trace order and folds the metrics into a report.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbcache/block_size_config.hpp"
#include "vbcache/engine.hpp"
#include "vbcache/metrics.hpp"
#include "vbcache/trace.hpp"

namespace vbcache {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::vector<std::string> traces;
    TraceFormat format = TraceFormat::msr;
    std::vector<std::string> devices;  // empty = all
    BlockSizeConfig sizes{32 * KiB, 64 * KiB, 128 * KiB, 256 * KiB};
    std::optional<std::uint64_t> cache_bytes;  // per device
    std::optional<double> wss_ratio;           // per device, of that device's WSS
    /// Step used for WSS; 0 = smallest configured block size.
    std::uint64_t wss_granularity = 0;
    WritePolicy policy = WritePolicy::write_back;
    std::uint64_t max_events = 0;
    std::uint64_t seed = 1;
    std::string backing = "null";  // "null" or a directory for file-backed stores
    std::string output;             // empty = stdout
    bool strict_range = false;
    bool always_fill = false;
    std::uint64_t flush_interval = 0;
    bool final_flush = false;
    std::uint64_t epoch_interval = 0;
    std::uint32_t jobs = 0;  // 0 = one worker per device
    bool skip_malformed = false;
    std::uint64_t alibaba_offset_unit = 1;
    bool timing = false;

    /// Throws ConfigError. Defaults the sizing mode to a 10% WSS ratio when
    /// neither mode is set.
    void validate();
    double effective_wss_ratio() const { return wss_ratio.value_or(0.1); }
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Overlays keys present in `j` onto `cfg`. Unknown keys raise ConfigError.
void apply_json(RunConfig& cfg, const nlohmann::json& j);

/// Per-device cache bytes, keyed by device name.
using CapacityPlan = std::map<std::string, std::uint64_t>;

/// ratio x WSS(granularity) rounded down to whole groups, at least one group.
std::uint64_t size_cache(std::uint64_t wss_bytes, double ratio, std::uint64_t group_size);

/// One capacity per device for comparing configurations on equal footing:
/// ratio x WSS at `granularity`, rounded down to `group_size` (at least one
/// group). With `fixed_bytes` set every device gets that instead.
CapacityPlan plan_capacity(const Trace& trace, double ratio, std::uint64_t granularity, std::uint64_t group_size,
                           std::optional<std::uint64_t> fixed_bytes = std::nullopt);

/// Replays `trace`. With a plan, per-device capacities come from it instead of
/// the config's sizing mode. BackendError propagates.
ReplayReport replay(const Trace& trace, const RunConfig& cfg, const CapacityPlan* plan = nullptr);

/// Loads the config's traces with its format, filter and limits.
Trace load_run_trace(const RunConfig& cfg);

/// Deterministic payload for data-carrying replays.
void fill_payload(std::span<std::byte> buf, DeviceId dev, std::uint64_t offset, std::uint64_t seed);

}  // namespace vbcache
