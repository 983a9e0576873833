#include "vbcache/replay.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <thread>

#include "vbcache/backing_store.hpp"

namespace vbcache {

void RunConfig::validate() {
    if (cache_bytes && wss_ratio)
        throw ConfigError("choose exactly one cache sizing mode: --cache-bytes or --wss-ratio");
    if (!cache_bytes && !wss_ratio)
        wss_ratio = 0.1;
    if (wss_ratio && !(*wss_ratio > 0 && *wss_ratio <= 1))
        throw ConfigError("--wss-ratio must be in (0, 1]");
    if (cache_bytes && *cache_bytes < sizes.group_size())
        throw ConfigError("--cache-bytes is smaller than one group (" + format_byte_size(sizes.group_size()) + ")");
    if (wss_granularity != 0 && !is_power_of_two(wss_granularity))
        throw ConfigError("--wss-granularity must be a power of two");
    if (alibaba_offset_unit == 0)
        throw ConfigError("--alibaba-offset-unit must be > 0");
}

nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["traces"] = c.traces;
    j["format"] = to_string(c.format);
    j["devices"] = c.devices;
    j["block_sizes"] = c.sizes.to_string();
    if (c.cache_bytes)
        j["cache_bytes"] = *c.cache_bytes;
    else
        j["wss_ratio"] = c.effective_wss_ratio();
    j["wss_granularity"] = c.wss_granularity ? c.wss_granularity : c.sizes.smallest();
    j["policy"] = to_string(c.policy);
    j["max_events"] = c.max_events;
    j["seed"] = c.seed;
    j["backing"] = c.backing;
    j["strict_range"] = c.strict_range;
    j["always_fill"] = c.always_fill;
    j["flush_interval"] = c.flush_interval;
    j["final_flush"] = c.final_flush;
    j["epoch_interval"] = c.epoch_interval;
    j["skip_malformed"] = c.skip_malformed;
    j["alibaba_offset_unit"] = c.alibaba_offset_unit;
    return j;
}

namespace {

std::uint64_t json_bytes(const nlohmann::json& v) {
    if (v.is_string())
        return parse_byte_size(v.get<std::string>());
    return v.get<std::uint64_t>();
}

WritePolicy parse_policy(const std::string& s) {
    try {
        return parse_write_policy(s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

void apply_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("config file must hold a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            const auto& v = it.value();
            if (k == "traces")
                c.traces = v.is_string() ? std::vector<std::string>{v.get<std::string>()} : v.get<std::vector<std::string>>();
            else if (k == "format")
                c.format = parse_trace_format(v.get<std::string>());
            else if (k == "devices")
                c.devices = v.get<std::vector<std::string>>();
            else if (k == "block_sizes")
                c.sizes = v.is_string() ? parse_block_sizes(v.get<std::string>())
                                        : BlockSizeConfig(v.get<std::vector<std::uint64_t>>());
            else if (k == "cache_bytes")
                c.cache_bytes = json_bytes(v);
            else if (k == "wss_ratio")
                c.wss_ratio = v.get<double>();
            else if (k == "wss_granularity")
                c.wss_granularity = json_bytes(v);
            else if (k == "policy")
                c.policy = parse_policy(v.get<std::string>());
            else if (k == "max_events")
                c.max_events = v.get<std::uint64_t>();
            else if (k == "seed")
                c.seed = v.get<std::uint64_t>();
            else if (k == "backing")
                c.backing = v.get<std::string>();
            else if (k == "output")
                c.output = v.get<std::string>();
            else if (k == "strict_range")
                c.strict_range = v.get<bool>();
            else if (k == "always_fill")
                c.always_fill = v.get<bool>();
            else if (k == "flush_interval")
                c.flush_interval = v.get<std::uint64_t>();
            else if (k == "final_flush")
                c.final_flush = v.get<bool>();
            else if (k == "epoch_interval")
                c.epoch_interval = v.get<std::uint64_t>();
            else if (k == "jobs")
                c.jobs = v.get<std::uint32_t>();
            else if (k == "skip_malformed")
                c.skip_malformed = v.get<bool>();
            else if (k == "alibaba_offset_unit")
                c.alibaba_offset_unit = v.get<std::uint64_t>();
            else if (k == "timing")
                c.timing = v.get<bool>();
            else
                throw ConfigError("unknown config key '" + k + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    }
}

std::uint64_t size_cache(std::uint64_t wss_bytes, double ratio, std::uint64_t group_size) {
    const auto target = static_cast<std::uint64_t>(std::floor(static_cast<long double>(wss_bytes) * ratio));
    return std::max<std::uint64_t>(1, target / group_size) * group_size;
}

void fill_payload(std::span<std::byte> buf, DeviceId dev, std::uint64_t offset, std::uint64_t seed) {
    std::uint64_t x = (offset ^ (std::uint64_t{dev} << 48)) * 0x9E3779B97F4A7C15ull + seed;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        if (i % 8 == 0) {
            x ^= x >> 31;
            x *= 0xBF58476D1CE4E5B9ull;
            x ^= x >> 27;
        }
        buf[i] = static_cast<std::byte>(x >> (8 * (i % 8)));
    }
}

CapacityPlan plan_capacity(const Trace& trace, double ratio, std::uint64_t granularity, std::uint64_t group_size,
                           std::optional<std::uint64_t> fixed_bytes) {
    std::vector<std::vector<IoEvent>> per_dev(trace.devices.size());
    for (const auto& e : trace.events)
        per_dev[e.device].push_back(e);
    CapacityPlan plan;
    for (DeviceId d = 0; d < trace.devices.size(); ++d) {
        const std::uint64_t bytes =
            fixed_bytes ? *fixed_bytes : size_cache(working_set_size(per_dev[d], granularity), ratio, group_size);
        if (bytes < group_size)
            throw ConfigError("cache capacity for " + trace.devices[d] + " is below one group (" +
                              format_byte_size(group_size) + ")");
        plan[trace.devices[d]] = bytes;
    }
    return plan;
}

Trace load_run_trace(const RunConfig& cfg) {
    TraceLoadOptions opt;
    opt.format = cfg.format;
    opt.devices = cfg.devices;
    opt.skip_malformed = cfg.skip_malformed;
    opt.max_events = cfg.max_events;
    opt.alibaba_offset_unit = cfg.alibaba_offset_unit;
    std::vector<std::filesystem::path> paths(cfg.traces.begin(), cfg.traces.end());
    for (const auto& p : paths)
        if (!std::filesystem::is_regular_file(p))
            throw ConfigError("trace file not found: " + p.string());
    return load_traces(paths, opt);
}

namespace {

DeviceReport replay_device(const std::string& name, DeviceId dev, const std::vector<IoEvent>& events,
                           const RunConfig& cfg, std::uint64_t capacity, std::uint64_t wss) {
    EngineOptions eo;
    eo.sizes = cfg.sizes;
    eo.capacity = capacity;
    eo.policy = cfg.policy;
    eo.range_mode = cfg.strict_range ? RangeMode::strict : RangeMode::extended;
    eo.always_fill = cfg.always_fill;
    eo.flush_interval = cfg.flush_interval;

    NullStore null_store;
    std::unique_ptr<FileStore> file_store;
    BackingStore* store = &null_store;
    if (cfg.backing != "null") {
        file_store = std::make_unique<FileStore>(std::filesystem::path(cfg.backing) / name);
        store = file_store.get();
        eo.store_data = true;
    }

    CacheEngine engine(eo, *store);
    MetricsCollector metrics(cfg.epoch_interval);
    engine.set_observer(&metrics);
    std::vector<std::byte> buf;
    for (const auto& e : events) {
        if (eo.store_data)
            buf.resize(e.length);
        if (e.op == OpKind::read) {
            metrics.record(e, engine.read(dev, e.offset, e.length, buf), engine);
        } else {
            if (eo.store_data)
                fill_payload(buf, dev, e.offset, cfg.seed + e.timestamp_ns);
            metrics.record(e, engine.write(dev, e.offset, e.length, buf), engine);
        }
    }
    if (cfg.final_flush)
        engine.flush();
    return metrics.finish(name, engine, wss);
}

}  // namespace

ReplayReport replay(const Trace& trace, const RunConfig& cfg_in, const CapacityPlan* plan) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    const auto started = std::chrono::steady_clock::now();

    // Devices in name order so reports do not depend on trace interleaving.
    std::vector<DeviceId> order(trace.devices.size());
    for (DeviceId d = 0; d < order.size(); ++d)
        order[d] = d;
    std::sort(order.begin(), order.end(),
              [&](DeviceId a, DeviceId b) { return trace.devices[a] < trace.devices[b]; });

    std::vector<std::vector<IoEvent>> per_dev(trace.devices.size());
    for (const auto& e : trace.events)
        per_dev[e.device].push_back(e);

    const std::uint64_t granularity = cfg.wss_granularity ? cfg.wss_granularity : cfg.sizes.smallest();
    std::vector<DeviceReport> reports(order.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= order.size())
                return;
            try {
                const DeviceId dev = order[i];
                const std::string& name = trace.devices[dev];
                const std::uint64_t wss = working_set_size(per_dev[dev], granularity);
                std::uint64_t capacity = 0;
                if (plan) {
                    auto it = plan->find(name);
                    if (it == plan->end())
                        throw ConfigError("capacity plan has no entry for device " + name);
                    capacity = it->second;
                } else if (cfg.cache_bytes) {
                    capacity = *cfg.cache_bytes;
                } else {
                    capacity = size_cache(wss, cfg.effective_wss_ratio(), cfg.sizes.group_size());
                }
                reports[i] = replay_device(name, dev, per_dev[dev], cfg, capacity, wss);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure)
                    failure = std::current_exception();
                next = order.size();
            }
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min<std::size_t>(cfg.jobs ? cfg.jobs : order.size(), order.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (failure)
        std::rethrow_exception(failure);

    ReplayReport report;
    report.config = to_json(cfg);
    report.trace_lines = trace.lines;
    report.skipped_lines = trace.skipped;
    report.devices = std::move(reports);
    report.total = aggregate(report.devices);
    if (cfg.timing) {
        const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - started;
        report.timing["wall_seconds"] = wall.count();
    }
    return report;
}

}  // namespace vbcache
