// vbcache command-line front end.
//
// Exit status: 0 ok, 1 unexpected failure, 2 configuration error,
// 3 trace parse error, 4 backend I/O error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vbcache/backing_store.hpp"
#include "vbcache/metrics.hpp"
#include "vbcache/replay.hpp"
#include "vbcache/trace.hpp"
#include "vbcache/workload.hpp"

namespace fs = std::filesystem;
using namespace vbcache;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, parse_error = 3, backend_error = 4 };

bool quiet = false;

void log(const std::string& msg) {
    if (!quiet)
        std::cerr << "vbcache: " << msg << '\n';
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write " + path);
    out << text;
}

std::uint64_t bytes_arg(const std::string& s) {
    try {
        return parse_byte_size(s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

// Flags shared by every verb that builds a RunConfig. Values are applied only
// when the flag was given, so they override a --config file.
struct RunFlags {
    std::string config_file;
    std::vector<std::string> traces;
    std::string format, devices, block_sizes, cache_bytes, policy, backing, output, wss_granularity;
    double wss_ratio = 0;
    std::uint64_t max_events = 0, seed = 0, flush_interval = 0, epoch_interval = 0, alibaba_unit = 0;
    std::uint32_t jobs = 0;
    bool strict_range = false, always_fill = false, final_flush = false, skip_malformed = false, timing = false;
    std::map<std::string, CLI::Option*> opts;

    void add(CLI::App& app, bool with_traces) {
        opts["config"] = app.add_option("--config", config_file, "JSON run configuration; flags override it");
        if (with_traces) {
            opts["trace"] = app.add_option("-t,--trace", traces, "trace file (repeatable, .gz accepted)");
            opts["format"] = app.add_option("-f,--format", format, "trace format: msr, alibaba, systor");
            opts["devices"] = app.add_option("--devices", devices, "comma-separated device filter");
            opts["skip"] = app.add_flag("--skip-malformed", skip_malformed, "skip unparsable lines instead of failing");
            opts["unit"] = app.add_option("--alibaba-offset-unit", alibaba_unit, "multiplier for Alibaba offsets");
            opts["max"] = app.add_option("--max-events", max_events, "stop after this many events (0 = all)");
        }
        opts["sizes"] = app.add_option("-b,--block-sizes", block_sizes, "block sizes, e.g. 32K,64K,128K,256K");
        opts["cache"] = app.add_option("--cache-bytes", cache_bytes, "cache capacity per device, e.g. 1G");
        opts["ratio"] = app.add_option("--wss-ratio", wss_ratio, "cache capacity as a fraction of device WSS (default 0.1)");
        opts["gran"] = app.add_option("--wss-granularity", wss_granularity, "WSS step (default: smallest block size)");
        opts["policy"] = app.add_option("-p,--policy", policy, "write-back or write-through");
        opts["seed"] = app.add_option("--seed", seed, "seed for payloads and synthetic workloads");
        opts["backing"] = app.add_option("--backing", backing, "null, or a directory for file-backed devices");
        opts["output"] = app.add_option("-o,--output", output, "report path (default stdout)");
        opts["strict"] = app.add_flag("--strict-range", strict_range, "scan to the last byte of the request only");
        opts["fill"] = app.add_flag("--always-fill", always_fill, "fetch whole blocks on write misses");
        opts["flush"] = app.add_option("--flush-interval", flush_interval, "flush dirty blocks every N requests (0 = off)");
        opts["final"] = app.add_flag("--final-flush", final_flush, "flush dirty blocks after the last event");
        opts["epoch"] = app.add_option("--epoch-interval", epoch_interval, "emit a time-series sample every N events");
        opts["jobs"] = app.add_option("-j,--jobs", jobs, "worker threads (default one per device)");
        opts["timing"] = app.add_flag("--timing", timing, "include wall-clock timing in the report");
    }

    bool given(const char* name) const {
        auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }

    RunConfig build(nlohmann::json* extra = nullptr) const {
        RunConfig cfg;
        if (!config_file.empty()) {
            auto j = read_json_file(config_file);
            if (extra) {
                for (const char* key : {"workload", "events", "configs"}) {
                    if (j.contains(key)) {
                        (*extra)[key] = j[key];
                        j.erase(key);
                    }
                }
            }
            apply_json(cfg, j);
        }
        try {
            if (given("trace"))
                cfg.traces = traces;
            if (given("format"))
                cfg.format = parse_trace_format(format);
            if (given("devices")) {
                cfg.devices.clear();
                std::stringstream ss(devices);
                for (std::string d; std::getline(ss, d, ',');)
                    if (!d.empty())
                        cfg.devices.push_back(d);
            }
            if (given("sizes"))
                cfg.sizes = parse_block_sizes(block_sizes);
            if (given("cache")) {
                cfg.cache_bytes = bytes_arg(cache_bytes);
                if (!given("ratio"))
                    cfg.wss_ratio.reset();
            }
            if (given("ratio")) {
                cfg.wss_ratio = wss_ratio;
                if (!given("cache"))
                    cfg.cache_bytes.reset();
            }
            if (given("gran"))
                cfg.wss_granularity = bytes_arg(wss_granularity);
            if (given("policy"))
                cfg.policy = parse_write_policy(policy);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (given("max"))
            cfg.max_events = max_events;
        if (given("seed"))
            cfg.seed = seed;
        if (given("backing"))
            cfg.backing = backing;
        if (given("output"))
            cfg.output = output;
        if (given("strict"))
            cfg.strict_range = strict_range;
        if (given("fill"))
            cfg.always_fill = always_fill;
        if (given("flush"))
            cfg.flush_interval = flush_interval;
        if (given("final"))
            cfg.final_flush = final_flush;
        if (given("epoch"))
            cfg.epoch_interval = epoch_interval;
        if (given("jobs"))
            cfg.jobs = jobs;
        if (given("skip"))
            cfg.skip_malformed = skip_malformed;
        if (given("unit"))
            cfg.alibaba_offset_unit = alibaba_unit;
        if (given("timing"))
            cfg.timing = timing;
        cfg.validate();
        return cfg;
    }
};

// Synthetic workload source for simulate, generate and sweep.
struct WorkloadFlags {
    std::string file;
    std::uint64_t events = 100000;
    std::uint64_t seed = 0;
    CLI::Option* file_opt = nullptr;
    CLI::Option* events_opt = nullptr;
    CLI::Option* seed_opt = nullptr;

    void add(CLI::App& app, bool required) {
        file_opt = app.add_option("-w,--workload", file, "workload spec (JSON)");
        if (required)
            file_opt->required();
        events_opt = app.add_option("-n,--events", events, "number of requests to generate");
        seed_opt = app.add_option("--workload-seed", seed, "override the workload spec's seed");
    }

    bool given() const { return file_opt->count() > 0; }

    Trace make(const nlohmann::json* embedded = nullptr) const {
        nlohmann::json j;
        fs::path base;
        if (given()) {
            j = read_json_file(file);
            base = fs::path(file).parent_path();
        } else if (embedded && embedded->contains("workload")) {
            j = (*embedded)["workload"];
        } else {
            throw ConfigError("no workload given (--workload)");
        }
        WorkloadSpec spec;
        try {
            spec = workload_from_json(j, base);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (seed_opt->count())
            spec.seed = seed;
        std::uint64_t n = events;
        if (!events_opt->count() && embedded && embedded->contains("events"))
            n = (*embedded)["events"].get<std::uint64_t>();
        if (n == 0)
            throw ConfigError("--events must be > 0");
        return generate(spec, n);
    }
};

std::string report_text(const ReplayReport& r) {
    return to_json(r).dump(2) + "\n";
}

void emit_report(const ReplayReport& r, const RunConfig& cfg, const std::string& csv_path) {
    write_text(cfg.output, report_text(r));
    if (!csv_path.empty())
        write_text(csv_path, to_csv(r));
}

void summarize(const ReplayReport& r, double seconds) {
    std::ostringstream ss;
    ss << "replayed " << r.total.events << " events on " << r.devices.size() << " device(s) in "
       << std::fixed << std::setprecision(2) << seconds << " s; read byte hit ratio "
       << std::setprecision(4) << r.total.hits.read_byte_hit_ratio() << ", backend bytes "
       << r.total.volumes.core_total();
    log(ss.str());
}

ReplayReport timed_replay(const Trace& trace, const RunConfig& cfg, const CapacityPlan* plan = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = replay(trace, cfg, plan);
    summarize(report, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return report;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, sep);)
        if (!part.empty())
            out.push_back(part);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variable-size block cache simulator"};
    app.require_subcommand(1);
    app.add_flag("-q,--quiet", quiet, "suppress progress output");

    // replay
    RunFlags replay_flags;
    std::string replay_csv;
    auto* replay_cmd = app.add_subcommand("replay", "replay block I/O traces through the cache");
    replay_flags.add(*replay_cmd, true);
    replay_cmd->add_option("--csv", replay_csv, "also write a per-device CSV");

    // simulate
    RunFlags sim_flags;
    WorkloadFlags sim_workload;
    std::string sim_csv;
    auto* sim_cmd = app.add_subcommand("simulate", "replay a synthetic workload");
    sim_flags.add(*sim_cmd, false);
    sim_workload.add(*sim_cmd, false);
    sim_cmd->add_option("--csv", sim_csv, "also write a per-device CSV");

    // wss
    std::vector<std::string> wss_traces;
    std::string wss_format = "msr", wss_step = "32K", wss_devices;
    bool wss_skip = false;
    std::uint64_t wss_max = 0, wss_unit = 1;
    auto* wss_cmd = app.add_subcommand("wss", "working-set size of traces");
    wss_cmd->add_option("-t,--trace", wss_traces, "trace file (repeatable)")->required();
    wss_cmd->add_option("-f,--format", wss_format, "trace format: msr, alibaba, systor");
    wss_cmd->add_option("-g,--granularity", wss_step, "alignment step (default 32K)");
    wss_cmd->add_option("--devices", wss_devices, "comma-separated device filter");
    wss_cmd->add_option("--max-events", wss_max, "stop after this many events");
    wss_cmd->add_option("--alibaba-offset-unit", wss_unit, "multiplier for Alibaba offsets");
    wss_cmd->add_flag("--skip-malformed", wss_skip, "skip unparsable lines");

    // sweep
    RunFlags sweep_flags;
    WorkloadFlags sweep_workload;
    std::string sweep_configs = "32K,64K,128K,256K;32K;64K;128K;256K";
    std::string sweep_policies, sweep_csv, sweep_reports;
    auto* sweep_cmd = app.add_subcommand("sweep", "compare block-size configurations on one workload");
    sweep_flags.add(*sweep_cmd, true);
    sweep_workload.add(*sweep_cmd, false);
    sweep_cmd->add_option("--configs", sweep_configs, "block-size sets separated by ';'");
    sweep_cmd->add_option("--policies", sweep_policies, "also sweep policies, e.g. write-back,write-through");
    sweep_cmd->add_option("--csv", sweep_csv, "write the comparison as CSV");
    sweep_cmd->add_option("--reports-dir", sweep_reports, "save each run's JSON report here");

    // generate
    WorkloadFlags gen_workload;
    std::string gen_format = "msr", gen_output;
    auto* gen_cmd = app.add_subcommand("generate", "write a synthetic trace");
    gen_workload.add(*gen_cmd, true);
    gen_cmd->add_option("-f,--format", gen_format, "trace format: msr, alibaba, systor");
    gen_cmd->add_option("-o,--output", gen_output, "trace path (default stdout)");

    // compare
    std::vector<std::string> cmp_reports, cmp_labels;
    std::string cmp_csv, cmp_output;
    auto* cmp_cmd = app.add_subcommand("compare", "tabulate metrics across reports");
    cmp_cmd->add_option("reports", cmp_reports, "JSON reports; the first is the baseline")->required();
    cmp_cmd->add_option("--labels", cmp_labels, "column labels (default: file names)")->delimiter(',');
    cmp_cmd->add_option("-o,--output", cmp_output, "table path (default stdout)");
    cmp_cmd->add_option("--csv", cmp_csv, "also write CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    try {
        if (*replay_cmd) {
            auto cfg = replay_flags.build();
            if (cfg.traces.empty())
                throw ConfigError("replay needs at least one --trace");
            auto trace = load_run_trace(cfg);
            log("loaded " + std::to_string(trace.events.size()) + " events from " + std::to_string(trace.lines) +
                " lines (" + std::to_string(trace.skipped) + " skipped)");
            auto report = timed_replay(trace, cfg);
            emit_report(report, cfg, replay_csv);
        } else if (*sim_cmd) {
            nlohmann::json extra;
            auto cfg = sim_flags.build(&extra);
            auto trace = sim_workload.make(&extra);
            auto report = timed_replay(trace, cfg);
            emit_report(report, cfg, sim_csv);
        } else if (*wss_cmd) {
            TraceLoadOptions opt;
            opt.format = parse_trace_format(wss_format);
            opt.devices = split(wss_devices, ',');
            opt.skip_malformed = wss_skip;
            opt.max_events = wss_max;
            opt.alibaba_offset_unit = wss_unit;
            const std::uint64_t step = bytes_arg(wss_step);
            if (!is_power_of_two(step))
                throw ConfigError("--granularity must be a power of two");
            std::vector<fs::path> paths(wss_traces.begin(), wss_traces.end());
            for (const auto& p : paths)
                if (!fs::is_regular_file(p))
                    throw ConfigError("trace file not found: " + p.string());
            auto trace = load_traces(paths, opt);
            std::vector<std::vector<IoEvent>> per_dev(trace.devices.size());
            for (const auto& e : trace.events)
                per_dev[e.device].push_back(e);
            std::map<std::string, std::uint64_t> by_name;
            for (DeviceId d = 0; d < trace.devices.size(); ++d)
                by_name[trace.devices[d]] = working_set_size(per_dev[d], step);
            nlohmann::ordered_json out;
            out["granularity"] = step;
            out["events"] = trace.events.size();
            nlohmann::ordered_json devs = nlohmann::ordered_json::object();
            std::uint64_t total = 0;
            for (const auto& [name, bytes] : by_name) {
                devs[name] = bytes;
                total += bytes;
            }
            out["devices"] = devs;
            out["total"] = total;
            std::cout << out.dump(2) << '\n';
        } else if (*sweep_cmd) {
            nlohmann::json extra;
            auto base = sweep_flags.build(&extra);
            Trace trace;
            if (sweep_workload.given() || extra.contains("workload")) {
                trace = sweep_workload.make(&extra);
            } else {
                if (base.traces.empty())
                    throw ConfigError("sweep needs --trace or --workload");
                trace = load_run_trace(base);
            }
            std::vector<BlockSizeConfig> configs;
            try {
                if (extra.contains("configs")) {
                    for (const auto& c : extra["configs"])
                        configs.push_back(parse_block_sizes(c.get<std::string>()));
                } else {
                    for (const auto& c : split(sweep_configs, ';'))
                        configs.push_back(parse_block_sizes(c));
                }
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            if (configs.empty())
                throw ConfigError("--configs is empty");
            std::vector<WritePolicy> policies{base.policy};
            if (!sweep_policies.empty()) {
                policies.clear();
                for (const auto& p : split(sweep_policies, ','))
                    policies.push_back(parse_write_policy(p));
            }

            // Every run gets the same per-device capacity: the ratio applies to
            // the WSS at the finest block size of the sweep, rounded down to
            // the largest group size so each configuration can use all of it.
            std::uint64_t finest = configs.front().smallest(), widest = configs.front().group_size();
            for (const auto& c : configs) {
                finest = std::min(finest, c.smallest());
                widest = std::max(widest, c.group_size());
            }
            const std::uint64_t step = base.wss_granularity ? base.wss_granularity : finest;
            const auto plan = plan_capacity(trace, base.effective_wss_ratio(), step, widest, base.cache_bytes);

            std::vector<std::pair<std::string, nlohmann::ordered_json>> results;
            if (!sweep_reports.empty())
                fs::create_directories(sweep_reports);
            for (auto policy : policies) {
                for (const auto& sizes : configs) {
                    RunConfig cfg = base;
                    cfg.sizes = sizes;
                    cfg.policy = policy;
                    std::string label = sizes.count() == 1 ? "fixed-" + sizes.to_string() : sizes.to_string();
                    if (policies.size() > 1)
                        label += std::string("/") + to_string(policy);
                    log("run " + label);
                    auto report = timed_replay(trace, cfg, &plan);
                    auto j = to_json(report);
                    if (!sweep_reports.empty()) {
                        std::string file = label;
                        for (char& ch : file)
                            if (ch == ',' || ch == '/')
                                ch = '_';
                        write_text((fs::path(sweep_reports) / (file + ".json")).string(), j.dump(2) + "\n");
                    }
                    results.emplace_back(label, std::move(j));
                }
            }
            auto table = compare(results);
            write_text(base.output, table.to_text());
            if (!sweep_csv.empty())
                write_text(sweep_csv, table.to_csv());
        } else if (*gen_cmd) {
            const auto format = parse_trace_format(gen_format);
            auto trace = gen_workload.make();
            std::ostringstream out;
            write_trace(trace, format, out);
            write_text(gen_output, out.str());
            log("wrote " + std::to_string(trace.events.size()) + " events");
        } else if (*cmp_cmd) {
            if (!cmp_labels.empty() && cmp_labels.size() != cmp_reports.size())
                throw ConfigError("--labels needs one label per report");
            std::vector<std::pair<std::string, nlohmann::ordered_json>> reports;
            for (std::size_t i = 0; i < cmp_reports.size(); ++i) {
                std::ifstream in(cmp_reports[i]);
                if (!in)
                    throw ConfigError("cannot open " + cmp_reports[i]);
                nlohmann::ordered_json j;
                try {
                    j = nlohmann::ordered_json::parse(in);
                } catch (const nlohmann::json::exception& e) {
                    throw ConfigError(cmp_reports[i] + ": " + e.what());
                }
                if (!j.contains("total"))
                    throw ConfigError(cmp_reports[i] + " is not a replay report");
                const std::string label =
                    cmp_labels.empty() ? fs::path(cmp_reports[i]).stem().string() : cmp_labels[i];
                reports.emplace_back(label, std::move(j));
            }
            auto table = compare(reports);
            write_text(cmp_output, table.to_text());
            if (!cmp_csv.empty())
                write_text(cmp_csv, table.to_csv());
        }
    } catch (const ConfigError& e) {
        std::cerr << "vbcache: config error: " << e.what() << '\n';
        return config_error;
    } catch (const ParseError& e) {
        std::cerr << "vbcache: parse error: " << e.what() << '\n';
        return parse_error;
    } catch (const BackendError& e) {
        std::cerr << "vbcache: backend error: " << e.what() << '\n';
        return backend_error;
    } catch (const std::invalid_argument& e) {
        std::cerr << "vbcache: config error: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "vbcache: error: " << e.what() << '\n';
        return failure;
    }
    return ok;
}
