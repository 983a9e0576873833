#include "vbcache/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include "vbcache/block_size_config.hpp"

namespace vbcache {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json size_map_json(const std::map<std::uint64_t, std::uint64_t>& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [size, n] : m)
        j[format_byte_size(size)] = n;
    return j;
}

nlohmann::ordered_json hits_json(const HitStats& h) {
    nlohmann::ordered_json j;
    j["read_requests"] = h.read_requests;
    j["read_full_hits"] = h.read_full_hits;
    j["read_hit_ratio"] = h.read_hit_ratio();
    j["read_hit_bytes"] = h.read_hit_bytes;
    j["read_total_bytes"] = h.read_total_bytes;
    j["read_byte_hit_ratio"] = h.read_byte_hit_ratio();
    j["write_requests"] = h.write_requests;
    j["write_full_hits"] = h.write_full_hits;
    j["write_hit_ratio"] = h.write_hit_ratio();
    j["write_hit_bytes"] = h.write_hit_bytes;
    j["write_total_bytes"] = h.write_total_bytes;
    j["write_byte_hit_ratio"] = h.write_byte_hit_ratio();
    return j;
}

nlohmann::ordered_json volumes_json(const VolumeCounters& v) {
    nlohmann::ordered_json j;
    j["write_to_core"] = v.write_to_core;
    j["read_from_core"] = v.read_from_core;
    j["write_to_cache"] = v.write_to_cache;
    j["read_from_cache"] = v.read_from_cache;
    j["core_total"] = v.core_total();
    j["cache_total"] = v.cache_total();
    return j;
}

}  // namespace

std::uint64_t metadata_memory(std::span<const std::uint64_t> block_counts) {
    std::uint64_t total = 0;
    for (auto n : block_counts)
        total += n * kMetadataBytesPerBlock;
    return total;
}

std::uint64_t metadata_memory_full(std::uint64_t capacity, std::uint64_t block_size) {
    return capacity / block_size * kMetadataBytesPerBlock;
}

double HitStats::read_hit_ratio() const noexcept { return ratio(read_full_hits, read_requests); }
double HitStats::write_hit_ratio() const noexcept { return ratio(write_full_hits, write_requests); }
double HitStats::read_byte_hit_ratio() const noexcept { return ratio(read_hit_bytes, read_total_bytes); }
double HitStats::write_byte_hit_ratio() const noexcept { return ratio(write_hit_bytes, write_total_bytes); }

HitStats& HitStats::operator+=(const HitStats& o) noexcept {
    read_requests += o.read_requests;
    read_full_hits += o.read_full_hits;
    write_requests += o.write_requests;
    write_full_hits += o.write_full_hits;
    read_hit_bytes += o.read_hit_bytes;
    read_total_bytes += o.read_total_bytes;
    write_hit_bytes += o.write_hit_bytes;
    write_total_bytes += o.write_total_bytes;
    return *this;
}

double SizeAdaptiveness::avg_missed_request_size() const noexcept {
    return missed_requests == 0 ? 0.0 : static_cast<double>(missed_request_bytes) / static_cast<double>(missed_requests);
}

double SizeAdaptiveness::avg_allocated_block_size() const noexcept {
    return allocated_blocks == 0 ? 0.0 : static_cast<double>(allocated_bytes) / static_cast<double>(allocated_blocks);
}

SizeAdaptiveness& SizeAdaptiveness::operator+=(const SizeAdaptiveness& o) {
    missed_request_bytes += o.missed_request_bytes;
    missed_requests += o.missed_requests;
    allocated_bytes += o.allocated_bytes;
    allocated_blocks += o.allocated_blocks;
    for (const auto& [size, n] : o.allocations_by_size)
        allocations_by_size[size] += n;
    return *this;
}

double MemoryStats::average_bytes() const noexcept {
    return samples == 0 ? 0.0 : static_cast<double>(sample_sum / samples);
}

void MemoryStats::sample(std::uint64_t bytes) noexcept {
    final_bytes = bytes;
    peak_bytes = std::max(peak_bytes, bytes);
    sample_sum += bytes;
    ++samples;
}

DeviceReport aggregate(std::span<const DeviceReport> devices) {
    DeviceReport t;
    t.device = "total";
    long double avg_sum = 0;
    for (const auto& d : devices) {
        t.events += d.events;
        t.wss_bytes += d.wss_bytes;
        t.cache_bytes += d.cache_bytes;
        t.hits += d.hits;
        t.volumes += d.volumes;
        t.adaptiveness += d.adaptiveness;
        t.memory.final_bytes += d.memory.final_bytes;
        t.memory.peak_bytes += d.memory.peak_bytes;
        avg_sum += d.memory.average_bytes();
        t.engine.block_evictions += d.engine.block_evictions;
        t.engine.group_evictions += d.engine.group_evictions;
        t.engine.blocks_evicted_in_groups += d.engine.blocks_evicted_in_groups;
        t.engine.writeback_errors += d.engine.writeback_errors;
        t.engine.periodic_flushes += d.engine.periodic_flushes;
        t.engine.requests += d.engine.requests;
        t.engine.volumes += d.engine.volumes;
        t.dirty_bytes_at_end += d.dirty_bytes_at_end;
        for (const auto& [size, n] : d.resident_blocks_by_size)
            t.resident_blocks_by_size[size] += n;
    }
    t.memory.sample_sum = avg_sum;
    t.memory.samples = devices.empty() ? 0 : 1;
    return t;
}

void MetricsCollector::on_install(DeviceId, const BlockRef& block) {
    adapt_.allocated_bytes += block.size;
    ++adapt_.allocated_blocks;
    ++adapt_.allocations_by_size[block.size];
}

void MetricsCollector::record(const IoEvent& event, const ReadOutcome& outcome, const CacheEngine& engine) {
    ++hits_.read_requests;
    hits_.read_total_bytes += event.length;
    hits_.read_hit_bytes += outcome.bytes_from_cache;
    if (outcome.full_hit()) {
        ++hits_.read_full_hits;
    } else {
        ++adapt_.missed_requests;
        adapt_.missed_request_bytes += event.length;
    }
    after(engine);
}

void MetricsCollector::record(const IoEvent& event, const WriteOutcome& outcome, const CacheEngine& engine) {
    ++hits_.write_requests;
    hits_.write_total_bytes += event.length;
    hits_.write_hit_bytes += outcome.hit_bytes;
    if (outcome.full_hit()) {
        ++hits_.write_full_hits;
    } else {
        ++adapt_.missed_requests;
        adapt_.missed_request_bytes += event.length;
    }
    after(engine);
}

void MetricsCollector::after(const CacheEngine& engine) {
    ++events_;
    memory_.sample(engine.resident_blocks() * kMetadataBytesPerBlock);
    if (epoch_interval_ != 0 && events_ % epoch_interval_ == 0)
        epochs_.push_back({events_, hits_, engine.stats().volumes, memory_.final_bytes});
}

DeviceReport MetricsCollector::finish(std::string device, const CacheEngine& engine,
                                      std::uint64_t wss_bytes) const {
    DeviceReport r;
    r.device = std::move(device);
    r.events = events_;
    r.wss_bytes = wss_bytes;
    r.cache_bytes = engine.capacity();
    r.hits = hits_;
    r.volumes = engine.stats().volumes;
    r.adaptiveness = adapt_;
    r.memory = memory_;
    r.engine = engine.stats();
    r.epochs = epochs_;
    for (const auto& b : engine.contents_snapshot())
        if (b.dirty)
            r.dirty_bytes_at_end += b.size;
    const auto& sizes = engine.options().sizes;
    for (std::size_t i = 0; i < sizes.count(); ++i)
        r.resident_blocks_by_size[sizes[i]] = engine.resident_blocks_per_size()[i];
    return r;
}

nlohmann::ordered_json to_json(const DeviceReport& r) {
    nlohmann::ordered_json j;
    j["device"] = r.device;
    j["events"] = r.events;
    j["wss_bytes"] = r.wss_bytes;
    j["cache_bytes"] = r.cache_bytes;
    j["hits"] = hits_json(r.hits);
    j["volumes"] = volumes_json(r.volumes);
    nlohmann::ordered_json mem;
    mem["bytes_per_block"] = kMetadataBytesPerBlock;
    mem["final_bytes"] = r.memory.final_bytes;
    mem["peak_bytes"] = r.memory.peak_bytes;
    mem["average_bytes"] = r.memory.average_bytes();
    j["metadata_memory"] = mem;
    nlohmann::ordered_json ad;
    ad["missed_requests"] = r.adaptiveness.missed_requests;
    ad["missed_request_bytes"] = r.adaptiveness.missed_request_bytes;
    ad["avg_missed_request_size"] = r.adaptiveness.avg_missed_request_size();
    ad["allocated_blocks"] = r.adaptiveness.allocated_blocks;
    ad["allocated_bytes"] = r.adaptiveness.allocated_bytes;
    ad["avg_allocated_block_size"] = r.adaptiveness.avg_allocated_block_size();
    ad["allocations_by_size"] = size_map_json(r.adaptiveness.allocations_by_size);
    j["adaptiveness"] = ad;
    j["resident_blocks_by_size"] = size_map_json(r.resident_blocks_by_size);
    nlohmann::ordered_json eng;
    eng["block_evictions"] = r.engine.block_evictions;
    eng["group_evictions"] = r.engine.group_evictions;
    eng["blocks_evicted_in_groups"] = r.engine.blocks_evicted_in_groups;
    eng["writeback_errors"] = r.engine.writeback_errors;
    eng["periodic_flushes"] = r.engine.periodic_flushes;
    eng["dirty_bytes_at_end"] = r.dirty_bytes_at_end;
    j["engine"] = eng;
    if (!r.epochs.empty()) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : r.epochs) {
            nlohmann::ordered_json ej;
            ej["events"] = e.events;
            ej["read_hit_ratio"] = e.hits.read_hit_ratio();
            ej["write_hit_ratio"] = e.hits.write_hit_ratio();
            ej["read_byte_hit_ratio"] = e.hits.read_byte_hit_ratio();
            ej["write_byte_hit_ratio"] = e.hits.write_byte_hit_ratio();
            ej["volumes"] = volumes_json(e.volumes);
            ej["metadata_bytes"] = e.metadata_bytes;
            arr.push_back(std::move(ej));
        }
        j["epochs"] = std::move(arr);
    }
    return j;
}

nlohmann::ordered_json to_json(const ReplayReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["config"] = r.config;
    j["trace_lines"] = r.trace_lines;
    j["skipped_lines"] = r.skipped_lines;
    auto devs = nlohmann::ordered_json::array();
    for (const auto& d : r.devices)
        devs.push_back(to_json(d));
    j["devices"] = std::move(devs);
    j["total"] = to_json(r.total);
    if (!r.timing.is_null())
        j["timing"] = r.timing;
    return j;
}

std::vector<std::pair<std::string, double>> flatten_metrics(const nlohmann::ordered_json& j) {
    std::vector<std::pair<std::string, double>> out;
    auto walk = [&](auto&& self, const nlohmann::ordered_json& node, const std::string& prefix) -> void {
        if (!node.is_object())
            return;
        for (auto it = node.begin(); it != node.end(); ++it) {
            const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it->is_number())
                out.emplace_back(key, it->get<double>());
            else if (it->is_object())
                self(self, *it, key);
        }
    };
    walk(walk, j, "");
    return out;
}

std::string to_csv(const ReplayReport& r) {
    std::ostringstream out;
    out << std::setprecision(17);
    std::vector<nlohmann::ordered_json> rows;
    for (const auto& d : r.devices)
        rows.push_back(to_json(d));
    rows.push_back(to_json(r.total));
    const auto header = flatten_metrics(rows.back());
    out << "device";
    for (const auto& [k, v] : header)
        out << ',' << k;
    out << '\n';
    for (const auto& row : rows) {
        out << row["device"].get<std::string>();
        std::map<std::string, double> values;
        for (const auto& [k, v] : flatten_metrics(row))
            values[k] = v;
        for (const auto& [k, v] : header) {
            out << ',';
            if (auto it = values.find(k); it != values.end())
                out << it->second;
        }
        out << '\n';
    }
    return out.str();
}

Comparison compare(std::span<const std::pair<std::string, nlohmann::ordered_json>> reports) {
    Comparison c;
    std::vector<std::map<std::string, double>> values;
    for (const auto& [label, report] : reports) {
        c.labels.push_back(label);
        const auto& total = report.contains("total") ? report["total"] : report;
        std::map<std::string, double> m;
        for (const auto& [k, v] : flatten_metrics(total)) {
            if (std::none_of(c.rows.begin(), c.rows.end(), [&](const auto& row) { return row.metric == k; }))
                c.rows.push_back({k, {}});
            m[k] = v;
        }
        values.push_back(std::move(m));
    }
    for (auto& row : c.rows)
        for (const auto& m : values) {
            auto it = m.find(row.metric);
            row.values.push_back(it == m.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
        }
    return c;
}

namespace {
std::string num(double v) {
    if (std::isnan(v))
        return "-";
    char buf[64];
    if (v == std::floor(v) && std::abs(v) < 1e15)
        std::snprintf(buf, sizeof buf, "%.0f", v);
    else
        std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}
}  // namespace

std::string Comparison::to_text() const {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"metric"};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        head.push_back(labels[i]);
        if (i > 0) {
            head.push_back("delta");
            head.push_back("ratio");
        }
    }
    cells.push_back(head);
    for (const auto& row : rows) {
        std::vector<std::string> line{row.metric};
        const double base = row.values.empty() ? 0 : row.values[0];
        for (std::size_t i = 0; i < row.values.size(); ++i) {
            line.push_back(num(row.values[i]));
            if (i > 0) {
                line.push_back(num(row.values[i] - base));
                line.push_back(base == 0 ? "-" : num(row.values[i] / base));
            }
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& line : cells)
        for (std::size_t i = 0; i < line.size(); ++i)
            width[i] = std::max(width[i], line[i].size());
    std::ostringstream out;
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i == 0)
                out << std::left << std::setw(static_cast<int>(width[i])) << line[i];
            else
                out << "  " << std::right << std::setw(static_cast<int>(width[i])) << line[i];
        }
        out << '\n';
    }
    return out.str();
}

std::string Comparison::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(17) << "metric";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << ',' << labels[i];
        if (i > 0)
            out << ',' << labels[i] << "_delta," << labels[i] << "_ratio";
    }
    out << '\n';
    for (const auto& row : rows) {
        out << row.metric;
        const double base = row.values.empty() ? 0 : row.values[0];
        for (std::size_t i = 0; i < row.values.size(); ++i) {
            out << ',' << row.values[i];
            if (i > 0) {
                out << ',' << row.values[i] - base << ',';
                if (base != 0)
                    out << row.values[i] / base;
            }
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace vbcache
