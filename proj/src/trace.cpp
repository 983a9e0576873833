#include "vbcache/trace.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <memory>
#include <ostream>
#include <unordered_set>

namespace vbcache {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

std::uint64_t to_u64(std::string_view field, std::uint64_t line_no, const char* what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        throw ParseError(line_no, std::string("bad ") + what + " '" + std::string(field) + "'");
    return v;
}

double to_double(std::string_view field, std::uint64_t line_no, const char* what) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty() || !std::isfinite(v) || v < 0)
        throw ParseError(line_no, std::string("bad ") + what + " '" + std::string(field) + "'");
    return v;
}

std::vector<std::string_view> fields(std::string_view line, std::size_t want, std::uint64_t line_no) {
    auto f = split_csv(trim(line));
    if (f.size() != want)
        throw ParseError(line_no, "expected " + std::to_string(want) + " fields, got " + std::to_string(f.size()));
    return f;
}

OpKind to_op(std::string_view field, std::uint64_t line_no) {
    std::string s(field);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "r" || s == "read" || s == "rs")
        return OpKind::read;
    if (s == "w" || s == "write" || s == "ws")
        return OpKind::write;
    throw ParseError(line_no, "bad operation '" + std::string(field) + "'");
}

// Decimal seconds to nanoseconds without going through double, which cannot
// hold epoch-scale nanoseconds exactly.
std::uint64_t seconds_to_ns(std::string_view field, std::uint64_t line_no) {
    const auto dot = field.find('.');
    if (field.find_first_of("eE") != std::string_view::npos)
        return static_cast<std::uint64_t>(std::llround(to_double(field, line_no, "timestamp") * 1e9));
    const std::uint64_t whole = dot == 0 ? 0 : to_u64(field.substr(0, dot), line_no, "timestamp");
    std::uint64_t frac = 0;
    if (dot != std::string_view::npos) {
        auto digits = field.substr(dot + 1);
        if (digits.size() > 9)
            digits = digits.substr(0, 9);
        if (!digits.empty())
            frac = to_u64(digits, line_no, "timestamp");
        for (std::size_t i = digits.size(); i < 9; ++i)
            frac *= 10;
    }
    return whole * 1'000'000'000ull + frac;
}

void require_length(std::uint64_t length, std::uint64_t line_no) {
    if (length == 0)
        throw ParseError(line_no, "zero-length request");
}

bool is_header(std::string_view line) {
    line = trim(line);
    return !line.empty() && std::isalpha(static_cast<unsigned char>(line.front()));
}

// Line source over zlib's gz reader, which also passes plain files through.
class GzLines {
public:
    explicit GzLines(const std::filesystem::path& path) : file_(gzopen(path.c_str(), "rb")) {
        if (!file_)
            throw std::runtime_error("cannot open trace " + path.string());
        gzbuffer(file_, 1 << 17);
    }
    ~GzLines() { gzclose(file_); }
    GzLines(const GzLines&) = delete;
    GzLines& operator=(const GzLines&) = delete;

    bool next(std::string& line) {
        line.clear();
        char buf[4096];
        while (gzgets(file_, buf, sizeof buf)) {
            line += buf;
            if (!line.empty() && line.back() == '\n')
                return true;
        }
        int err = 0;
        const char* msg = gzerror(file_, &err);
        if (err != Z_OK && err != Z_STREAM_END)
            throw std::runtime_error(std::string("trace read error: ") + msg);
        return !line.empty();
    }

private:
    gzFile file_;
};

class StreamLines {
public:
    explicit StreamLines(std::istream& in) : in_(in) {}
    bool next(std::string& line) { return static_cast<bool>(std::getline(in_, line)); }

private:
    std::istream& in_;
};

template <typename Lines>
void load_into(Trace& trace, Lines& lines, const TraceLoadOptions& opt) {
    const std::unordered_set<std::string> filter(opt.devices.begin(), opt.devices.end());
    std::unordered_map<DeviceId, std::uint64_t> last_ts;
    std::string line;
    std::uint64_t line_no = 0;
    std::uint64_t taken = 0;
    while (lines.next(line)) {
        ++line_no;
        ++trace.lines;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#' || (line_no == 1 && is_header(body)))
            continue;
        TraceRecord rec;
        try {
            switch (opt.format) {
            case TraceFormat::msr: rec = parse_msr(body, line_no); break;
            case TraceFormat::alibaba: rec = parse_alibaba(body, line_no, opt.alibaba_offset_unit); break;
            case TraceFormat::systor: rec = parse_systor(body, line_no); break;
            }
        } catch (const ParseError&) {
            if (!opt.skip_malformed)
                throw;
            ++trace.skipped;
            continue;
        }
        if (!filter.empty() && !filter.contains(rec.device))
            continue;
        const DeviceId dev = trace.device_id(rec.device);
        auto& ts = last_ts[dev];
        ts = std::max(ts, rec.timestamp_ns);
        trace.events.push_back({dev, rec.op, rec.offset, rec.length, ts});
        if (opt.max_events != 0 && ++taken >= opt.max_events)
            break;
    }
}

}  // namespace

TraceFormat parse_trace_format(std::string_view name) {
    if (name == "msr")
        return TraceFormat::msr;
    if (name == "alibaba")
        return TraceFormat::alibaba;
    if (name == "systor")
        return TraceFormat::systor;
    throw std::invalid_argument("unknown trace format '" + std::string(name) + "' (msr|alibaba|systor)");
}

const char* to_string(TraceFormat f) noexcept {
    switch (f) {
    case TraceFormat::msr: return "msr";
    case TraceFormat::alibaba: return "alibaba";
    case TraceFormat::systor: return "systor";
    }
    return "?";
}

TraceRecord parse_msr(std::string_view line, std::uint64_t line_no) {
    const auto f = fields(line, 7, line_no);
    if (f[1].empty())
        throw ParseError(line_no, "empty hostname");
    TraceRecord r;
    r.timestamp_ns = to_u64(f[0], line_no, "timestamp") * 100;
    r.device = std::string(f[1]) + "_" + std::to_string(to_u64(f[2], line_no, "disk number"));
    r.op = to_op(f[3], line_no);
    r.offset = to_u64(f[4], line_no, "offset");
    r.length = to_u64(f[5], line_no, "size");
    to_u64(f[6], line_no, "response time");
    require_length(r.length, line_no);
    return r;
}

TraceRecord parse_alibaba(std::string_view line, std::uint64_t line_no, std::uint64_t offset_unit) {
    const auto f = fields(line, 5, line_no);
    TraceRecord r;
    r.device = "vd" + std::to_string(to_u64(f[0], line_no, "device id"));
    r.op = to_op(f[1], line_no);
    r.offset = to_u64(f[2], line_no, "offset") * offset_unit;
    r.length = to_u64(f[3], line_no, "length");
    r.timestamp_ns = to_u64(f[4], line_no, "timestamp") * 1000;
    require_length(r.length, line_no);
    return r;
}

TraceRecord parse_systor(std::string_view line, std::uint64_t line_no) {
    const auto f = fields(line, 6, line_no);
    TraceRecord r;
    r.timestamp_ns = seconds_to_ns(f[0], line_no);
    if (!f[1].empty())
        to_double(f[1], line_no, "response time");
    r.op = to_op(f[2], line_no);
    r.device = "lun" + std::to_string(to_u64(f[3], line_no, "LUN"));
    r.offset = to_u64(f[4], line_no, "offset");
    r.length = to_u64(f[5], line_no, "size");
    require_length(r.length, line_no);
    return r;
}

DeviceId Trace::device_id(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<DeviceId>(devices.size()));
    if (inserted)
        devices.push_back(name);
    return it->second;
}

std::vector<IoEvent> Trace::events_for(DeviceId dev) const {
    std::vector<IoEvent> out;
    for (const auto& e : events)
        if (e.device == dev)
            out.push_back(e);
    return out;
}

Trace load_trace(const std::filesystem::path& path, const TraceLoadOptions& options) {
    Trace trace;
    GzLines lines(path);
    load_into(trace, lines, options);
    return trace;
}

Trace load_trace(std::istream& in, const TraceLoadOptions& options) {
    Trace trace;
    StreamLines lines(in);
    load_into(trace, lines, options);
    return trace;
}

Trace load_traces(std::span<const std::filesystem::path> paths, const TraceLoadOptions& options) {
    Trace trace;
    for (const auto& p : paths) {
        TraceLoadOptions opt = options;
        if (opt.max_events != 0) {
            if (trace.events.size() >= opt.max_events)
                break;
            opt.max_events -= trace.events.size();
        }
        GzLines lines(p);
        load_into(trace, lines, opt);
    }
    return trace;
}

void write_trace(const Trace& trace, TraceFormat format, std::ostream& out) {
    for (const auto& e : trace.events) {
        const bool w = e.op == OpKind::write;
        switch (format) {
        case TraceFormat::msr:
            out << e.timestamp_ns / 100 << ",syn," << e.device << ',' << (w ? "Write" : "Read") << ','
                << e.offset << ',' << e.length << ",0\n";
            break;
        case TraceFormat::alibaba:
            out << e.device << ',' << (w ? 'W' : 'R') << ',' << e.offset << ',' << e.length << ','
                << e.timestamp_ns / 1000 << '\n';
            break;
        case TraceFormat::systor: {
            const std::uint64_t us = e.timestamp_ns / 1000;
            char frac[8];
            std::snprintf(frac, sizeof frac, "%06llu", static_cast<unsigned long long>(us % 1000000));
            out << us / 1000000 << '.' << frac << ",0," << (w ? 'W' : 'R') << ',' << e.device << ','
                << e.offset << ',' << e.length << '\n';
            break;
        }
        }
    }
}

std::uint64_t working_set_size(std::span<const IoEvent> events, std::uint64_t step) {
    struct KeyHash {
        std::size_t operator()(const std::pair<DeviceId, std::uint64_t>& k) const noexcept {
            return std::hash<std::uint64_t>{}(k.second * 0x9E3779B97F4A7C15ull ^ k.first);
        }
    };
    std::unordered_set<std::pair<DeviceId, std::uint64_t>, KeyHash> steps;
    for (const auto& e : events) {
        const std::uint64_t first = e.offset / step;
        const std::uint64_t last = (e.offset + e.length - 1) / step;
        for (std::uint64_t s = first; s <= last; ++s)
            steps.insert({e.device, s});
    }
    return steps.size() * step;
}

}  // namespace vbcache
