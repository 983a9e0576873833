#pragma once

// Block I/O trace ingestion: MSR Cambridge, Alibaba block traces and
// Systor '17, parsed into one event stream. See docs/trace-formats.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vbcache/backing_store.hpp"

namespace vbcache {

enum class OpKind : std::uint8_t { read, write };

/// One trace record. `device` indexes Trace::devices.
struct IoEvent {
    DeviceId device = 0;
    OpKind op = OpKind::read;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::uint64_t timestamp_ns = 0;

    friend bool operator==(const IoEvent&, const IoEvent&) = default;
};

/// A parsed line before device names are interned.
struct TraceRecord {
    std::string device;
    OpKind op = OpKind::read;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::uint64_t timestamp_ns = 0;
};

enum class TraceFormat { msr, alibaba, systor };

TraceFormat parse_trace_format(std::string_view name);
const char* to_string(TraceFormat f) noexcept;

class ParseError : public std::runtime_error {
public:
    ParseError(std::uint64_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::uint64_t line() const noexcept { return line_; }

private:
    std::uint64_t line_;
};

/// MSR Cambridge: Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime.
/// Timestamp is in 100 ns ticks; device is "<hostname>_<disk>".
TraceRecord parse_msr(std::string_view line, std::uint64_t line_no = 0);
/// Alibaba: device_id,opcode,offset,length,timestamp(us). Device is "vd<id>".
/// `offset_unit` scales offsets (1 = bytes, the published unit; 512 for sectors).
TraceRecord parse_alibaba(std::string_view line, std::uint64_t line_no = 0, std::uint64_t offset_unit = 1);
/// Systor '17: Timestamp(s),Response,IOType,LUN,Offset,Size. Device is "lun<LUN>".
TraceRecord parse_systor(std::string_view line, std::uint64_t line_no = 0);

struct TraceLoadOptions {
    TraceFormat format = TraceFormat::msr;
    std::vector<std::string> devices;  // empty = all
    bool skip_malformed = false;
    std::uint64_t max_events = 0;      // 0 = unlimited, counted after filtering
    std::uint64_t alibaba_offset_unit = 1;
};

struct Trace {
    std::vector<std::string> devices;
    std::vector<IoEvent> events;
    std::uint64_t lines = 0;
    std::uint64_t skipped = 0;

    /// Interns `name`, returning its id.
    DeviceId device_id(const std::string& name);
    std::vector<IoEvent> events_for(DeviceId dev) const;

private:
    std::unordered_map<std::string, DeviceId> ids_;
};

/// Reads plain or gzip-compressed text. Throws ParseError on the first bad line
/// unless skip_malformed; std::runtime_error when the file cannot be opened.
Trace load_trace(const std::filesystem::path& path, const TraceLoadOptions& options);
Trace load_trace(std::istream& in, const TraceLoadOptions& options);
/// Appends every file in order into one trace.
Trace load_traces(std::span<const std::filesystem::path> paths, const TraceLoadOptions& options);

/// Writes `trace` in `format`. Device ids become the numeric device field.
void write_trace(const Trace& trace, TraceFormat format, std::ostream& out);

/// Bytes in the union of `step`-aligned steps touched by the events, counted
/// per device.
std::uint64_t working_set_size(std::span<const IoEvent> events, std::uint64_t step);

}  // namespace vbcache
