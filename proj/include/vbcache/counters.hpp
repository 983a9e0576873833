#pragma once

#include <cstdint>

namespace vbcache {

/// Device-level traffic. "core" is the backing store, "cache" the cache medium.
///   read_from_core:  read-miss block fetches and write-miss fills
///   write_to_core:   dirty write-backs (eviction, flush) and write-through data
///   read_from_cache: request bytes served by hits, plus dirty blocks read for write-back
///   write_to_cache:  whole-block installs, plus request bytes written into resident blocks
struct VolumeCounters {
    std::uint64_t write_to_core = 0;
    std::uint64_t read_from_core = 0;
    std::uint64_t write_to_cache = 0;
    std::uint64_t read_from_cache = 0;

    std::uint64_t core_total() const noexcept { return write_to_core + read_from_core; }
    std::uint64_t cache_total() const noexcept { return write_to_cache + read_from_cache; }

    VolumeCounters& operator+=(const VolumeCounters& o) noexcept {
        write_to_core += o.write_to_core;
        read_from_core += o.read_from_core;
        write_to_cache += o.write_to_cache;
        read_from_cache += o.read_from_cache;
        return *this;
    }
    friend bool operator==(const VolumeCounters&, const VolumeCounters&) = default;
};

}  // namespace vbcache
