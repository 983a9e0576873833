#pragma once

// Variable-sized block allocation: find the parts of a request that no
// resident block covers, then carve those parts into the largest self-aligned
// blocks the configuration allows.

#include <compare>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "vbcache/block_size_config.hpp"

namespace vbcache {

/// Half-open byte range [begin, end).
struct Interval {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t length() const noexcept { return end - begin; }
    bool contains(std::uint64_t off) const noexcept { return off >= begin && off < end; }
    friend auto operator<=>(const Interval&, const Interval&) = default;
};

/// One block to allocate: `size` bytes at source offset `offset` (offset % size == 0).
struct Allocation {
    std::uint64_t offset = 0;
    std::uint64_t size = 0;

    std::uint64_t end() const noexcept { return offset + size; }
    friend auto operator<=>(const Allocation&, const Allocation&) = default;
};

/// A resident block found while scanning.
using BlockRef = Allocation;

/// Membership query over the per-size indices. Offsets passed in are always
/// aligned to the block size being queried.
template <typename T>
concept IndexView = requires(const T& index, std::uint64_t size, std::uint64_t offset) {
    { index.contains(size, offset) } -> std::convertible_to<bool>;
};

/// How the scan end is derived from a request.
///   extended: align(offset + length, B1) + B1. A request whose end is
///             already B1-aligned covers one extra step. Default.
///   strict:   align(offset + length - 1, B1) + B1, only the steps the
///             request touches.
enum class RangeMode { extended, strict };

/// B1-aligned range scanned for a request. Throws std::invalid_argument on
/// length == 0 or offset overflow.
Interval scan_range(std::uint64_t offset, std::uint64_t length, const BlockSizeConfig& cfg,
                    RangeMode mode = RangeMode::extended);

struct ScanResult {
    std::vector<Interval> missing;  // maximal runs of uncovered B1 steps, sorted
    std::vector<BlockRef> hits;     // covering blocks in ascending offset order
};

/// Walks `range` in B1 steps. A step hits when its address, aligned to some
/// configured size B, is present in the index for B; the walk then skips to the
/// end of that block. Contiguous missing steps merge into one interval.
template <IndexView Index>
ScanResult scan(Interval range, const BlockSizeConfig& cfg, const Index& index) {
    ScanResult out;
    const std::uint64_t step = cfg.smallest();
    std::uint64_t pos = range.begin;
    while (pos < range.end) {
        bool hit = false;
        for (auto size : cfg.sizes()) {
            const std::uint64_t aligned = align(pos, size);
            if (index.contains(size, aligned)) {
                out.hits.push_back({aligned, size});
                pos = aligned + size;
                hit = true;
                break;
            }
        }
        if (hit)
            continue;
        if (!out.missing.empty() && out.missing.back().end == pos)
            out.missing.back().end = pos + step;
        else
            out.missing.push_back({pos, pos + step});
        pos += step;
    }
    return out;
}

/// Missing intervals for the request [offset, offset + length).
template <IndexView Index>
std::vector<Interval> missing_intervals(std::uint64_t offset, std::uint64_t length,
                                        const BlockSizeConfig& cfg, const Index& index,
                                        RangeMode mode = RangeMode::extended) {
    return scan(scan_range(offset, length, cfg, mode), cfg, index).missing;
}

/// Greedy tiling: at each cursor take the largest configured size that is
/// aligned at the cursor and fits before the interval end. Intervals must be
/// B1-aligned; throws std::invalid_argument otherwise.
std::vector<Allocation> greedy_allocate(std::span<const Interval> intervals,
                                        const BlockSizeConfig& cfg);

inline std::vector<Allocation> greedy_allocate(Interval interval, const BlockSizeConfig& cfg) {
    return greedy_allocate(std::span<const Interval>(&interval, 1), cfg);
}

/// Plain per-size hash sets; handy for tests and offline planning.
class SetIndex {
public:
    explicit SetIndex(const BlockSizeConfig& cfg) : cfg_(cfg), sets_(cfg.count()) {}

    void insert(std::uint64_t size, std::uint64_t offset) {
        if (offset % size != 0)
            throw std::invalid_argument("unaligned offset inserted into index");
        sets_.at(cfg_.index_of(size)).insert(offset);
    }
    void erase(std::uint64_t size, std::uint64_t offset) { sets_.at(cfg_.index_of(size)).erase(offset); }
    bool contains(std::uint64_t size, std::uint64_t offset) const {
        return sets_[cfg_.index_of(size)].contains(offset);
    }

private:
    BlockSizeConfig cfg_;
    std::vector<std::unordered_set<std::uint64_t>> sets_;
};

}  // namespace vbcache
