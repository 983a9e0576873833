#pragma once

// Test-only reference for missing-interval generation: mark every smallest-size
// step that some resident block overlaps, then report the unmarked runs.
// Shares nothing with the library beyond plain integers.

#include <cstdint>
#include <utility>
#include <vector>

namespace oracle {

struct Block {
    std::uint64_t offset;
    std::uint64_t size;
};

/// Missing runs of [begin, end) at `step` granularity, as (begin, end) pairs.
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> coverage_bitmap(
    const std::vector<Block>& resident, std::uint64_t begin, std::uint64_t end, std::uint64_t step) {
    const std::uint64_t steps = (end - begin) / step;
    std::vector<bool> covered(steps, false);
    for (const auto& b : resident) {
        for (std::uint64_t i = 0; i < steps; ++i) {
            const std::uint64_t lo = begin + i * step;
            const std::uint64_t hi = lo + step;
            if (lo < b.offset + b.size && b.offset < hi)
                covered[i] = true;
        }
    }
    std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;
    for (std::uint64_t i = 0; i < steps; ++i) {
        if (covered[i])
            continue;
        const std::uint64_t lo = begin + i * step;
        if (!runs.empty() && runs.back().second == lo)
            runs.back().second = lo + step;
        else
            runs.emplace_back(lo, lo + step);
    }
    return runs;
}

/// Scan range of a request: extended rule (end aligned then one extra step) or the
/// strict rule (last byte aligned then one step).
inline std::pair<std::uint64_t, std::uint64_t> request_range(std::uint64_t offset, std::uint64_t length,
                                                             std::uint64_t step, bool strict) {
    const std::uint64_t last = strict ? offset + length - 1 : offset + length;
    return {offset / step * step, last / step * step + step};
}

/// Largest-feasible tiling, written as an exhaustive search over every size at
/// every cursor rather than the library's descending scan.
inline std::vector<Block> tile(std::uint64_t begin, std::uint64_t end, const std::vector<std::uint64_t>& sizes) {
    std::vector<Block> out;
    std::uint64_t cursor = begin;
    while (cursor < end) {
        std::uint64_t best = 0;
        for (auto s : sizes)
            if (cursor % s == 0 && cursor + s <= end && s > best)
                best = s;
        if (best == 0)
            return {};  // unaligned input
        out.push_back({cursor, best});
        cursor += best;
    }
    return out;
}

}  // namespace oracle
