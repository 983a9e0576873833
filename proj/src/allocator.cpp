#include "vbcache/allocator.hpp"

#include <limits>

namespace vbcache {

Interval scan_range(std::uint64_t offset, std::uint64_t length, const BlockSizeConfig& cfg,
                    RangeMode mode) {
    if (length == 0)
        throw std::invalid_argument("request length must be > 0");
    const std::uint64_t step = cfg.smallest();
    if (offset > std::numeric_limits<std::uint64_t>::max() - length - 2 * step)
        throw std::invalid_argument("request range overflows");
    const std::uint64_t last = mode == RangeMode::extended ? offset + length : offset + length - 1;
    return {align(offset, step), align(last, step) + step};
}

std::vector<Allocation> greedy_allocate(std::span<const Interval> intervals,
                                        const BlockSizeConfig& cfg) {
    std::vector<Allocation> out;
    const auto sizes = cfg.sizes();
    for (const auto& iv : intervals) {
        if (iv.begin >= iv.end || iv.begin % cfg.smallest() != 0 || iv.end % cfg.smallest() != 0)
            throw std::invalid_argument("interval is empty or not aligned to the smallest block");
        std::uint64_t cursor = iv.begin;
        while (cursor != iv.end) {
            // B1 always qualifies, so the loop below always advances.
            for (auto it = sizes.rbegin(); it != sizes.rend(); ++it) {
                const std::uint64_t size = *it;
                if (cursor % size != 0 || size > iv.end - cursor)
                    continue;
                out.push_back({cursor, size});
                cursor += size;
                break;
            }
        }
    }
    return out;
}

}  // namespace vbcache
