#pragma once

// Test-only fixed-size LRU block cache. Deliberately naive: a std::list for
// recency and a std::map for lookup, one aligned block at a time.

#include <cstdint>
#include <iterator>
#include <list>
#include <map>
#include <vector>

namespace oracle {

enum class EventKind { hit, miss, evict };

struct Event {
    EventKind kind;
    std::uint64_t offset;
    bool dirty;  // only meaningful for evict

    friend bool operator==(const Event&, const Event&) = default;
};

struct Volumes {
    std::uint64_t read_from_core = 0;
    std::uint64_t write_to_core = 0;
    std::uint64_t read_from_cache = 0;
    std::uint64_t write_to_cache = 0;
};

struct AccessResult {
    std::uint64_t hit_bytes = 0;   // request bytes served by blocks that were resident
    std::uint64_t miss_bytes = 0;  // request bytes served by freshly installed blocks
    bool full_hit = true;
};

class OracleCache {
public:
    struct Options {
        std::uint64_t block_size;
        std::uint64_t capacity_blocks;
        bool write_back = true;
        bool strict_range = false;
        bool always_fill = false;
    };

    explicit OracleCache(Options opt) : opt_(opt) {}

    AccessResult access(bool is_write, std::uint64_t offset, std::uint64_t length) {
        AccessResult res;
        const std::uint64_t b = opt_.block_size;
        const std::uint64_t last = opt_.strict_range ? offset + length - 1 : offset + length;
        const std::uint64_t first_block = offset / b;
        const std::uint64_t last_block = last / b;
        if (is_write && !opt_.write_back)
            vol_.write_to_core += length;
        for (std::uint64_t blk = first_block; blk <= last_block; ++blk) {
            const std::uint64_t lo = blk * b;
            const std::uint64_t hi = lo + b;
            const std::uint64_t ov_lo = offset > lo ? offset : lo;
            const std::uint64_t ov_hi = offset + length < hi ? offset + length : hi;
            const std::uint64_t overlap = ov_hi > ov_lo ? ov_hi - ov_lo : 0;

            auto it = map_.find(lo);
            if (it != map_.end()) {
                log_.push_back({EventKind::hit, lo, false});
                recency_.splice(recency_.begin(), recency_, it->second.pos);
                res.hit_bytes += overlap;
                if (is_write) {
                    vol_.write_to_cache += overlap;
                    if (opt_.write_back)
                        it->second.dirty = true;
                } else {
                    vol_.read_from_cache += overlap;
                }
                continue;
            }

            res.full_hit = false;
            res.miss_bytes += overlap;
            if (is_write)
                vol_.read_from_core += opt_.always_fill ? b : b - overlap;
            else
                vol_.read_from_core += b;
            if (map_.size() == opt_.capacity_blocks) {
                const std::uint64_t victim = recency_.back();
                const bool dirty = map_[victim].dirty;
                log_.push_back({EventKind::evict, victim, dirty});
                if (dirty) {
                    vol_.read_from_cache += b;
                    vol_.write_to_core += b;
                }
                recency_.pop_back();
                map_.erase(victim);
            }
            log_.push_back({EventKind::miss, lo, false});
            recency_.push_front(lo);
            map_[lo] = Entry{recency_.begin(), is_write && opt_.write_back};
            vol_.write_to_cache += b;
        }
        return res;
    }

    std::uint64_t flush() {
        std::uint64_t bytes = 0;
        for (auto& [off, e] : map_)
            if (e.dirty) {
                e.dirty = false;
                bytes += opt_.block_size;
            }
        vol_.read_from_cache += bytes;
        vol_.write_to_core += bytes;
        return bytes;
    }

    const std::vector<Event>& log() const { return log_; }
    const Volumes& volumes() const { return vol_; }
    std::size_t size() const { return map_.size(); }
    bool contains(std::uint64_t aligned) const { return map_.count(aligned) != 0; }

private:
    struct Entry {
        std::list<std::uint64_t>::iterator pos;
        bool dirty = false;
    };

    Options opt_;
    std::list<std::uint64_t> recency_;  // front = most recent
    std::map<std::uint64_t, Entry> map_;
    std::vector<Event> log_;
    Volumes vol_;
};

}  // namespace oracle
