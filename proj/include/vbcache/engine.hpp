#pragma once

// Variable-sized block cache with group-based space management and two-level
// LRU replacement.
//
// Physical cache space is cut into groups of `group_size` bytes (the largest
// block size). A group holds blocks of one size only. Allocation takes a slot
// from the open group of the requested size, else opens a group on a free
// extent, else replaces: when the global block-LRU tail has the requested size
// only that block goes and its slot is reused; otherwise the whole group at
// the group-LRU tail is evicted and its extent reopened for the requested size.

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vbcache/allocator.hpp"
#include "vbcache/backing_store.hpp"
#include "vbcache/block_size_config.hpp"
#include "vbcache/counters.hpp"
#include "vbcache/lru_list.hpp"

namespace vbcache {

enum class WritePolicy { write_back, write_through };

const char* to_string(WritePolicy p) noexcept;
/// Accepts write-back/wb and write-through/wt. Throws std::invalid_argument.
WritePolicy parse_write_policy(std::string_view s);

struct EngineOptions {
    BlockSizeConfig sizes{32 * KiB, 64 * KiB, 128 * KiB, 256 * KiB};
    /// Rounded down to a whole number of groups; must hold at least one.
    std::uint64_t capacity = 0;
    WritePolicy policy = WritePolicy::write_back;
    RangeMode range_mode = RangeMode::extended;
    /// Fill whole blocks from the backing store on a write miss, even when the
    /// write overwrites them.
    bool always_fill = false;
    /// Flush all dirty blocks after every N requests; 0 disables.
    std::uint64_t flush_interval = 0;
    /// Keep the cached bytes. Required for stores that need data.
    bool store_data = false;
};

/// Receives per-block events in the order the engine performs them.
class CacheObserver {
public:
    virtual ~CacheObserver() = default;
    virtual void on_hit(DeviceId, const BlockRef&) {}
    virtual void on_install(DeviceId, const BlockRef&) {}
    virtual void on_evict(DeviceId, const BlockRef&, bool /*dirty*/) {}
    virtual void on_group_evict(std::uint32_t /*group*/, std::uint64_t /*block_size*/,
                                std::uint32_t /*members*/) {}
};

struct ReadOutcome {
    std::uint64_t bytes_from_cache = 0;
    std::uint64_t bytes_from_backend = 0;
    Interval range;                 // scanned B1-aligned range
    std::vector<bool> step_hits;    // one flag per B1 step of `range`
    std::uint32_t blocks_allocated = 0;
    std::uint64_t bytes_allocated = 0;

    bool full_hit() const noexcept;
};

struct WriteOutcome {
    std::uint64_t bytes_to_cache = 0;
    /// Write-through data plus write-backs triggered by this request.
    std::uint64_t bytes_to_backend = 0;
    std::uint64_t hit_bytes = 0;    // request bytes that landed on resident blocks
    std::uint64_t fill_bytes = 0;   // backing-store reads issued to complete new blocks
    Interval range;
    std::vector<bool> step_hits;
    std::uint32_t blocks_allocated = 0;
    std::uint64_t bytes_allocated = 0;

    bool full_hit() const noexcept;
};

struct EngineStats {
    VolumeCounters volumes;
    std::uint64_t block_evictions = 0;   // single-block replacements
    std::uint64_t group_evictions = 0;
    std::uint64_t blocks_evicted_in_groups = 0;
    std::uint64_t writeback_errors = 0;
    std::uint64_t periodic_flushes = 0;
    std::uint64_t requests = 0;
};

struct BlockRecord {
    DeviceId dev = 0;
    std::uint64_t source_offset = 0;
    std::uint64_t size = 0;
    bool dirty = false;
    std::uint32_t group_id = 0;
    std::uint64_t cache_offset = 0;

    friend auto operator<=>(const BlockRecord&, const BlockRecord&) = default;
};

enum class GroupState { free, open, full };

struct GroupRecord {
    std::uint32_t id = 0;
    std::uint64_t physical_base = 0;
    std::uint64_t block_size = 0;
    std::uint32_t occupancy = 0;
    std::uint32_t slots = 0;
    GroupState state = GroupState::free;
};

class CacheEngine {
public:
    /// Throws std::invalid_argument when the capacity holds no group or the
    /// store needs data but store_data is off.
    CacheEngine(EngineOptions options, BackingStore& backend);

    CacheEngine(const CacheEngine&) = delete;
    CacheEngine& operator=(const CacheEngine&) = delete;
    CacheEngine(CacheEngine&&) = default;

    /// With store_data, `out` must be `length` bytes; otherwise it may be empty.
    /// A backing-store failure propagates; the block whose fetch failed is not installed.
    ReadOutcome read(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                     std::span<std::byte> out = {});
    WriteOutcome write(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                       std::span<const std::byte> in = {});

    /// Writes back dirty blocks and marks them clean. Returns bytes written.
    std::uint64_t flush();
    std::uint64_t flush(DeviceId dev);
    /// Flushes, then drops every block of `dev`.
    void invalidate(DeviceId dev);

    const EngineStats& stats() const noexcept { return stats_; }
    const EngineOptions& options() const noexcept { return opt_; }
    std::uint64_t capacity() const noexcept { return capacity_; }
    std::uint32_t group_count() const noexcept { return static_cast<std::uint32_t>(groups_.size()); }

    std::uint64_t resident_blocks() const noexcept { return live_blocks_; }
    std::uint64_t resident_blocks(std::uint64_t size) const { return per_size_live_.at(opt_.sizes.index_of(size)); }
    std::span<const std::uint64_t> resident_blocks_per_size() const noexcept { return per_size_live_; }
    std::uint32_t open_groups() const noexcept;

    /// Sorted by (dev, source_offset).
    std::vector<BlockRecord> contents_snapshot() const;
    std::vector<GroupRecord> groups_snapshot() const;
    std::optional<BlockRecord> lru_head() const;
    std::optional<BlockRecord> lru_tail() const;
    std::optional<std::uint32_t> group_lru_head() const;
    std::optional<std::uint32_t> group_lru_tail() const;

    /// Verifies the structural invariants; throws std::logic_error naming the first violation.
    void check_invariants() const;

    void set_observer(CacheObserver* observer) noexcept { observer_ = observer; }

private:
    static constexpr std::uint32_t npos = UINT32_MAX;

    struct Key {
        DeviceId dev;
        std::uint64_t offset;
        friend bool operator==(const Key&, const Key&) = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = k.offset * 0x9E3779B97F4A7C15ull ^ (std::uint64_t{k.dev} << 1);
            return static_cast<std::size_t>(h ^ (h >> 29));
        }
    };

    struct Block {
        DeviceId dev = 0;
        std::uint64_t offset = 0;
        std::uint32_t size_idx = 0;
        std::uint32_t group = npos;
        std::uint32_t slot = 0;
        bool dirty = false;
        bool live = false;
    };

    struct Group {
        std::uint64_t base = 0;
        std::uint32_t size_idx = 0;
        std::uint32_t used = 0;
        GroupState state = GroupState::free;
        std::vector<std::uint32_t> members;  // slot -> block id or npos
    };

    struct Slot {
        std::uint32_t group;
        std::uint32_t slot;
    };

    class DeviceView {
    public:
        DeviceView(const CacheEngine& e, DeviceId dev) : e_(e), dev_(dev) {}
        bool contains(std::uint64_t size, std::uint64_t offset) const {
            return e_.find(dev_, e_.opt_.sizes.index_of(size), offset) != npos;
        }

    private:
        const CacheEngine& e_;
        DeviceId dev_;
    };

    // Requests are walked as ascending units: resident blocks and new allocations.
    struct Unit {
        std::uint64_t offset;
        std::uint64_t size;
        bool resident;
    };
    std::vector<Unit> plan(DeviceId dev, Interval range) const;

    std::uint32_t find(DeviceId dev, std::uint32_t size_idx, std::uint64_t offset) const;
    std::uint64_t size_of(const Block& b) const noexcept { return opt_.sizes[b.size_idx]; }
    std::uint64_t cache_offset(const Block& b) const noexcept {
        return groups_[b.group].base + std::uint64_t{b.slot} * size_of(b);
    }
    std::span<std::byte> cache_bytes(const Block& b);

    Slot allocate_slot(std::uint32_t size_idx);
    Slot take_slot(std::uint32_t group);
    void open_group(std::uint32_t group, std::uint32_t size_idx);
    Slot replace(std::uint32_t size_idx);
    void release_group(std::uint32_t group);

    std::uint32_t install(DeviceId dev, const Allocation& a, std::span<const std::byte> data,
                          bool dirty);
    void promote(std::uint32_t block);
    void drop_block(std::uint32_t block);
    std::uint64_t evict_block(std::uint32_t block);
    bool write_back(std::uint32_t block);
    void after_request();

    std::uint64_t flush_blocks(std::vector<std::uint32_t> dirty);

    EngineOptions opt_;
    BackingStore& backend_;
    CacheObserver* observer_ = nullptr;
    std::uint64_t capacity_ = 0;

    std::vector<std::unordered_map<Key, std::uint32_t, KeyHash>> index_;  // per size
    std::vector<Block> blocks_;
    std::vector<std::uint32_t> free_block_ids_;
    std::vector<Group> groups_;
    std::vector<std::uint32_t> free_extents_;  // stack, lowest id on top initially
    std::vector<std::uint32_t> open_;          // per size: open group id or npos
    LruList block_lru_;
    LruList group_lru_;
    std::vector<std::byte> data_;
    std::vector<std::uint64_t> per_size_live_;
    std::uint64_t live_blocks_ = 0;
    std::uint64_t pending_writeback_bytes_ = 0;  // write-backs during the current request
    EngineStats stats_;
};

}  // namespace vbcache
