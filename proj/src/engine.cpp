#include "vbcache/engine.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>

namespace vbcache {

namespace {

struct Overlap {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
    std::uint64_t length() const noexcept { return hi > lo ? hi - lo : 0; }
};

Overlap overlap(std::uint64_t a_lo, std::uint64_t a_hi, std::uint64_t b_lo, std::uint64_t b_hi) {
    return {std::max(a_lo, b_lo), std::min(a_hi, b_hi)};
}

void mark_steps(std::vector<bool>& hits, const Interval& range, std::uint64_t step,
                std::uint64_t lo, std::uint64_t hi) {
    const auto ov = overlap(lo, hi, range.begin, range.end);
    for (std::uint64_t p = ov.lo; p < ov.hi; p += step)
        hits[(p - range.begin) / step] = true;
}

bool all_set(const std::vector<bool>& v) {
    return std::all_of(v.begin(), v.end(), [](bool b) { return b; });
}

}  // namespace

const char* to_string(WritePolicy p) noexcept {
    return p == WritePolicy::write_back ? "write-back" : "write-through";
}

WritePolicy parse_write_policy(std::string_view s) {
    if (s == "write-back" || s == "wb")
        return WritePolicy::write_back;
    if (s == "write-through" || s == "wt")
        return WritePolicy::write_through;
    throw std::invalid_argument("unknown policy '" + std::string(s) + "' (write-back|write-through)");
}

bool ReadOutcome::full_hit() const noexcept { return all_set(step_hits); }
bool WriteOutcome::full_hit() const noexcept { return all_set(step_hits); }

CacheEngine::CacheEngine(EngineOptions options, BackingStore& backend)
    : opt_(std::move(options)), backend_(backend) {
    const std::uint64_t group_size = opt_.sizes.group_size();
    const std::uint64_t ngroups = opt_.capacity / group_size;
    if (ngroups == 0)
        throw std::invalid_argument("cache capacity " + std::to_string(opt_.capacity) +
                                    " is smaller than one group (" + std::to_string(group_size) + ")");
    if (ngroups > UINT32_MAX / (group_size / opt_.sizes.smallest()))
        throw std::invalid_argument("cache capacity too large for block id space");
    if (backend_.needs_data() && !opt_.store_data)
        throw std::invalid_argument("backing store carries data; enable store_data");
    capacity_ = ngroups * group_size;

    const auto max_blocks = static_cast<std::uint32_t>(capacity_ / opt_.sizes.smallest());
    index_.resize(opt_.sizes.count());
    blocks_.resize(max_blocks);
    free_block_ids_.reserve(max_blocks);
    for (std::uint32_t id = max_blocks; id-- > 0;)
        free_block_ids_.push_back(id);

    groups_.resize(ngroups);
    free_extents_.reserve(ngroups);
    for (std::uint32_t g = 0; g < ngroups; ++g)
        groups_[g].base = std::uint64_t{g} * group_size;
    for (auto g = static_cast<std::uint32_t>(ngroups); g-- > 0;)
        free_extents_.push_back(g);

    open_.assign(opt_.sizes.count(), npos);
    per_size_live_.assign(opt_.sizes.count(), 0);
    block_lru_ = LruList(max_blocks);
    group_lru_ = LruList(static_cast<std::uint32_t>(ngroups));
    if (opt_.store_data)
        data_.resize(capacity_);
}

std::uint32_t CacheEngine::find(DeviceId dev, std::uint32_t size_idx, std::uint64_t offset) const {
    const auto& map = index_[size_idx];
    auto it = map.find(Key{dev, offset});
    return it == map.end() ? npos : it->second;
}

std::span<std::byte> CacheEngine::cache_bytes(const Block& b) {
    if (!opt_.store_data)
        return {};
    return std::span<std::byte>(data_).subspan(cache_offset(b), size_of(b));
}

std::vector<CacheEngine::Unit> CacheEngine::plan(DeviceId dev, Interval range) const {
    const ScanResult s = scan(range, opt_.sizes, DeviceView(*this, dev));
    const auto allocs = greedy_allocate(s.missing, opt_.sizes);
    std::vector<Unit> units;
    units.reserve(s.hits.size() + allocs.size());
    auto h = s.hits.begin();
    auto a = allocs.begin();
    while (h != s.hits.end() || a != allocs.end()) {
        if (a == allocs.end() || (h != s.hits.end() && h->offset < a->offset))
            units.push_back({h->offset, (h++)->size, true});
        else
            units.push_back({a->offset, (a++)->size, false});
    }
    return units;
}

ReadOutcome CacheEngine::read(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                              std::span<std::byte> out) {
    if (opt_.store_data ? out.size() != length : !out.empty())
        throw std::invalid_argument("read buffer must be the request length iff store_data is on");
    ReadOutcome res;
    res.range = scan_range(offset, length, opt_.sizes, opt_.range_mode);
    const std::uint64_t step = opt_.sizes.smallest();
    res.step_hits.assign(res.range.length() / step, false);
    const std::uint64_t req_end = offset + length;
    pending_writeback_bytes_ = 0;

    std::vector<std::byte> buf;
    auto read_miss = [&](const Allocation& a) {
        if (opt_.store_data)
            buf.resize(a.size);
        backend_.read(dev, a.offset, a.size, buf);
        stats_.volumes.read_from_core += a.size;
        const std::uint32_t id = install(dev, a, buf, false);
        stats_.volumes.write_to_cache += a.size;
        promote(id);
        const auto ov = overlap(a.offset, a.end(), offset, req_end);
        if (opt_.store_data && ov.length() > 0)
            std::memcpy(out.data() + (ov.lo - offset), buf.data() + (ov.lo - a.offset), ov.length());
        res.bytes_from_backend += ov.length();
        ++res.blocks_allocated;
        res.bytes_allocated += a.size;
    };

    for (const Unit& u : plan(dev, res.range)) {
        if (!u.resident) {
            read_miss({u.offset, u.size});
            continue;
        }
        const std::uint32_t id = find(dev, opt_.sizes.index_of(u.size), u.offset);
        if (id == npos) {
            // Evicted earlier in this request; refetch the part we still need.
            const auto clip = overlap(u.offset, u.offset + u.size, res.range.begin, res.range.end);
            for (const auto& a : greedy_allocate(Interval{clip.lo, clip.hi}, opt_.sizes))
                read_miss(a);
            continue;
        }
        const auto ov = overlap(u.offset, u.offset + u.size, offset, req_end);
        if (opt_.store_data && ov.length() > 0)
            std::memcpy(out.data() + (ov.lo - offset),
                        cache_bytes(blocks_[id]).data() + (ov.lo - u.offset), ov.length());
        res.bytes_from_cache += ov.length();
        stats_.volumes.read_from_cache += ov.length();
        mark_steps(res.step_hits, res.range, step, u.offset, u.offset + u.size);
        if (observer_)
            observer_->on_hit(dev, {u.offset, u.size});
        promote(id);
    }
    after_request();
    return res;
}

WriteOutcome CacheEngine::write(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                                std::span<const std::byte> in) {
    if (opt_.store_data ? in.size() != length : !in.empty())
        throw std::invalid_argument("write buffer must be the request length iff store_data is on");
    WriteOutcome res;
    res.range = scan_range(offset, length, opt_.sizes, opt_.range_mode);
    const std::uint64_t step = opt_.sizes.smallest();
    res.step_hits.assign(res.range.length() / step, false);
    const std::uint64_t req_end = offset + length;
    const bool write_back = opt_.policy == WritePolicy::write_back;
    pending_writeback_bytes_ = 0;

    if (!write_back) {
        backend_.write(dev, offset, length, in);
        stats_.volumes.write_to_core += length;
        res.bytes_to_backend += length;
    }

    std::vector<std::byte> buf;
    auto fetch = [&](const Allocation& a, std::uint64_t lo, std::uint64_t hi) {
        if (hi <= lo)
            return;
        std::span<std::byte> dst;
        if (opt_.store_data)
            dst = std::span<std::byte>(buf).subspan(lo - a.offset, hi - lo);
        backend_.read(dev, lo, hi - lo, dst);
        stats_.volumes.read_from_core += hi - lo;
        res.fill_bytes += hi - lo;
    };
    auto write_miss = [&](const Allocation& a) {
        if (opt_.store_data)
            buf.assign(a.size, std::byte{0});
        const auto ov = overlap(a.offset, a.end(), offset, req_end);
        if (opt_.always_fill || ov.length() == 0) {
            fetch(a, a.offset, a.end());
        } else {
            fetch(a, a.offset, ov.lo);
            fetch(a, ov.hi, a.end());
        }
        if (opt_.store_data && ov.length() > 0)
            std::memcpy(buf.data() + (ov.lo - a.offset), in.data() + (ov.lo - offset), ov.length());
        const std::uint32_t id = install(dev, a, buf, write_back);
        stats_.volumes.write_to_cache += a.size;
        promote(id);
        res.bytes_to_cache += ov.length();
        ++res.blocks_allocated;
        res.bytes_allocated += a.size;
    };

    const auto units = plan(dev, res.range);
    std::size_t i = 0;
    try {
        for (; i < units.size(); ++i) {
            const Unit& u = units[i];
            if (!u.resident) {
                write_miss({u.offset, u.size});
                continue;
            }
            const std::uint32_t id = find(dev, opt_.sizes.index_of(u.size), u.offset);
            if (id == npos) {
                const auto clip = overlap(u.offset, u.offset + u.size, res.range.begin, res.range.end);
                for (const auto& a : greedy_allocate(Interval{clip.lo, clip.hi}, opt_.sizes))
                    write_miss(a);
                continue;
            }
            Block& b = blocks_[id];
            const auto ov = overlap(u.offset, u.offset + u.size, offset, req_end);
            if (opt_.store_data && ov.length() > 0)
                std::memcpy(cache_bytes(b).data() + (ov.lo - u.offset), in.data() + (ov.lo - offset),
                            ov.length());
            if (write_back && ov.length() > 0)
                b.dirty = true;
            res.bytes_to_cache += ov.length();
            res.hit_bytes += ov.length();
            stats_.volumes.write_to_cache += ov.length();
            mark_steps(res.step_hits, res.range, step, u.offset, u.offset + u.size);
            if (observer_)
                observer_->on_hit(dev, {u.offset, u.size});
            promote(id);
        }
    } catch (...) {
        if (!write_back) {
            // The backing store already holds the new data; resident blocks the
            // loop never reached would now be stale.
            for (; i < units.size(); ++i) {
                if (!units[i].resident)
                    continue;
                const std::uint32_t id = find(dev, opt_.sizes.index_of(units[i].size), units[i].offset);
                if (id != npos)
                    drop_block(id);
            }
            for (std::uint32_t g = 0; g < groups_.size(); ++g)
                if (groups_[g].state != GroupState::free && groups_[g].used == 0)
                    release_group(g);
        }
        throw;
    }
    res.bytes_to_backend += pending_writeback_bytes_;
    after_request();
    return res;
}

std::uint32_t CacheEngine::install(DeviceId dev, const Allocation& a, std::span<const std::byte> data,
                                   bool dirty) {
    const std::uint32_t size_idx = opt_.sizes.index_of(a.size);
    const Slot slot = allocate_slot(size_idx);
    const std::uint32_t id = free_block_ids_.back();
    free_block_ids_.pop_back();
    Block& b = blocks_[id];
    b = Block{dev, a.offset, size_idx, slot.group, slot.slot, dirty, true};
    groups_[slot.group].members[slot.slot] = id;
    index_[size_idx].emplace(Key{dev, a.offset}, id);
    block_lru_.push_front(id);
    ++live_blocks_;
    ++per_size_live_[size_idx];
    if (opt_.store_data)
        std::memcpy(cache_bytes(b).data(), data.data(), a.size);
    if (observer_)
        observer_->on_install(dev, a);
    return id;
}

void CacheEngine::promote(std::uint32_t block) {
    block_lru_.move_to_front(block);
    group_lru_.move_to_front(blocks_[block].group);
}

CacheEngine::Slot CacheEngine::allocate_slot(std::uint32_t size_idx) {
    if (open_[size_idx] != npos)
        return take_slot(open_[size_idx]);
    if (!free_extents_.empty()) {
        const std::uint32_t g = free_extents_.back();
        free_extents_.pop_back();
        open_group(g, size_idx);
        return take_slot(g);
    }
    return replace(size_idx);
}

void CacheEngine::open_group(std::uint32_t g, std::uint32_t size_idx) {
    Group& grp = groups_[g];
    grp.size_idx = size_idx;
    grp.used = 0;
    grp.state = GroupState::open;
    grp.members.assign(opt_.sizes.group_size() / opt_.sizes[size_idx], npos);
    open_[size_idx] = g;
    group_lru_.push_front(g);
}

CacheEngine::Slot CacheEngine::take_slot(std::uint32_t g) {
    Group& grp = groups_[g];
    auto it = std::find(grp.members.begin(), grp.members.end(), npos);
    if (it == grp.members.end())
        throw std::logic_error("take_slot on a group without free slots");
    const auto slot = static_cast<std::uint32_t>(it - grp.members.begin());
    *it = npos - 1;  // reserved until install() stores the block id
    if (++grp.used == grp.members.size()) {
        grp.state = GroupState::full;
        if (open_[grp.size_idx] == g)
            open_[grp.size_idx] = npos;
    }
    return {g, slot};
}

CacheEngine::Slot CacheEngine::replace(std::uint32_t size_idx) {
    const std::uint32_t tail = block_lru_.back();
    if (tail == npos)
        throw std::logic_error("cache full but no resident blocks");
    if (blocks_[tail].size_idx == size_idx) {
        const std::uint32_t g = blocks_[tail].group;
        const std::uint32_t slot = blocks_[tail].slot;
        evict_block(tail);
        ++stats_.block_evictions;
        groups_[g].members[slot] = npos - 1;
        ++groups_[g].used;
        return {g, slot};
    }

    const std::uint32_t g = group_lru_.back();
    Group& grp = groups_[g];
    const std::uint64_t block_size = opt_.sizes[grp.size_idx];
    std::uint32_t evicted = 0;
    for (std::uint32_t id : grp.members) {
        if (id >= npos - 1)
            continue;
        evict_block(id);
        ++evicted;
    }
    ++stats_.group_evictions;
    stats_.blocks_evicted_in_groups += evicted;
    if (observer_)
        observer_->on_group_evict(g, block_size, evicted);
    release_group(g);
    if (open_[size_idx] == npos) {
        free_extents_.pop_back();  // release_group pushed g
        open_group(g, size_idx);
        return take_slot(g);
    }
    return take_slot(open_[size_idx]);
}

void CacheEngine::release_group(std::uint32_t g) {
    Group& grp = groups_[g];
    if (group_lru_.linked(g))
        group_lru_.remove(g);
    if (open_[grp.size_idx] == g)
        open_[grp.size_idx] = npos;
    grp.state = GroupState::free;
    grp.used = 0;
    grp.members.clear();
    free_extents_.push_back(g);
}

bool CacheEngine::write_back(std::uint32_t id) {
    Block& b = blocks_[id];
    const std::uint64_t size = size_of(b);
    stats_.volumes.read_from_cache += size;
    try {
        backend_.write(b.dev, b.offset, size, cache_bytes(b));
    } catch (const BackendError&) {
        ++stats_.writeback_errors;
        return false;
    }
    stats_.volumes.write_to_core += size;
    pending_writeback_bytes_ += size;
    b.dirty = false;
    return true;
}

std::uint64_t CacheEngine::evict_block(std::uint32_t id) {
    const Block& b = blocks_[id];
    const bool dirty = b.dirty;
    std::uint64_t written = 0;
    if (dirty && write_back(id))
        written = size_of(b);
    if (observer_)
        observer_->on_evict(b.dev, {b.offset, size_of(b)}, dirty);
    drop_block(id);
    return written;
}

void CacheEngine::drop_block(std::uint32_t id) {
    Block& b = blocks_[id];
    index_[b.size_idx].erase(Key{b.dev, b.offset});
    block_lru_.remove(id);
    Group& grp = groups_[b.group];
    grp.members[b.slot] = npos;
    --grp.used;
    --live_blocks_;
    --per_size_live_[b.size_idx];
    b.live = false;
    b.dirty = false;
    free_block_ids_.push_back(id);
}

std::uint64_t CacheEngine::flush_blocks(std::vector<std::uint32_t> dirty) {
    std::sort(dirty.begin(), dirty.end(), [&](std::uint32_t a, std::uint32_t b) {
        return std::tie(blocks_[a].dev, blocks_[a].offset) < std::tie(blocks_[b].dev, blocks_[b].offset);
    });
    std::uint64_t bytes = 0;
    for (std::uint32_t id : dirty)
        if (write_back(id))
            bytes += size_of(blocks_[id]);
    return bytes;
}

std::uint64_t CacheEngine::flush() {
    std::vector<std::uint32_t> dirty;
    for (std::uint32_t id = 0; id < blocks_.size(); ++id)
        if (blocks_[id].live && blocks_[id].dirty)
            dirty.push_back(id);
    return flush_blocks(std::move(dirty));
}

std::uint64_t CacheEngine::flush(DeviceId dev) {
    std::vector<std::uint32_t> dirty;
    for (std::uint32_t id = 0; id < blocks_.size(); ++id)
        if (blocks_[id].live && blocks_[id].dirty && blocks_[id].dev == dev)
            dirty.push_back(id);
    return flush_blocks(std::move(dirty));
}

void CacheEngine::invalidate(DeviceId dev) {
    flush(dev);
    for (std::uint32_t id = 0; id < blocks_.size(); ++id)
        if (blocks_[id].live && blocks_[id].dev == dev)
            drop_block(id);
    for (std::uint32_t g = 0; g < groups_.size(); ++g) {
        Group& grp = groups_[g];
        if (grp.state == GroupState::free)
            continue;
        if (grp.used == 0) {
            release_group(g);
        } else if (grp.state == GroupState::full && grp.used < grp.members.size() &&
                   open_[grp.size_idx] == npos) {
            grp.state = GroupState::open;
            open_[grp.size_idx] = g;
        }
    }
}

void CacheEngine::after_request() {
    ++stats_.requests;
    if (opt_.flush_interval != 0 && stats_.requests % opt_.flush_interval == 0) {
        flush();
        ++stats_.periodic_flushes;
    }
}

std::uint32_t CacheEngine::open_groups() const noexcept {
    return static_cast<std::uint32_t>(std::count_if(open_.begin(), open_.end(), [](auto g) { return g != npos; }));
}

std::vector<BlockRecord> CacheEngine::contents_snapshot() const {
    std::vector<BlockRecord> out;
    out.reserve(live_blocks_);
    for (const Block& b : blocks_)
        if (b.live)
            out.push_back({b.dev, b.offset, size_of(b), b.dirty, b.group, cache_offset(b)});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<GroupRecord> CacheEngine::groups_snapshot() const {
    std::vector<GroupRecord> out;
    out.reserve(groups_.size());
    for (std::uint32_t g = 0; g < groups_.size(); ++g) {
        const Group& grp = groups_[g];
        const bool free = grp.state == GroupState::free;
        out.push_back({g, grp.base, free ? 0 : opt_.sizes[grp.size_idx], grp.used,
                       static_cast<std::uint32_t>(grp.members.size()), grp.state});
    }
    return out;
}

std::optional<BlockRecord> CacheEngine::lru_head() const {
    if (block_lru_.empty())
        return std::nullopt;
    const Block& b = blocks_[block_lru_.front()];
    return BlockRecord{b.dev, b.offset, size_of(b), b.dirty, b.group, cache_offset(b)};
}

std::optional<BlockRecord> CacheEngine::lru_tail() const {
    if (block_lru_.empty())
        return std::nullopt;
    const Block& b = blocks_[block_lru_.back()];
    return BlockRecord{b.dev, b.offset, size_of(b), b.dirty, b.group, cache_offset(b)};
}

std::optional<std::uint32_t> CacheEngine::group_lru_head() const {
    if (group_lru_.empty())
        return std::nullopt;
    return group_lru_.front();
}

std::optional<std::uint32_t> CacheEngine::group_lru_tail() const {
    if (group_lru_.empty())
        return std::nullopt;
    return group_lru_.back();
}

void CacheEngine::check_invariants() const {
    auto fail = [](const std::string& what) { throw std::logic_error("engine invariant: " + what); };

    std::uint64_t live = 0;
    std::vector<std::uint64_t> per_size(opt_.sizes.count(), 0);
    for (std::uint32_t id = 0; id < blocks_.size(); ++id) {
        const Block& b = blocks_[id];
        if (!b.live)
            continue;
        ++live;
        ++per_size[b.size_idx];
        const std::uint64_t size = size_of(b);
        if (b.offset % size != 0)
            fail("block source offset not self-aligned");
        if (find(b.dev, b.size_idx, b.offset) != id)
            fail("live block missing from its index");
        if (b.group >= groups_.size())
            fail("block group out of range");
        const Group& grp = groups_[b.group];
        if (grp.state == GroupState::free || grp.size_idx != b.size_idx)
            fail("block lives in a free group or one of another size");
        if (b.slot >= grp.members.size() || grp.members[b.slot] != id)
            fail("group slot does not point back at block");
        if (!block_lru_.linked(id))
            fail("live block not in block LRU");
        if (b.dirty && opt_.policy != WritePolicy::write_back)
            fail("dirty block under write-through");
    }
    if (live != live_blocks_ || per_size != per_size_live_)
        fail("live block counters out of sync");
    std::uint64_t indexed = 0;
    for (const auto& map : index_)
        indexed += map.size();
    if (indexed != live)
        fail("index holds entries for dead blocks");
    if (block_lru_.size() != live)
        fail("block LRU size differs from live block count");

    std::uint32_t active = 0;
    std::vector<bool> on_free_list(groups_.size(), false);
    for (auto g : free_extents_) {
        if (on_free_list[g])
            fail("extent on free list twice");
        on_free_list[g] = true;
    }
    for (std::uint32_t g = 0; g < groups_.size(); ++g) {
        const Group& grp = groups_[g];
        if (grp.state == GroupState::free) {
            if (!on_free_list[g] || group_lru_.linked(g))
                fail("free group not on free list or still in group LRU");
            continue;
        }
        ++active;
        if (on_free_list[g] || !group_lru_.linked(g))
            fail("active group on free list or missing from group LRU");
        const auto members = static_cast<std::uint32_t>(
            std::count_if(grp.members.begin(), grp.members.end(), [](auto m) { return m != npos; }));
        if (members != grp.used || grp.used == 0 || grp.used > grp.members.size())
            fail("group occupancy mismatch");
        if (grp.members.size() != opt_.sizes.group_size() / opt_.sizes[grp.size_idx])
            fail("group slot count mismatch");
        if (grp.state == GroupState::open && (open_[grp.size_idx] != g || grp.used == grp.members.size()))
            fail("open group not registered or already full");
        if (grp.state == GroupState::full && open_[grp.size_idx] == g)
            fail("full group registered as open");
    }
    if (group_lru_.size() != active)
        fail("group LRU size differs from active group count");
    for (std::uint32_t s = 0; s < open_.size(); ++s)
        if (open_[s] != npos && (groups_[open_[s]].state != GroupState::open || groups_[open_[s]].size_idx != s))
            fail("open group table inconsistent");
    if (groups_.size() * opt_.sizes.group_size() > opt_.capacity)
        fail("group extents exceed capacity");

    const auto snap = contents_snapshot();
    for (std::size_t i = 1; i < snap.size(); ++i)
        if (snap[i].dev == snap[i - 1].dev &&
            snap[i - 1].source_offset + snap[i - 1].size > snap[i].source_offset)
            fail("resident blocks overlap");
}

}  // namespace vbcache
