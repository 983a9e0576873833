#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace vbcache {

/// Doubly linked recency list over dense integer ids [0, capacity). Links live
/// in side arrays, so membership changes never allocate. Front is most recent.
class LruList {
public:
    static constexpr std::uint32_t npos = UINT32_MAX;

    explicit LruList(std::uint32_t capacity = 0)
        : prev_(capacity, npos), next_(capacity, npos), linked_(capacity, false) {}

    bool empty() const noexcept { return head_ == npos; }
    std::uint32_t size() const noexcept { return size_; }
    std::uint32_t front() const noexcept { return head_; }
    std::uint32_t back() const noexcept { return tail_; }
    bool linked(std::uint32_t id) const noexcept { return linked_[id]; }
    std::uint32_t next(std::uint32_t id) const noexcept { return next_[id]; }
    std::uint32_t prev(std::uint32_t id) const noexcept { return prev_[id]; }

    void push_front(std::uint32_t id) {
        assert(!linked_[id]);
        prev_[id] = npos;
        next_[id] = head_;
        if (head_ != npos)
            prev_[head_] = id;
        else
            tail_ = id;
        head_ = id;
        linked_[id] = true;
        ++size_;
    }

    void remove(std::uint32_t id) {
        assert(linked_[id]);
        if (prev_[id] != npos)
            next_[prev_[id]] = next_[id];
        else
            head_ = next_[id];
        if (next_[id] != npos)
            prev_[next_[id]] = prev_[id];
        else
            tail_ = prev_[id];
        prev_[id] = next_[id] = npos;
        linked_[id] = false;
        --size_;
    }

    void move_to_front(std::uint32_t id) {
        if (head_ == id)
            return;
        remove(id);
        push_front(id);
    }

private:
    std::vector<std::uint32_t> prev_;
    std::vector<std::uint32_t> next_;
    std::vector<bool> linked_;
    std::uint32_t head_ = npos;
    std::uint32_t tail_ = npos;
    std::uint32_t size_ = 0;
};

}  // namespace vbcache
