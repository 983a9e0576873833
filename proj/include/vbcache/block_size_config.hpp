#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vbcache {

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;
inline constexpr std::uint64_t TiB = 1024 * GiB;

/// Largest multiple of block_size that is <= offset. block_size must be > 0.
constexpr std::uint64_t align(std::uint64_t offset, std::uint64_t block_size) noexcept {
    return offset / block_size * block_size;
}

constexpr bool is_power_of_two(std::uint64_t v) noexcept { return v != 0 && (v & (v - 1)) == 0; }

/// Ordered set of supported cache block sizes, smallest first. Every size is a
/// power of two, so each one divides all larger sizes. The largest size is also
/// the group size. A single entry describes a fixed-size cache.
class BlockSizeConfig {
public:
    /// Throws std::invalid_argument when the list is empty, unsorted,
    /// contains duplicates or a size that is not a power of two.
    explicit BlockSizeConfig(std::vector<std::uint64_t> sizes);
    BlockSizeConfig(std::initializer_list<std::uint64_t> sizes)
        : BlockSizeConfig(std::vector<std::uint64_t>(sizes)) {}

    std::span<const std::uint64_t> sizes() const noexcept { return sizes_; }
    std::size_t count() const noexcept { return sizes_.size(); }
    std::uint64_t smallest() const noexcept { return sizes_.front(); }
    std::uint64_t largest() const noexcept { return sizes_.back(); }
    std::uint64_t group_size() const noexcept { return sizes_.back(); }
    std::uint64_t operator[](std::size_t i) const noexcept { return sizes_[i]; }

    bool contains(std::uint64_t size) const noexcept;
    /// Position of size in sizes(); throws std::out_of_range if absent.
    std::size_t index_of(std::uint64_t size) const;

    /// "32K,64K,128K,256K"
    std::string to_string() const;

    friend bool operator==(const BlockSizeConfig&, const BlockSizeConfig&) = default;

private:
    std::vector<std::uint64_t> sizes_;
};

/// Parses a byte count with an optional binary suffix: "4096", "32K", "1M", "2G", "1T".
std::uint64_t parse_byte_size(const std::string& text);
/// Inverse of parse_byte_size for exact multiples; falls back to plain bytes.
std::string format_byte_size(std::uint64_t bytes);
/// Comma-separated list of byte sizes, e.g. "32K,64K,128K,256K".
BlockSizeConfig parse_block_sizes(const std::string& text);

}  // namespace vbcache
