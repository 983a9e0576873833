#include "vbcache/block_size_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <stdexcept>

namespace vbcache {

BlockSizeConfig::BlockSizeConfig(std::vector<std::uint64_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty())
        throw std::invalid_argument("block size list is empty");
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
        if (!is_power_of_two(sizes_[i]))
            throw std::invalid_argument("block size " + std::to_string(sizes_[i]) +
                                        " is not a power of two");
        if (i > 0 && sizes_[i] <= sizes_[i - 1])
            throw std::invalid_argument("block sizes must be strictly increasing");
    }
}

bool BlockSizeConfig::contains(std::uint64_t size) const noexcept {
    return std::binary_search(sizes_.begin(), sizes_.end(), size);
}

std::size_t BlockSizeConfig::index_of(std::uint64_t size) const {
    auto it = std::lower_bound(sizes_.begin(), sizes_.end(), size);
    if (it == sizes_.end() || *it != size)
        throw std::out_of_range("block size " + std::to_string(size) + " not configured");
    return static_cast<std::size_t>(it - sizes_.begin());
}

std::string BlockSizeConfig::to_string() const {
    std::string out;
    for (auto s : sizes_) {
        if (!out.empty())
            out += ',';
        out += format_byte_size(s);
    }
    return out;
}

std::uint64_t parse_byte_size(const std::string& text) {
    std::string_view sv(text);
    while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.front())))
        sv.remove_prefix(1);
    while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.back())))
        sv.remove_suffix(1);
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value);
    if (ec != std::errc() || ptr == sv.data())
        throw std::invalid_argument("bad byte size '" + text + "'");
    std::string_view suffix(ptr, static_cast<std::size_t>(sv.data() + sv.size() - ptr));
    std::uint64_t mult = 1;
    if (!suffix.empty()) {
        switch (std::toupper(static_cast<unsigned char>(suffix.front()))) {
        case 'K': mult = KiB; break;
        case 'M': mult = MiB; break;
        case 'G': mult = GiB; break;
        case 'T': mult = TiB; break;
        case 'B': mult = 1; break;
        default: throw std::invalid_argument("bad byte size suffix in '" + text + "'");
        }
        suffix.remove_prefix(1);
        // accept K, KB, KiB
        if (suffix == "iB" || suffix == "IB" || suffix == "ib" || suffix == "B" || suffix == "b")
            suffix = {};
        if (!suffix.empty())
            throw std::invalid_argument("bad byte size suffix in '" + text + "'");
    }
    if (value != 0 && mult > UINT64_MAX / value)
        throw std::invalid_argument("byte size overflows: '" + text + "'");
    return value * mult;
}

std::string format_byte_size(std::uint64_t bytes) {
    static constexpr std::pair<std::uint64_t, char> units[] = {
        {TiB, 'T'}, {GiB, 'G'}, {MiB, 'M'}, {KiB, 'K'}};
    if (bytes != 0)
        for (auto [unit, c] : units)
            if (bytes % unit == 0)
                return std::to_string(bytes / unit) + c;
    return std::to_string(bytes);
}

BlockSizeConfig parse_block_sizes(const std::string& text) {
    std::vector<std::uint64_t> sizes;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        if (comma == std::string::npos)
            comma = text.size();
        sizes.push_back(parse_byte_size(text.substr(start, comma - start)));
        start = comma + 1;
    }
    return BlockSizeConfig(std::move(sizes));
}

}  // namespace vbcache
