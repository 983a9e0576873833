#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

namespace vbcache {

using DeviceId = std::uint32_t;

/// Raised by a backing store when an I/O cannot be completed.
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The slow storage behind the cache ("core"). Data spans are either empty
/// (accounting-only callers) or exactly `length` bytes long.
class BackingStore {
public:
    virtual ~BackingStore() = default;

    virtual void read(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                      std::span<std::byte> dst) = 0;
    virtual void write(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                       std::span<const std::byte> src) = 0;

    /// True when the store keeps real bytes, so callers must pass data spans.
    virtual bool needs_data() const noexcept { return false; }
};

/// Discards writes, reads back zeros, counts traffic.
class NullStore final : public BackingStore {
public:
    void read(DeviceId, std::uint64_t, std::uint64_t length, std::span<std::byte> dst) override;
    void write(DeviceId, std::uint64_t, std::uint64_t length, std::span<const std::byte>) override;

    std::uint64_t read_bytes() const noexcept { return read_bytes_; }
    std::uint64_t write_bytes() const noexcept { return write_bytes_; }
    std::uint64_t read_ops() const noexcept { return read_ops_; }
    std::uint64_t write_ops() const noexcept { return write_ops_; }

private:
    std::uint64_t read_bytes_ = 0;
    std::uint64_t write_bytes_ = 0;
    std::uint64_t read_ops_ = 0;
    std::uint64_t write_ops_ = 0;
};

/// One sparse file per device under `dir`, named dev<N>.img. Reads past the
/// end of a file return zeros.
class FileStore final : public BackingStore {
public:
    explicit FileStore(std::filesystem::path dir);
    ~FileStore() override;
    FileStore(const FileStore&) = delete;
    FileStore& operator=(const FileStore&) = delete;

    void read(DeviceId dev, std::uint64_t offset, std::uint64_t length,
              std::span<std::byte> dst) override;
    void write(DeviceId dev, std::uint64_t offset, std::uint64_t length,
               std::span<const std::byte> src) override;
    bool needs_data() const noexcept override { return true; }

    std::filesystem::path path_for(DeviceId dev) const;

private:
    int fd_for(DeviceId dev);

    std::filesystem::path dir_;
    std::map<DeviceId, int> fds_;
};

}  // namespace vbcache
