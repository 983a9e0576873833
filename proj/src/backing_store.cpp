#include "vbcache/backing_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace vbcache {

void NullStore::read(DeviceId, std::uint64_t, std::uint64_t length, std::span<std::byte> dst) {
    std::fill(dst.begin(), dst.end(), std::byte{0});
    read_bytes_ += length;
    ++read_ops_;
}

void NullStore::write(DeviceId, std::uint64_t, std::uint64_t length, std::span<const std::byte>) {
    write_bytes_ += length;
    ++write_ops_;
}

FileStore::FileStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec)
        throw BackendError("cannot create " + dir_.string() + ": " + ec.message());
}

FileStore::~FileStore() {
    for (auto& [dev, fd] : fds_)
        ::close(fd);
}

std::filesystem::path FileStore::path_for(DeviceId dev) const {
    return dir_ / ("dev" + std::to_string(dev) + ".img");
}

int FileStore::fd_for(DeviceId dev) {
    if (auto it = fds_.find(dev); it != fds_.end())
        return it->second;
    const auto path = path_for(dev);
    int fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd < 0)
        throw BackendError("open " + path.string() + ": " + std::strerror(errno));
    fds_.emplace(dev, fd);
    return fd;
}

void FileStore::read(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                     std::span<std::byte> dst) {
    if (dst.size() != length)
        throw std::invalid_argument("FileStore::read needs a buffer of the request length");
    const int fd = fd_for(dev);
    std::size_t done = 0;
    while (done < length) {
        ssize_t n = ::pread(fd, dst.data() + done, length - done, static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw BackendError("pread dev" + std::to_string(dev) + ": " + std::strerror(errno));
        }
        if (n == 0)
            break;
        done += static_cast<std::size_t>(n);
    }
    std::fill(dst.begin() + static_cast<std::ptrdiff_t>(done), dst.end(), std::byte{0});
}

void FileStore::write(DeviceId dev, std::uint64_t offset, std::uint64_t length,
                      std::span<const std::byte> src) {
    if (src.size() != length)
        throw std::invalid_argument("FileStore::write needs a buffer of the request length");
    const int fd = fd_for(dev);
    std::size_t done = 0;
    while (done < length) {
        ssize_t n = ::pwrite(fd, src.data() + done, length - done, static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw BackendError("pwrite dev" + std::to_string(dev) + ": " + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

}  // namespace vbcache
