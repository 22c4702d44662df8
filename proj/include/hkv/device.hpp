#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hkv/error.hpp"

namespace hkv {

/// Monotonically increasing segment sequence number. Index entries keep the low 24 bits.
using SegmentSeq = std::uint64_t;

struct DeviceStats {
    std::uint64_t bytes_written_to_flash = 0;
    std::uint64_t segments_written = 0;
    std::uint64_t segments_erased = 0;
    std::uint64_t flash_reads = 0;
    std::uint64_t bytes_read = 0;
};

/// Physical storage for fixed-size slots.
class FlashBackend {
public:
    virtual ~FlashBackend() = default;
    virtual void write_slot(std::uint64_t slot, std::string_view payload) = 0;
    virtual std::string read(std::uint64_t slot, std::uint64_t offset, std::uint64_t len) const = 0;
};

class MemoryBackend final : public FlashBackend {
public:
    MemoryBackend(std::uint64_t slot_count, std::uint64_t slot_size) : slots_(slot_count), slot_size_(slot_size) {}

    void write_slot(std::uint64_t slot, std::string_view payload) override { slots_.at(slot).assign(payload); }

    std::string read(std::uint64_t slot, std::uint64_t offset, std::uint64_t len) const override
    {
        const std::string& data = slots_.at(slot);
        if (data.empty()) {
            return std::string(len, '\0');
        }
        return data.substr(offset, len);
    }

private:
    std::vector<std::string> slots_;
    std::uint64_t slot_size_;
};

/// A single preallocated file; slot i occupies bytes [i * slot_size, (i + 1) * slot_size).
/// With `bypass_cache` set, every write is flushed and dropped from the OS page cache,
/// and read ranges are dropped after reading, so reads hit the device.
class FileBackend final : public FlashBackend {
public:
    struct WriteOp {
        std::uint64_t offset;
        std::uint64_t length;
    };

    FileBackend(std::string path, std::uint64_t slot_count, std::uint64_t slot_size, bool bypass_cache = true,
                bool record_writes = false)
        : path_(std::move(path)), slot_size_(slot_size), capacity_(slot_count * slot_size),
          bypass_cache_(bypass_cache), record_writes_(record_writes)
    {
        fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) {
            throw Error(ErrorCode::io_error, "open " + path_ + ": " + std::strerror(errno));
        }
        if (::ftruncate(fd_, static_cast<off_t>(capacity_)) != 0) {
            const int err = errno;
            ::close(fd_);
            throw Error(ErrorCode::io_error, "ftruncate " + path_ + ": " + std::strerror(err));
        }
    }

    FileBackend(const FileBackend&) = delete;
    FileBackend& operator=(const FileBackend&) = delete;

    ~FileBackend() override
    {
        if (fd_ >= 0) {
            ::close(fd_);
        }
    }

    void write_slot(std::uint64_t slot, std::string_view payload) override
    {
        const std::uint64_t offset = slot * slot_size_;
        std::size_t done = 0;
        while (done < payload.size()) {
            const ssize_t n = ::pwrite(fd_, payload.data() + done, payload.size() - done,
                                       static_cast<off_t>(offset + done));
            if (n < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw Error(ErrorCode::io_error, "pwrite " + path_ + ": " + std::strerror(errno));
            }
            done += static_cast<std::size_t>(n);
        }
        if (bypass_cache_) {
            ::fdatasync(fd_);
            ::posix_fadvise(fd_, static_cast<off_t>(offset), static_cast<off_t>(payload.size()), POSIX_FADV_DONTNEED);
        }
        if (record_writes_) {
            std::lock_guard lock(log_mutex_);
            write_log_.push_back({offset, payload.size()});
        }
    }

    std::string read(std::uint64_t slot, std::uint64_t offset, std::uint64_t len) const override
    {
        std::string out(len, '\0');
        const std::uint64_t base = slot * slot_size_ + offset;
        std::size_t done = 0;
        while (done < len) {
            const ssize_t n = ::pread(fd_, out.data() + done, len - done, static_cast<off_t>(base + done));
            if (n < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw Error(ErrorCode::io_error, "pread " + path_ + ": " + std::strerror(errno));
            }
            if (n == 0) {
                break;  // sparse tail reads as zero
            }
            done += static_cast<std::size_t>(n);
        }
        if (bypass_cache_) {
            ::posix_fadvise(fd_, static_cast<off_t>(base), static_cast<off_t>(len), POSIX_FADV_DONTNEED);
        }
        return out;
    }

    std::vector<WriteOp> write_log() const
    {
        std::lock_guard lock(log_mutex_);
        return write_log_;
    }

    std::uint64_t capacity() const noexcept { return capacity_; }
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    std::uint64_t slot_size_;
    std::uint64_t capacity_;
    bool bypass_cache_;
    bool record_writes_;
    int fd_ = -1;
    mutable std::mutex log_mutex_;
    std::vector<WriteOp> write_log_;
};

/// Flash medium that accepts only whole-segment appends and FIFO erasure.
///
/// Segments are addressed by sequence number; the physical slot is seq mod slot_count.
/// A sequence is live iff oldest_live() <= seq < next_seq(). Reads hold a shared lock,
/// appends and erases an exclusive one, so a slot is never recycled under an in-flight read.
class FlashDevice {
public:
    FlashDevice(std::unique_ptr<FlashBackend> backend, std::uint64_t segment_size, std::uint64_t slot_count)
        : backend_(std::move(backend)), segment_size_(segment_size), slot_count_(slot_count)
    {
        if (slot_count_ == 0 || segment_size_ == 0) {
            throw Error(ErrorCode::invalid_config, "device needs at least one non-empty slot");
        }
    }

    static FlashDevice in_memory(std::uint64_t segment_size, std::uint64_t slot_count)
    {
        return FlashDevice(std::make_unique<MemoryBackend>(slot_count, segment_size), segment_size, slot_count);
    }

    FlashDevice(FlashDevice&& other) noexcept
        : backend_(std::move(other.backend_)), segment_size_(other.segment_size_), slot_count_(other.slot_count_),
          oldest_(other.oldest_), next_(other.next_), segments_written_(other.segments_written_.load()),
          segments_erased_(other.segments_erased_.load()), flash_reads_(other.flash_reads_.load()),
          bytes_read_(other.bytes_read_.load())
    {
    }

    SegmentSeq append_segment(std::string_view payload)
    {
        if (payload.size() != segment_size_) {
            throw Error(ErrorCode::size_mismatch, "payload of " + std::to_string(payload.size()) +
                                                      " bytes, segment is " + std::to_string(segment_size_));
        }
        std::unique_lock lock(mutex_);
        if (next_ - oldest_ >= slot_count_) {
            throw Error(ErrorCode::device_full, "no free slot; erase the oldest segment first");
        }
        const SegmentSeq seq = next_;
        backend_->write_slot(seq % slot_count_, payload);
        ++next_;
        segments_written_.fetch_add(1, std::memory_order_relaxed);
        return seq;
    }

    SegmentSeq erase_oldest()
    {
        std::unique_lock lock(mutex_);
        if (next_ == oldest_) {
            throw Error(ErrorCode::device_empty, "no live segments");
        }
        segments_erased_.fetch_add(1, std::memory_order_relaxed);
        return oldest_++;
    }

    std::string read(SegmentSeq seq, std::uint64_t offset, std::uint64_t len) const
    {
        std::shared_lock lock(mutex_);
        if (seq < oldest_ || seq >= next_) {
            throw Error(ErrorCode::dead_segment, "segment " + std::to_string(seq) + " is not live");
        }
        if (offset > segment_size_ || len > segment_size_ - offset) {
            throw Error(ErrorCode::out_of_range, "read past segment end");
        }
        flash_reads_.fetch_add(1, std::memory_order_relaxed);
        bytes_read_.fetch_add(len, std::memory_order_relaxed);
        return backend_->read(seq % slot_count_, offset, len);
    }

    bool is_live(SegmentSeq seq) const
    {
        std::shared_lock lock(mutex_);
        return seq >= oldest_ && seq < next_;
    }

    SegmentSeq oldest_live() const
    {
        std::shared_lock lock(mutex_);
        return oldest_;
    }

    /// Sequence number the next append will receive.
    SegmentSeq next_seq() const
    {
        std::shared_lock lock(mutex_);
        return next_;
    }

    std::uint64_t live_count() const
    {
        std::shared_lock lock(mutex_);
        return next_ - oldest_;
    }

    bool full() const { return live_count() >= slot_count_; }
    bool empty() const { return live_count() == 0; }

    std::uint64_t slot_of(SegmentSeq seq) const noexcept { return seq % slot_count_; }
    std::uint64_t segment_size() const noexcept { return segment_size_; }
    std::uint64_t slot_count() const noexcept { return slot_count_; }

    DeviceStats stats() const
    {
        DeviceStats s;
        s.segments_written = segments_written_.load(std::memory_order_relaxed);
        s.bytes_written_to_flash = s.segments_written * segment_size_;
        s.segments_erased = segments_erased_.load(std::memory_order_relaxed);
        s.flash_reads = flash_reads_.load(std::memory_order_relaxed);
        s.bytes_read = bytes_read_.load(std::memory_order_relaxed);
        return s;
    }

    FlashBackend& backend() noexcept { return *backend_; }

private:
    std::unique_ptr<FlashBackend> backend_;
    std::uint64_t segment_size_;
    std::uint64_t slot_count_;
    mutable std::shared_mutex mutex_;
    SegmentSeq oldest_ = 0;
    SegmentSeq next_ = 0;
    std::atomic<std::uint64_t> segments_written_{0};
    std::atomic<std::uint64_t> segments_erased_{0};
    mutable std::atomic<std::uint64_t> flash_reads_{0};
    mutable std::atomic<std::uint64_t> bytes_read_{0};
};

}  // namespace hkv
