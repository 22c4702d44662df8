#pragma once

#include <cstdint>

namespace hkv {

/// 32-bit index entry for a flash-resident object.
///
///   bit 31     valid
///   bit 30     ghost (scheduled for eviction when its segment is erased)
///   bits 28-29 CLOCK
///   bits 24-27 placement hash function id
///   bits 0-23  segment sequence number (low 24 bits)
///
/// An invalid entry is all-zero.
class FlashEntry {
public:
    static constexpr std::uint32_t kSeqBits = 24;
    static constexpr std::uint32_t kSeqMask = (1u << kSeqBits) - 1;

    constexpr FlashEntry() = default;
    constexpr explicit FlashEntry(std::uint32_t raw) : raw_(raw) {}

    static constexpr FlashEntry make(std::uint64_t seq, unsigned hash_fn_id, unsigned clock, bool ghost = false)
    {
        return FlashEntry((1u << 31) | (ghost ? 1u << 30 : 0u) | ((clock & 0x3u) << 28) |
                          ((hash_fn_id & 0xfu) << 24) | (static_cast<std::uint32_t>(seq) & kSeqMask));
    }

    constexpr std::uint32_t raw() const noexcept { return raw_; }
    constexpr bool valid() const noexcept { return (raw_ >> 31) != 0; }
    constexpr bool ghost() const noexcept { return ((raw_ >> 30) & 1u) != 0; }
    constexpr unsigned clock() const noexcept { return (raw_ >> 28) & 0x3u; }
    constexpr unsigned hash_fn_id() const noexcept { return (raw_ >> 24) & 0xfu; }
    constexpr std::uint32_t seq24() const noexcept { return raw_ & kSeqMask; }

    constexpr FlashEntry with_ghost(bool ghost) const noexcept
    {
        return FlashEntry(ghost ? raw_ | (1u << 30) : raw_ & ~(1u << 30));
    }

    constexpr FlashEntry with_clock(unsigned clock) const noexcept
    {
        return FlashEntry((raw_ & ~(0x3u << 28)) | ((clock & 0x3u) << 28));
    }

    friend constexpr bool operator==(FlashEntry, FlashEntry) = default;

private:
    std::uint32_t raw_ = 0;
};

static_assert(sizeof(FlashEntry) == 4);

}  // namespace hkv
