#pragma once

// On-flash object record:
//   [key_len: u8][value_len: u32 little-endian][key bytes][value bytes]
// A zero key_len byte never starts a record, so zero-filled gaps between records are
// distinguishable from record starts.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "hkv/core.hpp"

namespace hkv {

inline constexpr std::size_t kRecordHeaderSize = 5;
inline constexpr std::uint64_t kMaxValueLength = std::numeric_limits<std::uint32_t>::max();

struct RecordHeader {
    std::uint8_t key_len = 0;
    std::uint32_t value_len = 0;

    std::size_t total_size() const noexcept { return kRecordHeaderSize + key_len + value_len; }
};

constexpr std::size_t record_size(std::size_t key_len, std::size_t value_len) noexcept
{
    return kRecordHeaderSize + key_len + value_len;
}

inline std::size_t record_size(const Key& key, std::string_view value) noexcept
{
    return record_size(key.size(), value.size());
}

/// Encodes into `out`, which must hold at least record_size(key, value) bytes.
inline void encode_record(std::span<char> out, const Key& key, std::string_view value)
{
    if (value.size() > kMaxValueLength) {
        throw Error(ErrorCode::oversize, "value longer than 2^32-1 bytes");
    }
    const std::size_t total = record_size(key, value);
    if (out.size() < total) {
        throw Error(ErrorCode::out_of_range, "record does not fit output buffer");
    }
    const auto value_len = static_cast<std::uint32_t>(value.size());
    out[0] = static_cast<char>(static_cast<std::uint8_t>(key.size()));
    for (int i = 0; i < 4; ++i) {
        out[1 + i] = static_cast<char>((value_len >> (8 * i)) & 0xffu);
    }
    std::copy(key.view().begin(), key.view().end(), out.begin() + kRecordHeaderSize);
    std::copy(value.begin(), value.end(), out.begin() + static_cast<std::ptrdiff_t>(kRecordHeaderSize + key.size()));
}

inline std::string serialize_record(const Key& key, std::string_view value)
{
    if (value.size() > kMaxValueLength) {
        throw Error(ErrorCode::oversize, "value longer than 2^32-1 bytes");
    }
    std::string out(record_size(key, value), '\0');
    encode_record(out, key, value);
    return out;
}

/// Reads the 5-byte header. Returns nullopt when fewer than 5 bytes are available or
/// the key length byte is zero (no record starts there).
inline std::optional<RecordHeader> peek_header(std::string_view bytes) noexcept
{
    if (bytes.size() < kRecordHeaderSize) {
        return std::nullopt;
    }
    RecordHeader header;
    header.key_len = static_cast<std::uint8_t>(bytes[0]);
    if (header.key_len == 0) {
        return std::nullopt;
    }
    for (int i = 0; i < 4; ++i) {
        header.value_len |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[1 + i])) << (8 * i);
    }
    return header;
}

/// Views into a record held in a larger buffer.
struct RecordView {
    std::string_view key;
    std::string_view value;
    std::size_t size = 0;
};

/// Decodes the record at the front of `bytes`; nullopt if the header is invalid or the
/// buffer is truncated.
inline std::optional<RecordView> decode_record(std::string_view bytes) noexcept
{
    auto header = peek_header(bytes);
    if (!header || bytes.size() < header->total_size()) {
        return std::nullopt;
    }
    RecordView view;
    view.key = bytes.substr(kRecordHeaderSize, header->key_len);
    view.value = bytes.substr(kRecordHeaderSize + header->key_len, header->value_len);
    view.size = header->total_size();
    return view;
}

inline std::pair<Key, std::string> deserialize_record(std::string_view bytes)
{
    auto view = decode_record(bytes);
    if (!view) {
        throw Error(ErrorCode::parse_error, "malformed or truncated record");
    }
    return {Key(view->key), std::string(view->value)};
}

}  // namespace hkv
