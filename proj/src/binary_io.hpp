#pragma once

// Internal little-endian serialization helpers for the binary file formats.

#include <bit>
#include <cstdint>
#include <string>

#include "styleforge/errors.hpp"

namespace styleforge::detail {

inline void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<uint32_t>(v));
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    size_t offset() const { return offset_; }

    void need(size_t n, const char* what) {
        if (offset_ + n > bytes_.size()) {
            throw FormatError(path_ + ": truncated while reading " + std::string(what) +
                              " at byte offset " + std::to_string(offset_));
        }
    }

    uint16_t u16(const char* what) {
        need(2, what);
        const uint16_t v = static_cast<uint16_t>(byte(0) | (static_cast<uint16_t>(byte(1)) << 8));
        offset_ += 2;
        return v;
    }

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte(i)) << (8 * i);
        offset_ += 4;
        return v;
    }

    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte(i)) << (8 * i);
        offset_ += 8;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(offset_, n);
        offset_ += n;
        return s;
    }

    bool exhausted() const { return offset_ == bytes_.size(); }
    const std::string& path() const { return path_; }

private:
    uint8_t byte(int i) const { return static_cast<uint8_t>(bytes_[offset_ + i]); }

    const std::string& bytes_;
    std::string path_;
    size_t offset_ = 0;
};

} // namespace styleforge::detail
