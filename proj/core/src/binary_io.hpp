#pragma once

// Little-endian byte helpers shared by the cloud and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pcmae::detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

/// Bounds-checked cursor. `fail` is called with the offending offset.
class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    std::string_view take(std::size_t n, const char* what) {
        if (remaining() < n)
            throw std::out_of_range(std::string("truncated ") + what + " at byte offset " + std::to_string(pos_) +
                                    " (need " + std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint32_t u32(const char* what) {
        const auto s = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }

    std::uint64_t u64(const char* what) {
        const auto s = take(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace pcmae::detail
