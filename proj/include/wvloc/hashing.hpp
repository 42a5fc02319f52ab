#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace wvloc {

/// FNV-1a over a byte string. Used for config hashes and manifest file hashes;
/// stability across platforms matters more than collision resistance here.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string to_hex16(std::uint64_t v) {
    static const char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

inline std::string fnv1a64_hex(std::string_view bytes) {
    return to_hex16(fnv1a64(bytes));
}

}  // namespace wvloc
