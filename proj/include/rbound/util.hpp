#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rbound {

// Deterministic 64-bit mixing (splitmix64 finalizer). Used to derive
// per-instance and per-sample seeds so that any record can be recomputed
// in isolation, which is what makes kill/resume byte-identical.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ b);
}

template <typename... Rest>
std::uint64_t mix64(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return mix64(mix64(a, b), static_cast<std::uint64_t>(rest)...);
}

// FNV-1a over bytes; stable across platforms, used for cache keys and
// suite fingerprints.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline double logistic(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: p must be in (0,1)");
    return std::log(p / (1.0 - p));
}

// Renders a positive number the way budget clauses are written in prompts:
// 150000 -> "1.5e5", 100000 -> "1e5", 42 -> "42".
inline std::string compact_number(double v) {
    if (v <= 0 || v != std::floor(v) || v < 1000) {
        // small or non-integral values render plainly
        if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
        std::string s = std::to_string(v);
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    }
    int exp = 0;
    double m = v;
    while (m >= 10.0) {
        m /= 10.0;
        ++exp;
    }
    // keep up to 6 significant digits in the mantissa
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", m);
    std::string mant(buf);
    while (!mant.empty() && mant.back() == '0') mant.pop_back();
    if (!mant.empty() && mant.back() == '.') mant.pop_back();
    return mant + "e" + std::to_string(exp);
}

} // namespace rbound
