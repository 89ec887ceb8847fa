#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jkge/errors.hpp"

namespace jkge {

/// Empirical quantile of an already-sorted sample, linear interpolation
/// between closest ranks (h = (n-1)q).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DegenerateInputError("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::clamp(std::floor(h), 0.0, double(sorted.size() - 1)));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

inline double median_sorted(std::span<const double> sorted) {
    return quantile_sorted(sorted, 0.5);
}

/// Compensated (Kahan) accumulator: long reductions stay accurate to a few
/// ulps of the result.
struct KahanSum {
    double sum = 0.0;
    double c = 0.0;

    void add(double x) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Purpose-tagged sub-seed: one master seed drives several independent
/// random streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0) {
    return detail::splitmix64(master ^ detail::splitmix64(detail::fnv1a(purpose) + index));
}

/// Write-then-rename so readers never observe a half-written file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IngestionError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw IngestionError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace jkge
