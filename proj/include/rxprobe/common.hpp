#ifndef RXPROBE_COMMON_HPP
#define RXPROBE_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rxprobe {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

// SplitMix64 finalizer; derives independent sub-seeds from one root seed so
// that every random decision in a run can be traced back to a single number.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Dense row-major double matrix used by the estimators and reductions.
struct MatrixD {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    MatrixD() = default;
    MatrixD(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {
        require(r >= 0 && c >= 0, "MatrixD: negative dimension");
    }

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
};

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation (divide by N).
inline double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace rxprobe

#endif
