#ifndef RXPROBE_TENSOR_HPP
#define RXPROBE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rxprobe/common.hpp"

namespace rxprobe {

// Dense row-major tensor. Parameters and activations are stored in 32-bit
// floats (Tensor); the double instantiation exists for estimator math and for
// finite-difference checks. Reductions accumulate in 64 bits regardless.
template <class Real>
struct TensorT {
    std::vector<int> shape;
    std::vector<Real> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), Real(0)) {}
    TensorT(std::vector<int> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
        require(numel_of(shape) == data.size(), "Tensor: shape/data size mismatch");
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            require(d >= 0, "Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    Real& at3(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    Real at3(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = TensorT<float>;

template <class Real>
std::string shape_str(const TensorT<Real>& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

template <class Real>
void fill_normal(TensorT<Real>& t, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Real& v : t.data) v = static_cast<Real>(dist(rng));
}

template <class Real>
void fill_uniform(TensorT<Real>& t, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Real& v : t.data) v = static_cast<Real>(dist(rng));
}

}  // namespace rxprobe

#endif
