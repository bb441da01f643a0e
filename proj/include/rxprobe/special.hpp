#ifndef RXPROBE_SPECIAL_HPP
#define RXPROBE_SPECIAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "rxprobe/common.hpp"

namespace rxprobe {

// psi(x) for x > 0. Arguments below 6 are lifted with psi(x) = psi(x+1) - 1/x,
// then the asymptotic series with Bernoulli terms through x^-14 is applied
// (truncation error < 2e-13 at x = 6).
inline double digamma(double x) {
    require(std::isfinite(x) && x > 0.0, "digamma: x must be positive and finite");
    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double t = inv * inv;
    const double series =
        t * (1.0 / 12 -
             t * (1.0 / 120 -
                  t * (1.0 / 252 -
                       t * (1.0 / 240 -
                            t * (1.0 / 132 -
                                 t * (691.0 / 32760 - t * (1.0 / 12)))))));
    return acc + std::log(x) - 0.5 * inv - series;
}

// log(sum_i exp(v_i)) with the usual shift by the maximum. Exact for
// singletons and finite for inputs up to |v| ~ 1e6.
inline double logsumexp(std::span<const double> values) {
    require(!values.empty(), "logsumexp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    if (values.size() == 1) return values[0];
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& values) {
    return logsumexp(std::span<const double>(values));
}

}  // namespace rxprobe

#endif
