#ifndef RXPROBE_OPTIM_HPP
#define RXPROBE_OPTIM_HPP

#include <cmath>
#include <vector>

#include "rxprobe/tensor.hpp"

namespace rxprobe {

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class Real>
struct AdamWState {
    std::vector<TensorT<Real>> m, v;
    long step_count = 0;

    void init(const std::vector<TensorT<Real>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.shape);
            v.emplace_back(p.shape);
        }
        step_count = 0;
    }
};

// One AdamW update. Weight decay is decoupled (w <- w - lr*wd*w, independent
// of the moment step); moments are bias-corrected; eps sits outside the sqrt.
template <class Real>
void adamw_step(std::vector<TensorT<Real>>& params,
                const std::vector<TensorT<Real>>& grads, AdamWState<Real>& state,
                const AdamWConfig& hp) {
    require(params.size() == grads.size() && params.size() == state.m.size(),
            "adamw_step: parameter/gradient/state count mismatch");
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step_count));
    for (std::size_t p = 0; p < params.size(); ++p) {
        require(params[p].same_shape(grads[p]), "adamw_step: shape mismatch");
        Real* w = params[p].data.data();
        const Real* g = grads[p].data.data();
        Real* m = state.m[p].data.data();
        Real* v = state.v[p].data.data();
        const std::size_t n = params[p].numel();
        for (std::size_t i = 0; i < n; ++i) {
            double wi = static_cast<double>(w[i]);
            wi -= hp.lr * hp.weight_decay * wi;
            const double gi = static_cast<double>(g[i]);
            const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<Real>(wi - hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
        }
    }
}

}  // namespace rxprobe

#endif
