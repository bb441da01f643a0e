#ifndef RXPROBE_NN_HPP
#define RXPROBE_NN_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "rxprobe/tensor.hpp"

namespace rxprobe {

// ---------------------------------------------------------------------------
// Layer kernels. Forward/backward pairs over TensorT<Real>; every reduction
// accumulates in double. Backward functions accumulate (+=) into grad buffers.
// ---------------------------------------------------------------------------

// Dilated 2D convolution with "same" zero padding. input: Ci x H x W,
// kernel: Co x Ci x kh x kw (odd kh, kw), output: Co x H x W.
template <class Real>
TensorT<Real> conv2d_forward(const TensorT<Real>& in, const TensorT<Real>& ker,
                             int dilation_h, int dilation_w) {
    require(in.shape.size() == 3, "conv2d: input must be CxHxW");
    require(ker.shape.size() == 4, "conv2d: kernel must be CoxCixKhxKw");
    require(in.shape[0] == ker.shape[1], "conv2d: input channel count does not match kernel");
    require(dilation_h >= 1 && dilation_w >= 1, "conv2d: dilations must be >= 1");
    require(ker.shape[2] % 2 == 1 && ker.shape[3] % 2 == 1, "conv2d: kernel dims must be odd");

    const int ci_n = in.shape[0], H = in.shape[1], W = in.shape[2];
    const int co_n = ker.shape[0], kh = ker.shape[2], kw = ker.shape[3];
    const int ch = kh / 2, cw = kw / 2;

    TensorT<Real> out({co_n, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int co = 0; co < co_n; ++co) {
        Real* op = out.data.data() + static_cast<std::size_t>(co) * plane;
        for (int ci = 0; ci < ci_n; ++ci) {
            const Real* ip = in.data.data() + static_cast<std::size_t>(ci) * plane;
            const Real* kp = ker.data.data() +
                             (static_cast<std::size_t>(co) * ci_n + ci) * kh * kw;
            for (int kr = 0; kr < kh; ++kr) {
                const int oy = (kr - ch) * dilation_h;
                const int y0 = std::max(0, -oy), y1 = std::min(H, H - oy);
                for (int kc = 0; kc < kw; ++kc) {
                    const Real w = kp[kr * kw + kc];
                    const int ox = (kc - cw) * dilation_w;
                    const int x0 = std::max(0, -ox), x1 = std::min(W, W - ox);
                    for (int y = y0; y < y1; ++y) {
                        const Real* irow = ip + static_cast<std::size_t>(y + oy) * W + ox;
                        Real* orow = op + static_cast<std::size_t>(y) * W;
                        for (int x = x0; x < x1; ++x) orow[x] += w * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

template <class Real>
void conv2d_backward(const TensorT<Real>& in, const TensorT<Real>& ker,
                     int dilation_h, int dilation_w, const TensorT<Real>& gout,
                     TensorT<Real>* gin, TensorT<Real>* gker) {
    const int ci_n = in.shape[0], H = in.shape[1], W = in.shape[2];
    const int co_n = ker.shape[0], kh = ker.shape[2], kw = ker.shape[3];
    const int ch = kh / 2, cw = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    for (int co = 0; co < co_n; ++co) {
        const Real* gp = gout.data.data() + static_cast<std::size_t>(co) * plane;
        for (int ci = 0; ci < ci_n; ++ci) {
            const Real* ip = in.data.data() + static_cast<std::size_t>(ci) * plane;
            Real* gip = gin ? gin->data.data() + static_cast<std::size_t>(ci) * plane : nullptr;
            const std::size_t kbase = (static_cast<std::size_t>(co) * ci_n + ci) * kh * kw;
            for (int kr = 0; kr < kh; ++kr) {
                const int oy = (kr - ch) * dilation_h;
                const int y0 = std::max(0, -oy), y1 = std::min(H, H - oy);
                for (int kc = 0; kc < kw; ++kc) {
                    const int ox = (kc - cw) * dilation_w;
                    const int x0 = std::max(0, -ox), x1 = std::min(W, W - ox);
                    const Real w = ker.data[kbase + kr * kw + kc];
                    double wsum = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const Real* irow = ip + static_cast<std::size_t>(y + oy) * W + ox;
                        const Real* grow = gp + static_cast<std::size_t>(y) * W;
                        if (gip) {
                            Real* girow = gip + static_cast<std::size_t>(y + oy) * W + ox;
                            for (int x = x0; x < x1; ++x) {
                                girow[x] += w * grow[x];
                                wsum += static_cast<double>(grow[x]) * irow[x];
                            }
                        } else {
                            for (int x = x0; x < x1; ++x)
                                wsum += static_cast<double>(grow[x]) * irow[x];
                        }
                    }
                    if (gker) gker->data[kbase + kr * kw + kc] += static_cast<Real>(wsum);
                }
            }
        }
    }
}

// y = W x + b. weight: m x n, x: n, bias: m (bias may be empty).
template <class Real>
TensorT<Real> dense_forward(const TensorT<Real>& x, const TensorT<Real>& weight,
                            const TensorT<Real>& bias) {
    require(weight.shape.size() == 2, "dense: weight must be MxN");
    const int m = weight.shape[0], n = weight.shape[1];
    require(static_cast<int>(x.numel()) == n, "dense: input size does not match weight");
    TensorT<Real> y({m});
    for (int i = 0; i < m; ++i) {
        const Real* wrow = weight.data.data() + static_cast<std::size_t>(i) * n;
        double acc = bias.numel() ? static_cast<double>(bias.data[i]) : 0.0;
        for (int j = 0; j < n; ++j) acc += static_cast<double>(wrow[j]) * x.data[j];
        y.data[i] = static_cast<Real>(acc);
    }
    return y;
}

template <class Real>
void dense_backward(const TensorT<Real>& x, const TensorT<Real>& weight,
                    const TensorT<Real>& gout, TensorT<Real>* gx,
                    TensorT<Real>* gweight, TensorT<Real>* gbias) {
    const int m = weight.shape[0], n = weight.shape[1];
    for (int i = 0; i < m; ++i) {
        const Real g = gout.data[i];
        const Real* wrow = weight.data.data() + static_cast<std::size_t>(i) * n;
        if (gx) {
            Real* gxp = gx->data.data();
            for (int j = 0; j < n; ++j) gxp[j] += wrow[j] * g;
        }
        if (gweight) {
            Real* gw = gweight->data.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) gw[j] += g * x.data[j];
        }
        if (gbias) gbias->data[i] += g;
    }
}

template <class Real>
TensorT<Real> relu_forward(const TensorT<Real>& x) {
    TensorT<Real> y = x;
    for (Real& v : y.data) v = v > Real(0) ? v : Real(0);
    return y;
}

template <class Real>
void relu_backward(const TensorT<Real>& x, const TensorT<Real>& gout, TensorT<Real>* gx) {
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (x.data[i] > Real(0)) gx->data[i] += gout.data[i];
}

template <class Real>
TensorT<Real> sigmoid_forward(const TensorT<Real>& x) {
    TensorT<Real> y = x;
    for (Real& v : y.data) v = static_cast<Real>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    return y;
}

template <class Real>
void sigmoid_backward(const TensorT<Real>& y, const TensorT<Real>& gout, TensorT<Real>* gx) {
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double s = static_cast<double>(y.data[i]);
        gx->data[i] += static_cast<Real>(static_cast<double>(gout.data[i]) * s * (1.0 - s));
    }
}

// Channel-wise mean over the spatial grid: C x H x W -> C.
template <class Real>
TensorT<Real> global_avg_pool_forward(const TensorT<Real>& x) {
    require(x.shape.size() == 3, "global_avg_pool: input must be CxHxW");
    const int C = x.shape[0];
    const std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
    require(plane > 0, "global_avg_pool: empty grid");
    TensorT<Real> y({C});
    for (int c = 0; c < C; ++c) {
        const Real* p = x.data.data() + static_cast<std::size_t>(c) * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        y.data[c] = static_cast<Real>(acc / static_cast<double>(plane));
    }
    return y;
}

template <class Real>
void global_avg_pool_backward(const TensorT<Real>& x, const TensorT<Real>& gout,
                              TensorT<Real>* gx) {
    const int C = x.shape[0];
    const std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
    for (int c = 0; c < C; ++c) {
        const Real g = static_cast<Real>(static_cast<double>(gout.data[c]) /
                                         static_cast<double>(plane));
        Real* p = gx->data.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += g;
    }
}

enum class LossKind { bce, mse };

namespace detail {
template <class Real>
void check_loss_inputs(const TensorT<Real>& pred, const TensorT<Real>& target) {
    require(pred.same_shape(target), "loss: pred/target shape mismatch");
    require(pred.numel() > 0, "loss: empty input");
    for (std::size_t i = 0; i < pred.numel(); ++i)
        require(!std::isnan(static_cast<double>(pred.data[i])) &&
                    !std::isnan(static_cast<double>(target.data[i])),
                "loss: NaN in inputs");
}
inline constexpr double kBceClamp = 1e-7;  // keeps log() finite at saturated probabilities
}  // namespace detail

// Mean-reduced scalar loss. bce expects probabilities in (0,1) and 0/1
// targets; mse is the plain average of squared differences.
template <class Real>
double loss_forward(const TensorT<Real>& pred, const TensorT<Real>& target, LossKind kind) {
    detail::check_loss_inputs(pred, target);
    const std::size_t n = pred.numel();
    double acc = 0.0;
    if (kind == LossKind::mse) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(pred.data[i]) - target.data[i];
            acc += d * d;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = std::clamp(static_cast<double>(pred.data[i]),
                                        detail::kBceClamp, 1.0 - detail::kBceClamp);
            const double t = static_cast<double>(target.data[i]);
            acc -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
        }
    }
    return acc / static_cast<double>(n);
}

template <class Real>
void loss_backward(const TensorT<Real>& pred, const TensorT<Real>& target, LossKind kind,
                   double gout, TensorT<Real>* gpred) {
    const std::size_t n = pred.numel();
    const double scale = gout / static_cast<double>(n);
    if (kind == LossKind::mse) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(pred.data[i]) - target.data[i];
            gpred->data[i] += static_cast<Real>(2.0 * d * scale);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = static_cast<double>(pred.data[i]);
            if (p <= detail::kBceClamp || p >= 1.0 - detail::kBceClamp) continue;
            const double t = static_cast<double>(target.data[i]);
            gpred->data[i] += static_cast<Real>((p - t) / (p * (1.0 - p)) * scale);
        }
    }
}

// ---------------------------------------------------------------------------
// GradientTape: records the forward graph and replays it in reverse. One tape
// per forward pass; parameters live outside the tape and receive accumulated
// gradients, so batching is a sum of per-instance backward passes.
// ---------------------------------------------------------------------------
template <class Real>
class GradientTape {
  public:
    using T = TensorT<Real>;

    int constant(T value) { return push(std::move(value), nullptr, nullptr, false); }

    // value/grad stay owned by the caller; backward accumulates into *grad.
    int parameter(T* value, T* grad) {
        require(value && grad && value->same_shape(*grad), "tape: parameter/grad mismatch");
        return push(T(), value, grad, true);
    }

    const T& value(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.pvalue ? *n.pvalue : n.val;
    }

    int conv2d(int x, int w, int dilation_h, int dilation_w, int bias = -1) {
        T out = conv2d_forward(value(x), value(w), dilation_h, dilation_w);
        if (bias >= 0) {
            const T& b = value(bias);
            require(static_cast<int>(b.numel()) == out.shape[0], "conv2d: bias size mismatch");
            const std::size_t plane = static_cast<std::size_t>(out.shape[1]) * out.shape[2];
            for (int c = 0; c < out.shape[0]; ++c) {
                Real* p = out.data.data() + static_cast<std::size_t>(c) * plane;
                const Real bv = b.data[c];
                for (std::size_t i = 0; i < plane; ++i) p[i] += bv;
            }
        }
        const int id = push(std::move(out), nullptr, nullptr,
                            needs(x) || needs(w) || (bias >= 0 && needs(bias)));
        if (!nodes_.back().needs_grad) return id;
        nodes_.back().back = [this, x, w, bias, dilation_h, dilation_w, id] {
            conv2d_backward(value(x), value(w), dilation_h, dilation_w, grad(id),
                            needs(x) ? &grad_buf(x) : nullptr,
                            needs(w) ? &grad_buf(w) : nullptr);
            if (bias >= 0 && needs(bias)) {
                T& gb = grad_buf(bias);
                const T& g = grad(id);
                const std::size_t plane =
                    static_cast<std::size_t>(g.shape[1]) * g.shape[2];
                for (int c = 0; c < g.shape[0]; ++c) {
                    const Real* p = g.data.data() + static_cast<std::size_t>(c) * plane;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                    gb.data[c] += static_cast<Real>(acc);
                }
            }
        };
        return id;
    }

    int dense(int x, int w, int bias) {
        T out = dense_forward(value(x), value(w), value(bias));
        const int id = push(std::move(out), nullptr, nullptr,
                            needs(x) || needs(w) || needs(bias));
        if (!nodes_.back().needs_grad) return id;
        nodes_.back().back = [this, x, w, bias, id] {
            dense_backward(value(x), value(w), grad(id),
                           needs(x) ? &grad_buf(x) : nullptr,
                           needs(w) ? &grad_buf(w) : nullptr,
                           needs(bias) ? &grad_buf(bias) : nullptr);
        };
        return id;
    }

    int relu(int x) {
        const int id = push(relu_forward(value(x)), nullptr, nullptr, needs(x));
        if (nodes_.back().needs_grad)
            nodes_.back().back = [this, x, id] {
                relu_backward(value(x), grad(id), &grad_buf(x));
            };
        return id;
    }

    int sigmoid(int x) {
        const int id = push(sigmoid_forward(value(x)), nullptr, nullptr, needs(x));
        if (nodes_.back().needs_grad)
            nodes_.back().back = [this, x, id] {
                sigmoid_backward(value(id), grad(id), &grad_buf(x));
            };
        return id;
    }

    int add(int a, int b) {
        const T& va = value(a);
        const T& vb = value(b);
        require(va.same_shape(vb), "add: shape mismatch");
        T out = va;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += vb.data[i];
        const int id = push(std::move(out), nullptr, nullptr, needs(a) || needs(b));
        if (nodes_.back().needs_grad)
            nodes_.back().back = [this, a, b, id] {
                const T& g = grad(id);
                if (needs(a)) {
                    T& ga = grad_buf(a);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
                }
                if (needs(b)) {
                    T& gb = grad_buf(b);
                    for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i];
                }
            };
        return id;
    }

    int global_avg_pool(int x) {
        const int id = push(global_avg_pool_forward(value(x)), nullptr, nullptr, needs(x));
        if (nodes_.back().needs_grad)
            nodes_.back().back = [this, x, id] {
                global_avg_pool_backward(value(x), grad(id), &grad_buf(x));
            };
        return id;
    }

    int flatten(int x) {
        T out = value(x);
        out.shape = {static_cast<int>(out.numel())};
        const int id = push(std::move(out), nullptr, nullptr, needs(x));
        if (nodes_.back().needs_grad)
            nodes_.back().back = [this, x, id] {
                const T& g = grad(id);
                T& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
            };
        return id;
    }

    // Scalar mean-reduced loss against a fixed target.
    int loss(int pred, T target, LossKind kind) {
        const double v = loss_forward(value(pred), target, kind);
        T out({1});
        out.data[0] = static_cast<Real>(v);
        loss_value_ = v;
        const int id = push(std::move(out), nullptr, nullptr, needs(pred));
        if (nodes_.back().needs_grad) {
            auto tgt = std::make_shared<T>(std::move(target));
            nodes_.back().back = [this, pred, id, kind, tgt] {
                loss_backward(value(pred), *tgt, kind,
                              static_cast<double>(grad(id).data[0]), &grad_buf(pred));
            };
        }
        return id;
    }

    // Exact loss in double before Real rounding (useful when Real is float).
    double loss_value() const { return loss_value_; }

    // Reverse pass from `root`, seeding d(root)/d(root) = seed. Gradients of
    // parameters accumulate into their external buffers.
    void backward(int root, Real seed = Real(1)) {
        T& rg = grad_buf(root);  // sizes the buffer; roots are loss nodes, not parameters
        rg.data.assign(value(root).numel(), seed);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (i > root || !n.needs_grad || !n.back) continue;
            if (!n.pgrad && n.grad.numel() == 0) continue;  // never reached from root
            n.back();
        }
    }

  private:
    struct Node {
        T val;
        T* pvalue = nullptr;
        T grad;           // lazily sized
        T* pgrad = nullptr;
        bool needs_grad = false;
        std::function<void()> back;
    };

    bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    T& grad_buf(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.pgrad) return *n.pgrad;
        if (n.grad.numel() != value(id).numel()) {
            n.grad.shape = value(id).shape;
            n.grad.data.assign(value(id).numel(), Real(0));
        }
        return n.grad;
    }

    const T& grad(int id) {
        return grad_buf(id);
    }

    int push(T val, T* pvalue, T* pgrad, bool needs_grad) {
        Node n;
        n.val = std::move(val);
        n.pvalue = pvalue;
        n.pgrad = pgrad;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    double loss_value_ = 0.0;
};

using Tape = GradientTape<float>;

}  // namespace rxprobe

#endif
