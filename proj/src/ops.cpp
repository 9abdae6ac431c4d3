#include "gfk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gfk {
namespace {

constexpr int64_t kParallelCutoff = 16384;  // elements below this stay serial

int normalize_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw std::invalid_argument(std::string(op) + ": axis out of range for rank " + std::to_string(rank));
    return axis;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

// Splits a shape at `axis` into outer*len*inner for strided axis loops.
struct AxisSplit {
    int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    s.len = shape[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

template <typename F>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* op, F&& f,
                          std::function<void(TensorImpl&, const Tensor&, const Tensor&)> bw) {
    check_same_shape(a, b, op);
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(av.size());
    const int64_t n = static_cast<int64_t>(av.size());
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = f(av[static_cast<size_t>(i)], bv[static_cast<size_t>(i)]);
    Tensor ta = a, tb = b;
    return make_op_result(a.shape(), std::move(out), {a, b},
                          [ta, tb, bw](TensorImpl& self) { bw(self, ta, tb); });
}

void accumulate(TensorImpl& dst, const std::vector<double>& contribution) {
    dst.ensure_grad();
    const int64_t n = static_cast<int64_t>(contribution.size());
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) dst.grad[static_cast<size_t>(i)] += contribution[static_cast<size_t>(i)];
}

template <typename F>
void accumulate_fn(TensorImpl& dst, int64_t n, F&& f) {
    dst.ensure_grad();
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) dst.grad[static_cast<size_t>(i)] += f(i);
}

// Unary op with derivative expressed from input value x and output value y.
template <typename F, typename DF>
Tensor elementwise_unary(const Tensor& x, F&& f, DF&& df) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    const int64_t n = static_cast<int64_t>(xv.size());
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = f(xv[static_cast<size_t>(i)]);
    Tensor tx = x;
    return make_op_result(x.shape(), std::move(out), {x}, [tx, df](TensorImpl& self) {
        TensorImpl& xi = *self.parents[0];
        if (!xi.requires_grad) return;
        const double* gy = self.grad.data();
        const double* xd = xi.data.data();
        const double* yd = self.data.data();
        accumulate_fn(xi, static_cast<int64_t>(xi.data.size()),
                      [&](int64_t i) { return gy[i] * df(xd[i], yd[i]); });
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](TensorImpl& self, const Tensor& ta, const Tensor& tb) {
            if (ta.requires_grad()) accumulate(*ta.impl(), self.grad);
            if (tb.requires_grad()) accumulate(*tb.impl(), self.grad);
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](TensorImpl& self, const Tensor& ta, const Tensor& tb) {
            if (ta.requires_grad()) accumulate(*ta.impl(), self.grad);
            if (tb.requires_grad()) {
                const double* gy = self.grad.data();
                accumulate_fn(*tb.impl(), static_cast<int64_t>(self.grad.size()), [&](int64_t i) { return -gy[i]; });
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](TensorImpl& self, const Tensor& ta, const Tensor& tb) {
            const double* gy = self.grad.data();
            if (ta.requires_grad()) {
                const double* bd = tb.data().data();
                accumulate_fn(*ta.impl(), static_cast<int64_t>(self.grad.size()),
                              [&](int64_t i) { return gy[i] * bd[i]; });
            }
            if (tb.requires_grad()) {
                const double* ad = ta.data().data();
                accumulate_fn(*tb.impl(), static_cast<int64_t>(self.grad.size()),
                              [&](int64_t i) { return gy[i] * ad[i]; });
            }
        });
}

Tensor divide(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "divide", [](double x, double y) { return x / y; },
        [](TensorImpl& self, const Tensor& ta, const Tensor& tb) {
            const double* gy = self.grad.data();
            const double* ad = ta.data().data();
            const double* bd = tb.data().data();
            if (ta.requires_grad())
                accumulate_fn(*ta.impl(), static_cast<int64_t>(self.grad.size()),
                              [&](int64_t i) { return gy[i] / bd[i]; });
            if (tb.requires_grad())
                accumulate_fn(*tb.impl(), static_cast<int64_t>(self.grad.size()),
                              [&](int64_t i) { return -gy[i] * ad[i] / (bd[i] * bd[i]); });
        });
}

Tensor add_scalar(const Tensor& x, double c) {
    return elementwise_unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
    return elementwise_unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1)
        throw std::invalid_argument("scale_by: scale must have one element, got " + shape_str(s.shape()));
    const double sv = s.data()[0];
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    const int64_t n = static_cast<int64_t>(xv.size());
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = xv[static_cast<size_t>(i)] * sv;
    Tensor tx = x, ts = s;
    return make_op_result(x.shape(), std::move(out), {x, s}, [tx, ts](TensorImpl& self) {
        const double* gy = self.grad.data();
        if (tx.requires_grad()) {
            const double sv2 = ts.data()[0];
            accumulate_fn(*tx.impl(), static_cast<int64_t>(self.grad.size()),
                          [&](int64_t i) { return gy[i] * sv2; });
        }
        if (ts.requires_grad()) {
            const double* xd = tx.data().data();
            double acc = 0.0;
            const int64_t m = static_cast<int64_t>(self.grad.size());
            for (int64_t i = 0; i < m; ++i) acc += gy[i] * xd[i];
            ts.impl()->ensure_grad();
            ts.impl()->grad[0] += acc;
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    if (b.rank() != 1 || x.rank() < 1 || x.shape().back() != b.dim(0))
        throw std::invalid_argument("add_bias: bias " + shape_str(b.shape()) + " does not match last axis of " +
                                    shape_str(x.shape()));
    const int64_t width = b.dim(0);
    const int64_t rows = x.numel() / width;
    const auto& xv = x.data();
    const auto& bv = b.data();
    std::vector<double> out(xv.size());
#pragma omp parallel for if (rows * width > kParallelCutoff)
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * width;
        double* yr = out.data() + r * width;
        for (int64_t c = 0; c < width; ++c) yr[c] = xr[c] + bv[static_cast<size_t>(c)];
    }
    Tensor tx = x, tb = b;
    return make_op_result(x.shape(), std::move(out), {x, b}, [tx, tb, rows, width](TensorImpl& self) {
        if (tx.requires_grad()) accumulate(*tx.impl(), self.grad);
        if (tb.requires_grad()) {
            const double* gy = self.grad.data();
            accumulate_fn(*tb.impl(), width, [&](int64_t c) {
                double acc = 0.0;
                for (int64_t r = 0; r < rows; ++r) acc += gy[r * width + c];
                return acc;
            });
        }
    });
}

Tensor exp(const Tensor& x) {
    return elementwise_unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return elementwise_unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& x) {
    return elementwise_unary(x, [](double v) { return std::tanh(v); },
                             [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise_unary(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return elementwise_unary(
        x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

Tensor relu(const Tensor& x) {
    return elementwise_unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                             [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x, int axis) {
    axis = normalize_axis(axis, x.rank(), "softmax");
    const AxisSplit s = split_at(x.shape(), axis);
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
#pragma omp parallel for collapse(2) if (s.outer * s.inner > 64)
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            const int64_t base = o * s.len * s.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t l = 0; l < s.len; ++l) mx = std::max(mx, xv[static_cast<size_t>(base + l * s.inner)]);
            double sum = 0.0;
            for (int64_t l = 0; l < s.len; ++l) {
                const double e = std::exp(xv[static_cast<size_t>(base + l * s.inner)] - mx);
                out[static_cast<size_t>(base + l * s.inner)] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int64_t l = 0; l < s.len; ++l) out[static_cast<size_t>(base + l * s.inner)] *= inv;
        }
    }
    Tensor tx = x;
    return make_op_result(x.shape(), std::move(out), {x}, [tx, s](TensorImpl& self) {
        TensorImpl& xi = *self.parents[0];
        if (!xi.requires_grad) return;
        xi.ensure_grad();
        const double* y = self.data.data();
        const double* gy = self.grad.data();
#pragma omp parallel for collapse(2) if (s.outer * s.inner > 64)
        for (int64_t o = 0; o < s.outer; ++o) {
            for (int64_t in = 0; in < s.inner; ++in) {
                const int64_t base = o * s.len * s.inner + in;
                double dot = 0.0;
                for (int64_t l = 0; l < s.len; ++l) {
                    const int64_t k = base + l * s.inner;
                    dot += gy[k] * y[k];
                }
                for (int64_t l = 0; l < s.len; ++l) {
                    const int64_t k = base + l * s.inner;
                    xi.grad[static_cast<size_t>(k)] += y[k] * (gy[k] - dot);
                }
            }
        }
    });
}

namespace {

// Shared normalization core: layer_norm is group_norm with one group per row
// over the last axis. `rows` index (sample,group) blocks of `block` elements;
// gamma/beta are indexed per element via `param_index`.
struct NormDims {
    int64_t rows, block;
};

Tensor norm_common(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, NormDims nd,
                   std::function<int64_t(int64_t row, int64_t j)> param_index, const char* op) {
    check_same_shape(gamma, beta, op);
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    std::vector<double> mean(static_cast<size_t>(nd.rows));
    std::vector<double> inv_std(static_cast<size_t>(nd.rows));
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
#pragma omp parallel for if (nd.rows * nd.block > kParallelCutoff)
    for (int64_t r = 0; r < nd.rows; ++r) {
        const double* xr = xv.data() + r * nd.block;
        double m = 0.0;
        for (int64_t j = 0; j < nd.block; ++j) m += xr[j];
        m /= static_cast<double>(nd.block);
        double var = 0.0;
        for (int64_t j = 0; j < nd.block; ++j) {
            const double d = xr[j] - m;
            var += d * d;
        }
        var /= static_cast<double>(nd.block);
        const double is = 1.0 / std::sqrt(var + eps);
        mean[static_cast<size_t>(r)] = m;
        inv_std[static_cast<size_t>(r)] = is;
        double* yr = out.data() + r * nd.block;
        for (int64_t j = 0; j < nd.block; ++j) {
            const int64_t p = param_index(r, j);
            yr[j] = (xr[j] - m) * is * gv[static_cast<size_t>(p)] + bv[static_cast<size_t>(p)];
        }
    }
    Tensor tx = x, tg = gamma, tb = beta;
    return make_op_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [tx, tg, tb, nd, param_index, mean = std::move(mean), inv_std = std::move(inv_std)](TensorImpl& self) {
            const double* gy = self.grad.data();
            const double* xd = tx.data().data();
            const double* gv2 = tg.data().data();
            const bool need_x = tx.requires_grad();
            const bool need_g = tg.requires_grad();
            const bool need_b = tb.requires_grad();
            if (need_x) tx.impl()->ensure_grad();
            if (need_g) tg.impl()->ensure_grad();
            if (need_b) tb.impl()->ensure_grad();
            double* gx = need_x ? tx.impl()->grad.data() : nullptr;
            double* gg = need_g ? tg.impl()->grad.data() : nullptr;
            double* gb = need_b ? tb.impl()->grad.data() : nullptr;
            // Serial over rows: gamma/beta grads are shared across rows.
            for (int64_t r = 0; r < nd.rows; ++r) {
                const double m = mean[static_cast<size_t>(r)];
                const double is = inv_std[static_cast<size_t>(r)];
                const double* xr = xd + r * nd.block;
                const double* gyr = gy + r * nd.block;
                double sum_g = 0.0, sum_gx = 0.0;
                for (int64_t j = 0; j < nd.block; ++j) {
                    const double xhat = (xr[j] - m) * is;
                    const double gj = gyr[j] * gv2[static_cast<size_t>(param_index(r, j))];
                    sum_g += gj;
                    sum_gx += gj * xhat;
                }
                const double inv_n = 1.0 / static_cast<double>(nd.block);
                for (int64_t j = 0; j < nd.block; ++j) {
                    const double xhat = (xr[j] - m) * is;
                    const int64_t p = param_index(r, j);
                    if (need_x) {
                        const double gj = gyr[j] * gv2[static_cast<size_t>(p)];
                        gx[r * nd.block + j] += is * (gj - inv_n * sum_g - xhat * inv_n * sum_gx);
                    }
                    if (need_g) gg[static_cast<size_t>(p)] += gyr[j] * xhat;
                    if (need_b) gb[static_cast<size_t>(p)] += gyr[j];
                }
            }
        });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int64_t width = x.shape().back();
    if (gamma.rank() != 1 || gamma.dim(0) != width)
        throw std::invalid_argument("layer_norm: gamma " + shape_str(gamma.shape()) + " does not match last axis of " +
                                    shape_str(x.shape()));
    NormDims nd{x.numel() / width, width};
    return norm_common(x, gamma, beta, eps, nd, [](int64_t, int64_t j) { return j; }, "layer_norm");
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, double eps) {
    if (x.rank() < 3)
        throw std::invalid_argument("group_norm: expected rank >= 3 (N,C,...), got " + shape_str(x.shape()));
    const int64_t channels = x.dim(1);
    if (groups <= 0 || channels % groups != 0)
        throw std::invalid_argument("group_norm: channels " + std::to_string(channels) + " not divisible by groups " +
                                    std::to_string(groups));
    if (gamma.rank() != 1 || gamma.dim(0) != channels)
        throw std::invalid_argument("group_norm: gamma " + shape_str(gamma.shape()) + " does not match channels of " +
                                    shape_str(x.shape()));
    const int64_t batch = x.dim(0);
    int64_t spatial = 1;
    for (int i = 2; i < x.rank(); ++i) spatial *= x.dim(i);
    const int64_t cg = channels / groups;
    NormDims nd{batch * groups, cg * spatial};
    return norm_common(
        x, gamma, beta, eps, nd,
        [groups, cg, spatial](int64_t row, int64_t j) {
            const int64_t g = row % groups;
            return g * cg + j / spatial;
        },
        "group_norm");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != a.rank())
        throw std::invalid_argument("matmul: ranks must match and be >= 2, got " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    const int rank = a.rank();
    int64_t batch = 1;
    for (int i = 0; i + 2 < rank; ++i) {
        if (a.dim(i) != b.dim(i))
            throw std::invalid_argument("matmul: batch dims differ, " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
        batch *= a.dim(i);
    }
    const int64_t m = a.dim(rank - 2), k = a.dim(rank - 1);
    const int64_t k2 = b.dim(rank - 2), n = b.dim(rank - 1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<size_t>(batch * m * n), 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
#pragma omp parallel for collapse(2) if (batch * m * k * n > kParallelCutoff)
    for (int64_t bt = 0; bt < batch; ++bt) {
        for (int64_t i = 0; i < m; ++i) {
            const double* arow = ad + (bt * m + i) * k;
            const double* bbase = bd + bt * k * n;
            double* crow = out.data() + (bt * m + i) * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                if (av == 0.0) continue;
                const double* brow = bbase + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    Tensor ta = a, tb = b;
    return make_op_result(std::move(out_shape), std::move(out), {a, b},
                          [ta, tb, batch, m, k, n](TensorImpl& self) {
                              const double* gy = self.grad.data();
                              if (ta.requires_grad()) {
                                  TensorImpl& ai = *ta.impl();
                                  ai.ensure_grad();
                                  const double* bd2 = tb.data().data();
                                  // dA[i,kk] = sum_j dC[i,j] * B[kk,j]
#pragma omp parallel for collapse(2) if (batch * m * k * n > kParallelCutoff)
                                  for (int64_t bt = 0; bt < batch; ++bt) {
                                      for (int64_t i = 0; i < m; ++i) {
                                          const double* grow = gy + (bt * m + i) * n;
                                          const double* bbase = bd2 + bt * k * n;
                                          double* garow = ai.grad.data() + (bt * m + i) * k;
                                          for (int64_t kk = 0; kk < k; ++kk) {
                                              const double* brow = bbase + kk * n;
                                              double acc = 0.0;
                                              for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                              garow[kk] += acc;
                                          }
                                      }
                                  }
                              }
                              if (tb.requires_grad()) {
                                  TensorImpl& bi = *tb.impl();
                                  bi.ensure_grad();
                                  const double* ad2 = ta.data().data();
                                  // dB[kk,j] = sum_i A[i,kk] * dC[i,j]
#pragma omp parallel for collapse(2) if (batch * m * k * n > kParallelCutoff)
                                  for (int64_t bt = 0; bt < batch; ++bt) {
                                      for (int64_t kk = 0; kk < k; ++kk) {
                                          double* gbrow = bi.grad.data() + (bt * k + kk) * n;
                                          for (int64_t i = 0; i < m; ++i) {
                                              const double av = ad2[(bt * m + i) * k + kk];
                                              if (av == 0.0) continue;
                                              const double* grow = gy + (bt * m + i) * n;
                                              for (int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                                          }
                                      }
                                  }
                              }
                          });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    if (x.rank() != 4 || w.rank() != 4)
        throw std::invalid_argument("conv2d: expected x (N,Ci,H,W) and w (Co,Ci,kh,kw), got " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv2d: input channels differ, x " + shape_str(x.shape()) + " vs w " +
                                    shape_str(w.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0)))
        throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) + " does not match out channels of w " +
                                    shape_str(w.shape()));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    if (Ho < 1 || Wo < 1)
        throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) + " too large for input " +
                                    shape_str(x.shape()));
    std::vector<double> out(static_cast<size_t>(N * Co * Ho * Wo), 0.0);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    const double* bd = bias.defined() ? bias.data().data() : nullptr;
#pragma omp parallel for collapse(2)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t co = 0; co < Co; ++co) {
            double* obase = out.data() + ((n * Co + co) * Ho) * Wo;
            const double bv = bd ? bd[co] : 0.0;
            for (int64_t oy = 0; oy < Ho; ++oy) {
                for (int64_t ox = 0; ox < Wo; ++ox) obase[oy * Wo + ox] = bv;
            }
            for (int64_t ci = 0; ci < Ci; ++ci) {
                const double* xbase = xd + ((n * Ci + ci) * H) * W;
                const double* wbase = wd + ((co * Ci + ci) * kh) * kw;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    const int64_t iy0 = oy * stride - padding;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= H) continue;
                        const double* xrow = xbase + iy * W;
                        const double* wrow = wbase + ky * kw;
                        double* orow = obase + oy * Wo;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const double wv = wrow[kx];
                            if (wv == 0.0) continue;
                            const int64_t ix0 = kx - padding;
                            // valid ox range so that ix = ox*stride + ix0 in [0, W)
                            int64_t ox_lo = 0;
                            if (ix0 < 0) ox_lo = (-ix0 + stride - 1) / stride;
                            int64_t ox_hi = Wo;
                            if (ix0 + (Wo - 1) * stride >= W) ox_hi = (W - ix0 + stride - 1) / stride;
                            for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                                orow[ox] += wv * xrow[ox * stride + ix0];
                        }
                    }
                }
            }
        }
    }
    Tensor tx = x, tw = w, tb = bias;
    return make_op_result(
        {N, Co, Ho, Wo}, std::move(out), {x, w, bias},
        [tx, tw, tb, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, padding](TensorImpl& self) {
            const double* gy = self.grad.data();
            const double* wd2 = tw.data().data();
            const double* xd2 = tx.data().data();
            if (tx.requires_grad()) {
                TensorImpl& xi = *tx.impl();
                xi.ensure_grad();
                // gather form: dx[n,ci,iy,ix] sums w * gy over kernel taps
#pragma omp parallel for collapse(2)
                for (int64_t n = 0; n < N; ++n) {
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        double* gxbase = xi.grad.data() + ((n * Ci + ci) * H) * W;
                        for (int64_t co = 0; co < Co; ++co) {
                            const double* gybase = gy + ((n * Co + co) * Ho) * Wo;
                            const double* wbase = wd2 + ((co * Ci + ci) * kh) * kw;
                            for (int64_t oy = 0; oy < Ho; ++oy) {
                                const int64_t iy0 = oy * stride - padding;
                                for (int64_t ky = 0; ky < kh; ++ky) {
                                    const int64_t iy = iy0 + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    double* gxrow = gxbase + iy * W;
                                    const double* gyrow = gybase + oy * Wo;
                                    const double* wrow = wbase + ky * kw;
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        const double wv = wrow[kx];
                                        if (wv == 0.0) continue;
                                        const int64_t ix0 = kx - padding;
                                        int64_t ox_lo = 0;
                                        if (ix0 < 0) ox_lo = (-ix0 + stride - 1) / stride;
                                        int64_t ox_hi = Wo;
                                        if (ix0 + (Wo - 1) * stride >= W) ox_hi = (W - ix0 + stride - 1) / stride;
                                        for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                                            gxrow[ox * stride + ix0] += wv * gyrow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (tw.requires_grad()) {
                TensorImpl& wi = *tw.impl();
                wi.ensure_grad();
#pragma omp parallel for collapse(2)
                for (int64_t co = 0; co < Co; ++co) {
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        double* gwbase = wi.grad.data() + ((co * Ci + ci) * kh) * kw;
                        for (int64_t n = 0; n < N; ++n) {
                            const double* gybase = gy + ((n * Co + co) * Ho) * Wo;
                            const double* xbase = xd2 + ((n * Ci + ci) * H) * W;
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    double acc = 0.0;
                                    for (int64_t oy = 0; oy < Ho; ++oy) {
                                        const int64_t iy = oy * stride - padding + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        const double* xrow = xbase + iy * W;
                                        const double* gyrow = gybase + oy * Wo;
                                        const int64_t ix0 = kx - padding;
                                        int64_t ox_lo = 0;
                                        if (ix0 < 0) ox_lo = (-ix0 + stride - 1) / stride;
                                        int64_t ox_hi = Wo;
                                        if (ix0 + (Wo - 1) * stride >= W) ox_hi = (W - ix0 + stride - 1) / stride;
                                        for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                                            acc += xrow[ox * stride + ix0] * gyrow[ox];
                                    }
                                    gwbase[ky * kw + kx] += acc;
                                }
                            }
                        }
                    }
                }
            }
            if (tb.defined() && tb.requires_grad()) {
                TensorImpl& bi = *tb.impl();
                bi.ensure_grad();
#pragma omp parallel for
                for (int64_t co = 0; co < Co; ++co) {
                    double acc = 0.0;
                    for (int64_t n = 0; n < N; ++n) {
                        const double* gybase = gy + ((n * Co + co) * Ho) * Wo;
                        for (int64_t i = 0; i < Ho * Wo; ++i) acc += gybase[i];
                    }
                    bi.grad[static_cast<size_t>(co)] += acc;
                }
            }
        });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int padding) {
    if (x.rank() != 3 || w.rank() != 3)
        throw std::invalid_argument("conv1d: expected x (B,Ci,L) and w (Co,Ci,k), got " + shape_str(x.shape()) +
                                    " and " + shape_str(w.shape()));
    // Reuse the 2-D kernel with a unit height axis; conv2d padding would also
    // pad that axis, so pad L explicitly.
    Tensor x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
    Tensor w4 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2)});
    if (padding > 0) {
        Tensor zeros_l = Tensor::zeros({x.dim(0), x.dim(1), 1, static_cast<int64_t>(padding)});
        x4 = concat({zeros_l, x4, zeros_l}, 3);
    }
    Tensor y = conv2d(x4, w4, bias, 1, 0);
    return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

Tensor conv1d_over_axis(const Tensor& x, const Tensor& w, const Tensor& bias, int axis, int padding) {
    if (x.rank() != 4)
        throw std::invalid_argument("conv1d_over_axis: expected rank-4 (N,T,P,C), got " + shape_str(x.shape()));
    axis = normalize_axis(axis, 4, "conv1d_over_axis");
    if (axis != 1) throw std::invalid_argument("conv1d_over_axis: only the T axis (1) is supported");
    const int64_t N = x.dim(0), T = x.dim(1), P = x.dim(2), C = x.dim(3);
    Tensor h = permute(x, {0, 2, 3, 1});           // (N,P,C,T)
    h = reshape(h, {N * P, C, T});
    h = conv1d(h, w, bias, padding);
    h = reshape(h, {N, P, C, T});
    return permute(h, {0, 3, 1, 2});               // (N,T,P,C)
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    Tensor tx = x;
    return make_op_result(std::move(shape), std::move(out), {x}, [tx](TensorImpl& self) {
        if (tx.requires_grad()) accumulate(*tx.impl(), self.grad);
    });
}

namespace {
std::vector<int64_t> strides_of(const Shape& shape) {
    std::vector<int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
    return st;
}

// out[i0,i1,...] = x[i_{perm[0]}, ...]; used for both directions.
void permute_kernel(const double* src, double* dst, const Shape& out_shape, const std::vector<int64_t>& src_strides,
                    const std::vector<int>& perm) {
    const int rank = static_cast<int>(out_shape.size());
    const int64_t n = shape_numel(out_shape);
    const auto out_strides = strides_of(out_shape);
    std::vector<int64_t> mapped(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) mapped[static_cast<size_t>(i)] = src_strides[static_cast<size_t>(perm[i])];
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t lin = 0; lin < n; ++lin) {
        int64_t rem = lin;
        int64_t src_idx = 0;
        for (int i = 0; i < rank; ++i) {
            const int64_t c = rem / out_strides[static_cast<size_t>(i)];
            rem -= c * out_strides[static_cast<size_t>(i)];
            src_idx += c * mapped[static_cast<size_t>(i)];
        }
        dst[lin] = src[src_idx];
    }
}
}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const int rank = x.rank();
    if (static_cast<int>(perm.size()) != rank)
        throw std::invalid_argument("permute: perm size " + std::to_string(perm.size()) + " does not match rank " +
                                    std::to_string(rank));
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    for (int p : perm) {
        if (p < 0 || p >= rank || seen[static_cast<size_t>(p)])
            throw std::invalid_argument("permute: invalid permutation for " + shape_str(x.shape()));
        seen[static_cast<size_t>(p)] = true;
    }
    Shape out_shape(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) out_shape[static_cast<size_t>(i)] = x.dim(perm[static_cast<size_t>(i)]);
    std::vector<double> out(static_cast<size_t>(x.numel()));
    permute_kernel(x.data().data(), out.data(), out_shape, strides_of(x.shape()), perm);
    std::vector<int> inverse(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) inverse[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    Tensor tx = x;
    return make_op_result(std::move(out_shape), std::move(out), {x}, [tx, inverse](TensorImpl& self) {
        TensorImpl& xi = *tx.impl();
        if (!xi.requires_grad) return;
        std::vector<double> gx(static_cast<size_t>(xi.numel()));
        permute_kernel(self.grad.data(), gx.data(), xi.shape, strides_of(self.shape), inverse);
        accumulate(xi, gx);
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const int rank = parts[0].rank();
    axis = normalize_axis(axis, rank, "concat");
    Shape out_shape = parts[0].shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && p.dim(i) != out_shape[static_cast<size_t>(i)])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                            shape_str(parts[0].shape()));
        total += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = total;
    const AxisSplit so = split_at(out_shape, axis);
    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t len = p.dim(axis);
        const double* src = p.data().data();
        const int64_t copy = len * so.inner;
#pragma omp parallel for if (so.outer * copy > kParallelCutoff)
        for (int64_t o = 0; o < so.outer; ++o)
            std::copy(src + o * copy, src + (o + 1) * copy, out.data() + o * so.len * so.inner + offset * so.inner);
        offset += len;
    }
    std::vector<Tensor> inputs = parts;
    return make_op_result(std::move(out_shape), std::move(out), parts, [inputs, so, axis](TensorImpl& self) {
        int64_t off = 0;
        for (const auto& p : inputs) {
            const int64_t len = p.dim(axis);
            if (p.requires_grad()) {
                TensorImpl& pi = *p.impl();
                pi.ensure_grad();
                const int64_t copy = len * so.inner;
                const double* gy = self.grad.data();
#pragma omp parallel for if (so.outer * copy > kParallelCutoff)
                for (int64_t o = 0; o < so.outer; ++o) {
                    const double* src = gy + o * so.len * so.inner + off * so.inner;
                    double* dst = pi.grad.data() + o * copy;
                    for (int64_t i = 0; i < copy; ++i) dst[i] += src[i];
                }
            }
            off += len;
        }
    });
}

Tensor slice(const Tensor& x, const std::vector<int64_t>& starts, const std::vector<int64_t>& lengths) {
    const int rank = x.rank();
    if (static_cast<int>(starts.size()) != rank || static_cast<int>(lengths.size()) != rank)
        throw std::invalid_argument("slice: starts/lengths must cover every axis of " + shape_str(x.shape()));
    for (int i = 0; i < rank; ++i) {
        if (starts[static_cast<size_t>(i)] < 0 || lengths[static_cast<size_t>(i)] < 1 ||
            starts[static_cast<size_t>(i)] + lengths[static_cast<size_t>(i)] > x.dim(i))
            throw std::invalid_argument("slice: window out of bounds on axis " + std::to_string(i) + " of " +
                                        shape_str(x.shape()));
    }
    Shape out_shape(lengths.begin(), lengths.end());
    const auto in_strides = strides_of(x.shape());
    const auto out_strides = strides_of(out_shape);
    const int64_t n = shape_numel(out_shape);
    std::vector<double> out(static_cast<size_t>(n));
    const double* xd = x.data().data();
    int64_t base = 0;
    for (int i = 0; i < rank; ++i) base += starts[static_cast<size_t>(i)] * in_strides[static_cast<size_t>(i)];
#pragma omp parallel for if (n > kParallelCutoff)
    for (int64_t lin = 0; lin < n; ++lin) {
        int64_t rem = lin;
        int64_t src = base;
        for (int i = 0; i < rank; ++i) {
            const int64_t c = rem / out_strides[static_cast<size_t>(i)];
            rem -= c * out_strides[static_cast<size_t>(i)];
            src += c * in_strides[static_cast<size_t>(i)];
        }
        out[static_cast<size_t>(lin)] = xd[src];
    }
    Tensor tx = x;
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [tx, in_strides, out_strides, base, rank, n](TensorImpl& self) {
                              TensorImpl& xi = *tx.impl();
                              if (!xi.requires_grad) return;
                              xi.ensure_grad();
                              const double* gy = self.grad.data();
#pragma omp parallel for if (n > kParallelCutoff)
                              for (int64_t lin = 0; lin < n; ++lin) {
                                  int64_t rem = lin;
                                  int64_t dst = base;
                                  for (int i = 0; i < rank; ++i) {
                                      const int64_t c = rem / out_strides[static_cast<size_t>(i)];
                                      rem -= c * out_strides[static_cast<size_t>(i)];
                                      dst += c * in_strides[static_cast<size_t>(i)];
                                  }
                                  xi.grad[static_cast<size_t>(dst)] += gy[lin];
                              }
                          });
}

Tensor slice_axis(const Tensor& x, int axis, int64_t start, int64_t length) {
    axis = normalize_axis(axis, x.rank(), "slice_axis");
    std::vector<int64_t> starts(static_cast<size_t>(x.rank()), 0);
    std::vector<int64_t> lengths(x.shape().begin(), x.shape().end());
    starts[static_cast<size_t>(axis)] = start;
    lengths[static_cast<size_t>(axis)] = length;
    return slice(x, starts, lengths);
}

Tensor roll_axis(const Tensor& x, int axis, int64_t shift) {
    axis = normalize_axis(axis, x.rank(), "roll_axis");
    const int64_t n = x.dim(axis);
    int64_t s = ((shift % n) + n) % n;
    if (s == 0) return x;
    Tensor head = slice_axis(x, axis, n - s, s);
    Tensor tail = slice_axis(x, axis, 0, n - s);
    return concat({head, tail}, axis);
}

Tensor upsample_nearest2x(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("upsample_nearest2x: expected (N,C,H,W), got " + shape_str(x.shape()));
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<double> out(static_cast<size_t>(N * C * 4 * H * W));
    const double* xd = x.data().data();
#pragma omp parallel for if (N * C * H * W > kParallelCutoff)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = xd + nc * H * W;
        double* dst = out.data() + nc * 4 * H * W;
        for (int64_t i = 0; i < H; ++i) {
            for (int64_t j = 0; j < W; ++j) {
                const double v = src[i * W + j];
                double* d0 = dst + (2 * i) * 2 * W + 2 * j;
                double* d1 = dst + (2 * i + 1) * 2 * W + 2 * j;
                d0[0] = v;
                d0[1] = v;
                d1[0] = v;
                d1[1] = v;
            }
        }
    }
    Tensor tx = x;
    return make_op_result({N, C, 2 * H, 2 * W}, std::move(out), {x}, [tx, N, C, H, W](TensorImpl& self) {
        TensorImpl& xi = *tx.impl();
        if (!xi.requires_grad) return;
        xi.ensure_grad();
        const double* gy = self.grad.data();
#pragma omp parallel for if (N * C * H * W > kParallelCutoff)
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const double* src = gy + nc * 4 * H * W;
            double* dst = xi.grad.data() + nc * H * W;
            for (int64_t i = 0; i < H; ++i) {
                for (int64_t j = 0; j < W; ++j) {
                    dst[i * W + j] += src[(2 * i) * 2 * W + 2 * j] + src[(2 * i) * 2 * W + 2 * j + 1] +
                                      src[(2 * i + 1) * 2 * W + 2 * j] + src[(2 * i + 1) * 2 * W + 2 * j + 1];
                }
            }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    const auto& xv = x.data();
    double acc = 0.0;
    for (double v : xv) acc += v;
    Tensor tx = x;
    return make_op_result({1}, {acc}, {x}, [tx](TensorImpl& self) {
        TensorImpl& xi = *tx.impl();
        if (!xi.requires_grad) return;
        const double g = self.grad[0];
        accumulate_fn(xi, xi.numel(), [g](int64_t) { return g; });
    });
}

Tensor mean_all(const Tensor& x) {
    return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, int axis) {
    axis = normalize_axis(axis, x.rank(), "sum_axis");
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i)
        if (i != axis) out_shape.push_back(x.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> out(static_cast<size_t>(s.outer * s.inner), 0.0);
    const double* xd = x.data().data();
#pragma omp parallel for collapse(2) if (s.outer * s.inner > 4096)
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            double acc = 0.0;
            for (int64_t l = 0; l < s.len; ++l) acc += xd[(o * s.len + l) * s.inner + in];
            out[static_cast<size_t>(o * s.inner + in)] = acc;
        }
    }
    Tensor tx = x;
    return make_op_result(std::move(out_shape), std::move(out), {x}, [tx, s](TensorImpl& self) {
        TensorImpl& xi = *tx.impl();
        if (!xi.requires_grad) return;
        const double* gy = self.grad.data();
        accumulate_fn(xi, xi.numel(), [&](int64_t i) {
            const int64_t o = i / (s.len * s.inner);
            const int64_t in = i % s.inner;
            return gy[o * s.inner + in];
        });
    });
}

Tensor mean_axis(const Tensor& x, int axis) {
    const int ax = normalize_axis(axis, x.rank(), "mean_axis");
    return mul_scalar(sum_axis(x, ax), 1.0 / static_cast<double>(x.dim(ax)));
}

}  // namespace gfk
