// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace heartdarts::ops {

namespace {

template <typename T>
bool any_requires_grad(std::initializer_list<const TensorPtr<T>*> ts) {
    for (const auto* t : ts)
        if (*t && (*t)->requires_grad) return true;
    return false;
}

template <typename T>
TensorPtr<T> new_output(Shape s, bool requires_grad) {
    auto out = make_tensor<T>(s);
    out->requires_grad = requires_grad;
    return out;
}

// Range of output positions p for which p*stride + offset lands inside [0, length).
struct ValidRange {
    std::ptrdiff_t first;
    std::ptrdiff_t last;  // exclusive
};

ValidRange valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t length, std::size_t out_length) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t first = 0;
    if (offset < 0) first = std::min<std::ptrdiff_t>((-offset + s - 1) / s, static_cast<std::ptrdiff_t>(out_length));
    // largest p with p*s + offset <= length - 1
    const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(length) - 1 - offset;
    std::ptrdiff_t last = hi < 0 ? 0 : hi / s + 1;
    last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(out_length));
    return {first, std::max(first, last)};
}

}  // namespace

std::size_t pooled_length(std::size_t length, std::size_t k, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ShapeError("stride must be >= 1");
    if (k == 0) throw ShapeError("kernel size must be >= 1");
    const auto span = static_cast<std::ptrdiff_t>(length + 2 * padding) - static_cast<std::ptrdiff_t>(k);
    if (span < 0)
        throw ShapeError("non-positive output length: length " + std::to_string(length) + ", kernel " +
                         std::to_string(k) + ", padding " + std::to_string(padding));
    return static_cast<std::size_t>(span) / stride + 1;
}

// ---------------------------------------------------------------- conv1d
//
// im2col + GEMM. Column buffer rows are (ic, k), columns are output positions.
// Work is split per sample (forward, dx) or per fixed group of samples (dW),
// so the summation order does not depend on the thread count.

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kConvGroup = 8;

struct ConvGeometry {
    std::size_t cin, length, k, stride, out_length;
    std::ptrdiff_t pad;
};

// Valid output range for each kernel tap; identical for every input channel.
std::vector<ValidRange> tap_ranges(const ConvGeometry& g) {
    std::vector<ValidRange> r(g.k);
    for (std::size_t k = 0; k < g.k; ++k)
        r[k] = valid_range(static_cast<std::ptrdiff_t>(k) - g.pad, g.stride, g.length, g.out_length);
    return r;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, const std::vector<ValidRange>& taps, T* col) {
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    for (std::size_t ic = 0; ic < g.cin; ++ic) {
        const T* xr = x + ic * g.length;
        for (std::size_t k = 0; k < g.k; ++k) {
            T* c = col + (ic * g.k + k) * g.out_length;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - g.pad;
            const auto r = taps[k];
            std::fill(c, c + r.first, T(0));
            if (g.stride == 1)
                std::copy(xr + r.first + off, xr + r.last + off, c + r.first);
            else
                for (std::ptrdiff_t p = r.first; p < r.last; ++p) c[p] = xr[p * s + off];
            std::fill(c + r.last, c + g.out_length, T(0));
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, const std::vector<ValidRange>& taps, T* dx) {
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    for (std::size_t ic = 0; ic < g.cin; ++ic) {
        T* dxr = dx + ic * g.length;
        for (std::size_t k = 0; k < g.k; ++k) {
            const T* c = col + (ic * g.k + k) * g.out_length;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - g.pad;
            const auto r = taps[k];
            if (g.stride == 1) {
                T* d = dxr + off;
#pragma omp simd
                for (std::ptrdiff_t p = r.first; p < r.last; ++p) d[p] += c[p];
            } else {
                for (std::ptrdiff_t p = r.first; p < r.last; ++p) dxr[p * s + off] += c[p];
            }
        }
    }
}

}  // namespace

template <typename T>
TensorPtr<T> conv1d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& kernel, const TensorPtr<T>& bias,
                    std::size_t stride, std::size_t padding) {
    const Shape xs = x->shape;
    const Shape ks = kernel->shape;
    if (xs.channels != ks.channels)
        throw ShapeError("conv1d channel mismatch: input " + to_string(xs) + ", kernel " + to_string(ks));
    if (bias && bias->values.size() != ks.batch)
        throw ShapeError("conv1d bias has " + std::to_string(bias->values.size()) + " values for " +
                         std::to_string(ks.batch) + " output channels");
    const std::size_t B = xs.batch, Cin = xs.channels, L = xs.length;
    const std::size_t Cout = ks.batch, K = ks.length;
    const std::size_t Lo = pooled_length(L, K, stride, padding);
    const ConvGeometry geo{Cin, L, K, stride, Lo, static_cast<std::ptrdiff_t>(padding)};
    const std::size_t rows = Cin * K;
    const auto taps = tap_ranges(geo);

    auto out = new_output<T>({B, Cout, Lo}, any_requires_grad<T>({&x, &kernel, &bias}));
    const T* xv = x->values.data();
    T* ov = out->values.data();
    const Eigen::Map<const RowMatrix<T>> W(kernel->values.data(), Cout, rows);

#pragma omp parallel
    {
        std::vector<T> col(rows * Lo);
#pragma omp for schedule(static)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
            im2col(xv + static_cast<std::size_t>(b) * Cin * L, geo, taps, col.data());
            Eigen::Map<RowMatrix<T>> O(ov + static_cast<std::size_t>(b) * Cout * Lo, Cout, Lo);
            O.noalias() = W * Eigen::Map<const RowMatrix<T>>(col.data(), rows, Lo);
            if (bias)
                for (std::size_t oc = 0; oc < Cout; ++oc) O.row(oc).array() += bias->values[oc];
        }
    }

    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({x, kernel, bias}, out, [=, xp = x.get(), kp = kernel.get(), bp = bias.get()] {
            const T* dy = o->grad.data();
            const Eigen::Map<const RowMatrix<T>> Wt(kp->values.data(), Cout, rows);
            if (xp->requires_grad) {
                T* dx = xp->grad_buffer().data();
#pragma omp parallel
                {
                    std::vector<T> dcol(rows * Lo);
#pragma omp for schedule(static)
                    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
                        const Eigen::Map<const RowMatrix<T>> dY(dy + static_cast<std::size_t>(b) * Cout * Lo, Cout,
                                                                Lo);
                        Eigen::Map<RowMatrix<T>>(dcol.data(), rows, Lo).noalias() = Wt.transpose() * dY;
                        col2im_add(dcol.data(), geo, taps, dx + static_cast<std::size_t>(b) * Cin * L);
                    }
                }
            }
            if (kp->requires_grad) {
                const std::size_t groups = (B + kConvGroup - 1) / kConvGroup;
                std::vector<RowMatrix<T>> partial(groups, RowMatrix<T>::Zero(Cout, rows));
                const T* xv2 = xp->values.data();
#pragma omp parallel
                {
                    std::vector<T> col(rows * Lo);
#pragma omp for schedule(static)
                    for (std::ptrdiff_t gi = 0; gi < static_cast<std::ptrdiff_t>(groups); ++gi) {
                        const std::size_t g = static_cast<std::size_t>(gi);
                        for (std::size_t b = g * kConvGroup; b < std::min(B, (g + 1) * kConvGroup); ++b) {
                            im2col(xv2 + b * Cin * L, geo, taps, col.data());
                            const Eigen::Map<const RowMatrix<T>> dY(dy + b * Cout * Lo, Cout, Lo);
                            partial[g].noalias() +=
                                dY * Eigen::Map<const RowMatrix<T>>(col.data(), rows, Lo).transpose();
                        }
                    }
                }
                Eigen::Map<RowMatrix<T>> dW(kp->grad_buffer().data(), Cout, rows);
                for (const auto& p : partial) dW += p;
            }
            if (bp && bp->requires_grad) {
                T* db = bp->grad_buffer().data();
                for (std::size_t oc = 0; oc < Cout; ++oc) {
                    T acc = T(0);
                    for (std::size_t b = 0; b < B; ++b) {
                        const T* dyr = dy + (b * Cout + oc) * Lo;
                        for (std::size_t p = 0; p < Lo; ++p) acc += dyr[p];
                    }
                    db[oc] += acc;
                }
            }
        });
    }
    return out;
}

// ----------------------------------------------------------- batchnorm1d

template <typename T>
TensorPtr<T> batchnorm1d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                         BatchNormStats<T>& running, bool training, double eps, double momentum) {
    const Shape xs = x->shape;
    const std::size_t B = xs.batch, C = xs.channels, L = xs.length;
    if ((gamma && gamma->values.size() != C) || (beta && beta->values.size() != C))
        throw ShapeError("batchnorm affine parameters do not match " + std::to_string(C) + " channels");
    if (running.mean.size() != C || running.var.size() != C)
        throw ShapeError("batchnorm running statistics do not match " + std::to_string(C) + " channels");
    const std::size_t n = B * L;
    if (training && n < 2)
        throw StatisticsError("batchnorm training mode needs batch*length >= 2, got " + std::to_string(n));

    auto out = new_output<T>(xs, any_requires_grad<T>({&x, &gamma, &beta}));
    auto xhat = std::make_shared<std::vector<T>>(xs.numel());
    auto inv_std = std::make_shared<std::vector<T>>(C);
    const T* xv = x->values.data();

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        double mean, var;
        if (training) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const T* r = xv + (b * C + c) * L;
                for (std::size_t p = 0; p < L; ++p) s += r[p];
            }
            mean = s / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const T* r = xv + (b * C + c) * L;
                for (std::size_t p = 0; p < L; ++p) {
                    const double d = r[p] - mean;
                    ss += d * d;
                }
            }
            var = ss / static_cast<double>(n);
            const double unbiased = ss / static_cast<double>(n - 1);
            running.mean[c] = static_cast<T>((1.0 - momentum) * running.mean[c] + momentum * mean);
            running.var[c] = static_cast<T>((1.0 - momentum) * running.var[c] + momentum * unbiased);
        } else {
            mean = running.mean[c];
            var = running.var[c];
        }
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[c] = static_cast<T>(istd);
        const T g = gamma ? gamma->values[c] : T(1);
        const T bt = beta ? beta->values[c] : T(0);
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * C + c) * L;
            for (std::size_t p = 0; p < L; ++p) {
                const T h = static_cast<T>((xv[base + p] - mean) * istd);
                (*xhat)[base + p] = h;
                out->values[base + p] = g * h + bt;
            }
        }
    }

    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({x, gamma, beta}, out,
                    [=, xp = x.get(), gp = gamma.get(), bp = beta.get()] {
                        const T* dy = o->grad.data();
                        T* dx = xp->requires_grad ? xp->grad_buffer().data() : nullptr;
                        T* dg = (gp && gp->requires_grad) ? gp->grad_buffer().data() : nullptr;
                        T* db = (bp && bp->requires_grad) ? bp->grad_buffer().data() : nullptr;
                        const std::vector<T>& h = *xhat;
#pragma omp parallel for schedule(static)
                        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
                            const auto c = static_cast<std::size_t>(ci);
                            const T g = gp ? gp->values[c] : T(1);
                            double sum_dy = 0.0, sum_dy_h = 0.0;
                            for (std::size_t b = 0; b < B; ++b) {
                                const std::size_t base = (b * C + c) * L;
                                for (std::size_t p = 0; p < L; ++p) {
                                    sum_dy += dy[base + p];
                                    sum_dy_h += static_cast<double>(dy[base + p]) * h[base + p];
                                }
                            }
                            if (dg) dg[c] += static_cast<T>(sum_dy_h);
                            if (db) db[c] += static_cast<T>(sum_dy);
                            if (!dx) continue;
                            const double istd = (*inv_std)[c];
                            if (training) {
                                const double nn = static_cast<double>(n);
                                const double mean_dxhat = g * sum_dy / nn;
                                const double mean_dxhat_h = g * sum_dy_h / nn;
                                for (std::size_t b = 0; b < B; ++b) {
                                    const std::size_t base = (b * C + c) * L;
                                    for (std::size_t p = 0; p < L; ++p) {
                                        const double dxh = static_cast<double>(g) * dy[base + p];
                                        dx[base + p] +=
                                            static_cast<T>(istd * (dxh - mean_dxhat - h[base + p] * mean_dxhat_h));
                                    }
                                }
                            } else {
                                for (std::size_t b = 0; b < B; ++b) {
                                    const std::size_t base = (b * C + c) * L;
                                    for (std::size_t p = 0; p < L; ++p)
                                        dx[base + p] += static_cast<T>(g * istd * dy[base + p]);
                                }
                            }
                        }
                    });
    }
    return out;
}

// ------------------------------------------------------------------ relu

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& x) {
    auto out = new_output<T>(x->shape, x->requires_grad);
    const std::size_t n = x->values.size();
    const T* xv = x->values.data();
    T* ov = out->values.data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({x}, out, [o, xp = x.get()] {
            T* dx = xp->grad_buffer().data();
            const T* dy = o->grad.data();
            const T* xv2 = xp->values.data();
            const std::size_t m = xp->values.size();
            for (std::size_t i = 0; i < m; ++i)
                if (xv2[i] > T(0)) dx[i] += dy[i];
        });
    }
    return out;
}

// ------------------------------------------------------------- maxpool1d

template <typename T>
TensorPtr<T> maxpool1d(Tape<T>& tape, const TensorPtr<T>& x, std::size_t k, std::size_t stride, std::size_t padding) {
    if (padding >= k) throw ShapeError("maxpool padding must be smaller than the window");
    const Shape xs = x->shape;
    const std::size_t L = xs.length;
    const std::size_t Lo = pooled_length(L, k, stride, padding);
    const std::size_t rows = xs.batch * xs.channels;
    auto out = new_output<T>({xs.batch, xs.channels, Lo}, x->requires_grad);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(rows * Lo);
    const T* xv = x->values.data();
    T* ov = out->values.data();
    std::uint32_t* am = argmax->data();

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows); ++ri) {
        const auto r = static_cast<std::size_t>(ri);
        const T* xr = xv + r * L;
        for (std::size_t p = 0; p < Lo; ++p) {
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(p * stride) - static_cast<std::ptrdiff_t>(padding);
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(start, 0);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(start + static_cast<std::ptrdiff_t>(k),
                                                               static_cast<std::ptrdiff_t>(L));
            std::ptrdiff_t best = lo;
            for (std::ptrdiff_t q = lo + 1; q < hi; ++q)
                if (xr[q] > xr[best]) best = q;
            ov[r * Lo + p] = xr[best];
            am[r * Lo + p] = static_cast<std::uint32_t>(best);
        }
    }

    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({x}, out, [=, xp = x.get()] {
            T* dx = xp->grad_buffer().data();
            const T* dy = o->grad.data();
            const std::uint32_t* am = argmax->data();
            for (std::size_t r = 0; r < rows; ++r) {
                T* dxr = dx + r * L;
                for (std::size_t p = 0; p < Lo; ++p) dxr[am[r * Lo + p]] += dy[r * Lo + p];
            }
        });
    }
    return out;
}

// -------------------------------------------------------- global_avgpool

template <typename T>
TensorPtr<T> global_avgpool(Tape<T>& tape, const TensorPtr<T>& x) {
    const Shape xs = x->shape;
    if (xs.length < 1) throw ShapeError("global_avgpool needs length >= 1");
    const std::size_t rows = xs.batch * xs.channels, L = xs.length;
    auto out = new_output<T>({xs.batch, xs.channels, 1}, x->requires_grad);
    for (std::size_t r = 0; r < rows; ++r) {
        T s = T(0);
        for (std::size_t p = 0; p < L; ++p) s += x->values[r * L + p];
        out->values[r] = s / static_cast<T>(L);
    }
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({x}, out, [=, xp = x.get()] {
            T* dx = xp->grad_buffer().data();
            const T scale = T(1) / static_cast<T>(L);
            for (std::size_t r = 0; r < rows; ++r) {
                const T g = o->grad[r] * scale;
                for (std::size_t p = 0; p < L; ++p) dx[r * L + p] += g;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------- linear

template <typename T>
TensorPtr<T> linear(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& weight, const TensorPtr<T>& bias) {
    const std::size_t B = x->shape.batch;
    const std::size_t in = x->shape.channels * x->shape.length;
    const std::size_t out_f = weight->shape.batch;
    if (weight->shape.channels * weight->shape.length != in)
        throw ShapeError("linear: input has " + std::to_string(in) + " features, weight is " + to_string(weight->shape));
    if (bias && bias->values.size() != out_f)
        throw ShapeError("linear: bias has " + std::to_string(bias->values.size()) + " values for " +
                         std::to_string(out_f) + " outputs");
    auto out = new_output<T>({B, out_f, 1}, any_requires_grad<T>({&x, &weight, &bias}));
    for (std::size_t b = 0; b < B; ++b) {
        const T* xr = x->values.data() + b * in;
        for (std::size_t o = 0; o < out_f; ++o) {
            const T* wr = weight->values.data() + o * in;
            T acc = bias ? bias->values[o] : T(0);
            for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
            out->values[b * out_f + o] = acc;
        }
    }
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* op = out.get();
        tape.record({x, weight, bias}, out, [=, xp = x.get(), wp = weight.get(), bp = bias.get()] {
            const T* dy = op->grad.data();
            if (xp->requires_grad) {
                T* dx = xp->grad_buffer().data();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t o = 0; o < out_f; ++o) {
                        const T g = dy[b * out_f + o];
                        const T* wr = wp->values.data() + o * in;
                        for (std::size_t i = 0; i < in; ++i) dx[b * in + i] += g * wr[i];
                    }
            }
            if (wp->requires_grad) {
                T* dw = wp->grad_buffer().data();
                for (std::size_t o = 0; o < out_f; ++o)
                    for (std::size_t b = 0; b < B; ++b) {
                        const T g = dy[b * out_f + o];
                        const T* xr = xp->values.data() + b * in;
                        for (std::size_t i = 0; i < in; ++i) dw[o * in + i] += g * xr[i];
                    }
            }
            if (bp && bp->requires_grad) {
                T* db = bp->grad_buffer().data();
                for (std::size_t o = 0; o < out_f; ++o)
                    for (std::size_t b = 0; b < B; ++b) db[o] += dy[b * out_f + o];
            }
        });
    }
    return out;
}

// ------------------------------------------------------- add and concat

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) throw ShapeError("add: shape " + to_string(a->shape) + " vs " + to_string(b->shape));
    auto out = new_output<T>(a->shape, a->requires_grad || b->requires_grad);
    const std::size_t n = a->values.size();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({a, b}, out, [o, ap = a.get(), bp = b.get()] {
            const std::size_t m = o->grad.size();
            for (Tensor<T>* t : {ap, bp}) {
                if (!t->requires_grad) continue;
                T* d = t->grad_buffer().data();
                for (std::size_t i = 0; i < m; ++i) d[i] += o->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape, const std::vector<TensorPtr<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels of an empty list");
    const std::size_t B = parts.front()->shape.batch, L = parts.front()->shape.length;
    std::size_t C = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p->shape.batch != B || p->shape.length != L)
            throw ShapeError("concat_channels: " + to_string(p->shape) + " vs " + to_string(parts.front()->shape));
        C += p->shape.channels;
        rg = rg || p->requires_grad;
    }
    auto out = new_output<T>({B, C, L}, rg);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t c0 = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p->shape.channels;
            std::copy_n(p->values.data() + b * pc * L, pc * L, out->values.data() + (b * C + c0) * L);
            c0 += pc;
        }
    }
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        std::vector<Tensor<T>*> raw;
        for (const auto& p : parts) raw.push_back(p.get());
        tape.record(parts, out, [o, raw, B, C, L] {
            for (std::size_t b = 0; b < B; ++b) {
                std::size_t c0 = 0;
                for (Tensor<T>* p : raw) {
                    const std::size_t pc = p->shape.channels;
                    if (p->requires_grad) {
                        T* d = p->grad_buffer().data() + b * pc * L;
                        const T* g = o->grad.data() + (b * C + c0) * L;
                        for (std::size_t i = 0; i < pc * L; ++i) d[i] += g[i];
                    }
                    c0 += pc;
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& x) {
    auto out = new_output<T>({1, 1, 1}, x->requires_grad);
    T s = T(0);
    for (T v : x->values) s += v;
    out->values[0] = s;
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({x}, out, [o, xp = x.get()] {
            for (T& d : xp->grad_buffer()) d += o->grad[0];
        });
    }
    return out;
}

// --------------------------------------------------------- cross_entropy

template <typename T>
TensorPtr<T> cross_entropy(Tape<T>& tape, const TensorPtr<T>& logits, std::span<const int> labels) {
    const std::size_t B = logits->shape.batch;
    const std::size_t n = logits->shape.channels * logits->shape.length;
    if (labels.size() != B)
        throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(B));
    if (B == 0) throw InputError("cross_entropy on an empty batch");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= n)
            throw InputError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(n) + ")");

    auto probs = std::make_shared<std::vector<T>>(B * n);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const T* z = logits->values.data() + b * n;
        const T m = *std::max_element(z, z + n);
        double denom = 0.0;
        for (std::size_t i = 0; i < n; ++i) denom += std::exp(static_cast<double>(z[i] - m));
        const double log_denom = std::log(denom);
        for (std::size_t i = 0; i < n; ++i)
            (*probs)[b * n + i] = static_cast<T>(std::exp(static_cast<double>(z[i] - m) - log_denom));
        loss -= static_cast<double>(z[labels[b]] - m) - log_denom;
    }
    auto out = new_output<T>({1, 1, 1}, logits->requires_grad);
    out->values[0] = static_cast<T>(loss / static_cast<double>(B));
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        std::vector<int> ys(labels.begin(), labels.end());
        tape.record({logits}, out, [=, zp = logits.get()] {
            T* dz = zp->grad_buffer().data();
            const T g = o->grad[0] / static_cast<T>(B);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < n; ++i) {
                    const T onehot = static_cast<std::size_t>(ys[b]) == i ? T(1) : T(0);
                    dz[b * n + i] += g * ((*probs)[b * n + i] - onehot);
                }
        });
    }
    return out;
}

// --------------------------------------------------------------- softmax

template <typename T>
std::vector<T> softmax(std::span<const T> v) {
    std::vector<T> out(v.size());
    if (v.empty()) return out;
    const T m = *std::max_element(v.begin(), v.end());
    T denom = T(0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        denom += out[i];
    }
    for (T& o : out) o /= denom;
    return out;
}

template <typename T>
TensorPtr<T> softmax_rows(Tape<T>& tape, const TensorPtr<T>& logits) {
    const std::size_t rows = logits->shape.batch * logits->shape.channels;
    const std::size_t n = logits->shape.length;
    auto out = new_output<T>(logits->shape, logits->requires_grad);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto w = softmax<T>(std::span<const T>(logits->values.data() + r * n, n));
        std::copy(w.begin(), w.end(), out->values.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* o = out.get();
        tape.record({logits}, out, [o, zp = logits.get(), rows, n] {
            T* dz = zp->grad_buffer().data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = o->values.data() + r * n;
                const T* g = o->grad.data() + r * n;
                T dot = T(0);
                for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
                for (std::size_t i = 0; i < n; ++i) dz[r * n + i] += y[i] * (g[i] - dot);
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> weighted_sum(Tape<T>& tape, const std::vector<TensorPtr<T>>& terms, const TensorPtr<T>& weights,
                          std::size_t row) {
    const std::size_t n = weights->shape.length;
    if (terms.size() != n)
        throw ShapeError("weighted_sum: " + std::to_string(terms.size()) + " terms for " + std::to_string(n) + " weights");
    if (row >= weights->shape.batch * weights->shape.channels) throw ShapeError("weighted_sum: row out of range");
    const TensorPtr<T>* first = nullptr;
    bool rg = weights->requires_grad;
    for (const auto& t : terms) {
        if (!t) continue;
        if (!first) first = &t;
        else if (t->shape != (*first)->shape)
            throw ShapeError("mixed op output shape disagreement: " + to_string(t->shape) + " vs " +
                             to_string((*first)->shape));
        rg = rg || t->requires_grad;
    }
    if (!first) throw ShapeError("weighted_sum needs at least one non-zero term to fix the output shape");
    const T* w = weights->values.data() + row * n;
    auto out = new_output<T>((*first)->shape, rg);
    const std::size_t m = out->values.size();
    T* ov = out->values.data();
    for (std::size_t o = 0; o < n; ++o) {
        if (!terms[o]) continue;
        const T wo = w[o];
        const T* tv = terms[o]->values.data();
#pragma omp simd
        for (std::size_t i = 0; i < m; ++i) ov[i] += wo * tv[i];
    }
    if (out->requires_grad && tape.recording()) {
        Tensor<T>* op = out.get();
        std::vector<Tensor<T>*> raw;
        for (const auto& t : terms) raw.push_back(t.get());
        std::vector<TensorPtr<T>> inputs(terms.begin(), terms.end());
        inputs.push_back(weights);
        tape.record(std::move(inputs), out, [op, raw, wp = weights.get(), row, n, m] {
            const T* g = op->grad.data();
            const T* wv = wp->values.data() + row * n;
            T* dw = wp->requires_grad ? wp->grad_buffer().data() + row * n : nullptr;
            for (std::size_t o = 0; o < n; ++o) {
                Tensor<T>* t = raw[o];
                if (!t) continue;
                if (dw) {
                    const T* tv = t->values.data();
                    T acc = T(0);
#pragma omp simd reduction(+ : acc)
                    for (std::size_t i = 0; i < m; ++i) acc += g[i] * tv[i];
                    dw[o] += acc;
                }
                if (t->requires_grad) {
                    T* d = t->grad_buffer().data();
                    const T wo = wv[o];
#pragma omp simd
                    for (std::size_t i = 0; i < m; ++i) d[i] += wo * g[i];
                }
            }
        });
    }
    return out;
}

#define HEARTDARTS_INSTANTIATE_OPS(T)                                                                                   \
    template TensorPtr<T> conv1d(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,              \
                                 std::size_t, std::size_t);                                                             \
    template TensorPtr<T> batchnorm1d(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,         \
                                      BatchNormStats<T>&, bool, double, double);                                        \
    template TensorPtr<T> relu(Tape<T>&, const TensorPtr<T>&);                                                          \
    template TensorPtr<T> maxpool1d(Tape<T>&, const TensorPtr<T>&, std::size_t, std::size_t, std::size_t);             \
    template TensorPtr<T> global_avgpool(Tape<T>&, const TensorPtr<T>&);                                                \
    template TensorPtr<T> linear(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&);             \
    template TensorPtr<T> add(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);                                      \
    template TensorPtr<T> concat_channels(Tape<T>&, const std::vector<TensorPtr<T>>&);                                  \
    template TensorPtr<T> sum(Tape<T>&, const TensorPtr<T>&);                                                           \
    template TensorPtr<T> cross_entropy(Tape<T>&, const TensorPtr<T>&, std::span<const int>);                          \
    template TensorPtr<T> softmax_rows(Tape<T>&, const TensorPtr<T>&);                                                  \
    template TensorPtr<T> weighted_sum(Tape<T>&, const std::vector<TensorPtr<T>>&, const TensorPtr<T>&, std::size_t);  \
    template std::vector<T> softmax(std::span<const T>);

HEARTDARTS_INSTANTIATE_OPS(float)
HEARTDARTS_INSTANTIATE_OPS(double)

}  // namespace heartdarts::ops
