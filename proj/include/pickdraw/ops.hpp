// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pickdraw/autodiff.hpp"
#include "pickdraw/numerics.hpp"
#include "pickdraw/tensor.hpp"

// Differentiable operations on channels-last tensors. Activations are
// [B, H, W, C]; embeddings and feature sets are [rows, dim]. Every op's
// backward closure is a hand-written vector-Jacobian product; grad_check
// in gradcheck.hpp is the contract test for each of them.

namespace pickdraw::ops {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

inline MapConst as_matrix(const Tensor& t, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != t.numel())
        throw std::invalid_argument("as_matrix: element count mismatch");
    return MapConst(t.data(), rows, cols);
}
inline MapMat as_matrix(Tensor& t, int rows, int cols) {
    return MapMat(t.data(), rows, cols);
}

// --------------------------------------------------------------------------
// Elementwise and structural ops
// --------------------------------------------------------------------------

inline ad::Var add(const ad::Var& a, const ad::Var& b) {
    if (!a.value().same_shape(b.value())) throw std::invalid_argument("add: shape mismatch");
    return ad::make_op(a.value() + b.value(), {a, b}, [](ad::Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
    });
}

inline ad::Var sub(const ad::Var& a, const ad::Var& b) {
    if (!a.value().same_shape(b.value())) throw std::invalid_argument("sub: shape mismatch");
    return ad::make_op(a.value() - b.value(), {a, b}, [](ad::Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor g = self.grad;
            g *= -1.0;
            self.parents[1]->accumulate(g);
        }
    });
}

inline ad::Var mul(const ad::Var& a, const ad::Var& b) {
    if (!a.value().same_shape(b.value())) throw std::invalid_argument("mul: shape mismatch");
    Tensor y(a.value().shape());
    for (size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
    return ad::make_op(std::move(y), {a, b}, [](ad::Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor g(av.shape());
            for (size_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * bv[i];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            Tensor g(bv.shape());
            for (size_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * av[i];
            self.parents[1]->accumulate(g);
        }
    });
}

inline ad::Var scale(const ad::Var& a, double s) {
    return ad::make_op(a.value() * s, {a}, [s](ad::Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad * s);
    });
}

inline ad::Var sum(const ad::Var& a) {
    return ad::make_op(Tensor::scalar(a.value().sum()), {a}, [](ad::Node& self) {
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(Tensor::full(self.parents[0]->value.shape(), self.grad[0]));
    });
}

inline ad::Var mean(const ad::Var& a) {
    const double n = static_cast<double>(a.value().numel());
    return ad::make_op(Tensor::scalar(a.value().sum() / n), {a}, [n](ad::Node& self) {
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(Tensor::full(self.parents[0]->value.shape(), self.grad[0] / n));
    });
}

inline ad::Var reshape(const ad::Var& a, std::vector<int> shape) {
    return ad::make_op(a.value().reshaped(std::move(shape)), {a}, [](ad::Node& self) {
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
    });
}

/// Concatenate along the last axis; leading dimensions must agree.
inline ad::Var concat_last(const ad::Var& a, const ad::Var& b) {
    const auto& sa = a.value().shape();
    const auto& sb = b.value().shape();
    if (sa.size() != sb.size()) throw std::invalid_argument("concat_last: rank mismatch");
    for (size_t i = 0; i + 1 < sa.size(); ++i)
        if (sa[i] != sb[i]) throw std::invalid_argument("concat_last: leading dims mismatch");
    const int ca = sa.back(), cb = sb.back();
    const int rows = static_cast<int>(a.value().numel()) / ca;
    std::vector<int> shape = sa;
    shape.back() = ca + cb;
    Tensor y(shape);
    for (int r = 0; r < rows; ++r) {
        std::copy_n(a.value().data() + static_cast<size_t>(r) * ca, ca,
                    y.data() + static_cast<size_t>(r) * (ca + cb));
        std::copy_n(b.value().data() + static_cast<size_t>(r) * cb, cb,
                    y.data() + static_cast<size_t>(r) * (ca + cb) + ca);
    }
    return ad::make_op(std::move(y), {a, b}, [ca, cb, rows](ad::Node& self) {
        for (int side = 0; side < 2; ++side) {
            auto& p = self.parents[static_cast<size_t>(side)];
            if (!p->requires_grad) continue;
            const int c = side == 0 ? ca : cb;
            const int off = side == 0 ? 0 : ca;
            Tensor g(p->value.shape());
            for (int r = 0; r < rows; ++r)
                std::copy_n(self.grad.data() + static_cast<size_t>(r) * (ca + cb) + off, c,
                            g.data() + static_cast<size_t>(r) * c);
            p->accumulate(g);
        }
    });
}

/// Row gather from a [R x C] matrix; indices may repeat. Backward scatters.
inline ad::Var gather_rows(const ad::Var& a, std::vector<int> idx) {
    const int c = a.value().dim(a.value().rank() - 1);
    const int r = static_cast<int>(a.value().numel()) / c;
    Tensor y({static_cast<int>(idx.size()), c});
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= r) throw std::out_of_range("gather_rows: index out of range");
        std::copy_n(a.value().data() + static_cast<size_t>(idx[k]) * c, c,
                    y.data() + k * static_cast<size_t>(c));
    }
    return ad::make_op(std::move(y), {a}, [idx = std::move(idx), c](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g(p->value.shape());
        for (size_t k = 0; k < idx.size(); ++k)
            for (int j = 0; j < c; ++j)
                g[static_cast<size_t>(idx[k]) * c + j] += self.grad[k * static_cast<size_t>(c) + j];
        p->accumulate(g);
    });
}

/// Extract column j of a [R x C] matrix as a length-R vector.
inline ad::Var column(const ad::Var& a, int j) {
    const int c = a.value().dim(a.value().rank() - 1);
    const int r = static_cast<int>(a.value().numel()) / c;
    if (j < 0 || j >= c) throw std::out_of_range("column: index out of range");
    Tensor y({r});
    for (int i = 0; i < r; ++i) y[static_cast<size_t>(i)] = a.value()[static_cast<size_t>(i) * c + j];
    return ad::make_op(std::move(y), {a}, [j, c, r](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g(p->value.shape());
        for (int i = 0; i < r; ++i) g[static_cast<size_t>(i) * c + j] = self.grad[static_cast<size_t>(i)];
        p->accumulate(g);
    });
}

// --------------------------------------------------------------------------
// Linear algebra
// --------------------------------------------------------------------------

/// x [...,K] times w [K,N] with leading dims flattened.
inline ad::Var linear(const ad::Var& x, const ad::Var& w) {
    const int k = w.value().dim(0), n = w.value().dim(1);
    const int rows = static_cast<int>(x.value().numel()) / k;
    if (static_cast<size_t>(rows) * k != x.value().numel())
        throw std::invalid_argument("linear: inner dim mismatch");
    std::vector<int> shape = x.value().shape();
    shape.back() = n;
    Tensor y(shape);
    as_matrix(y, rows, n).noalias() = as_matrix(x.value(), rows, k) * as_matrix(w.value(), k, n);
    return ad::make_op(std::move(y), {x, w}, [rows, k, n](ad::Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        MapConst dy(self.grad.data(), rows, n);
        if (px->requires_grad) {
            Tensor gx(px->value.shape());
            as_matrix(gx, rows, k).noalias() = dy * as_matrix(pw->value, k, n).transpose();
            px->accumulate(gx);
        }
        if (pw->requires_grad) {
            Tensor gw({k, n});
            as_matrix(gw, k, n).noalias() = as_matrix(px->value, rows, k).transpose() * dy;
            pw->accumulate(gw);
        }
    });
}

/// Add a row vector over the last axis (bias).
inline ad::Var add_rowvec(const ad::Var& x, const ad::Var& b) {
    const int n = b.value().dim(0);
    const int rows = static_cast<int>(x.value().numel()) / n;
    Tensor y = x.value();
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j) y[static_cast<size_t>(r) * n + j] += b.value()[static_cast<size_t>(j)];
    return ad::make_op(std::move(y), {x, b}, [rows, n](ad::Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor gb({n});
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < n; ++j) gb[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(r) * n + j];
            self.parents[1]->accumulate(gb);
        }
    });
}

/// Batched matmul: [B,M,K] x [B,K,N] -> [B,M,N].
inline ad::Var bmm(const ad::Var& a, const ad::Var& b) {
    const int B = a.value().dim(0), M = a.value().dim(1), K = a.value().dim(2);
    const int N = b.value().dim(2);
    if (b.value().dim(0) != B || b.value().dim(1) != K) throw std::invalid_argument("bmm: shape mismatch");
    Tensor y({B, M, N});
    for (int i = 0; i < B; ++i) {
        MapConst ai(a.value().data() + static_cast<size_t>(i) * M * K, M, K);
        MapConst bi(b.value().data() + static_cast<size_t>(i) * K * N, K, N);
        MapMat yi(y.data() + static_cast<size_t>(i) * M * N, M, N);
        yi.noalias() = ai * bi;
    }
    return ad::make_op(std::move(y), {a, b}, [B, M, K, N](ad::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        Tensor ga, gb;
        if (pa->requires_grad) ga = Tensor({B, M, K});
        if (pb->requires_grad) gb = Tensor({B, K, N});
        for (int i = 0; i < B; ++i) {
            MapConst dy(self.grad.data() + static_cast<size_t>(i) * M * N, M, N);
            if (pa->requires_grad) {
                MapConst bi(pb->value.data() + static_cast<size_t>(i) * K * N, K, N);
                MapMat gi(ga.data() + static_cast<size_t>(i) * M * K, M, K);
                gi.noalias() = dy * bi.transpose();
            }
            if (pb->requires_grad) {
                MapConst ai(pa->value.data() + static_cast<size_t>(i) * M * K, M, K);
                MapMat gi(gb.data() + static_cast<size_t>(i) * K * N, K, N);
                gi.noalias() = ai.transpose() * dy;
            }
        }
        if (pa->requires_grad) pa->accumulate(ga);
        if (pb->requires_grad) pb->accumulate(gb);
    });
}

/// Batched matmul with transposed second factor: [B,M,K] x [B,N,K] -> [B,M,N].
inline ad::Var bmm_bt(const ad::Var& a, const ad::Var& b) {
    const int B = a.value().dim(0), M = a.value().dim(1), K = a.value().dim(2);
    const int N = b.value().dim(1);
    if (b.value().dim(0) != B || b.value().dim(2) != K) throw std::invalid_argument("bmm_bt: shape mismatch");
    Tensor y({B, M, N});
    for (int i = 0; i < B; ++i) {
        MapConst ai(a.value().data() + static_cast<size_t>(i) * M * K, M, K);
        MapConst bi(b.value().data() + static_cast<size_t>(i) * N * K, N, K);
        MapMat yi(y.data() + static_cast<size_t>(i) * M * N, M, N);
        yi.noalias() = ai * bi.transpose();
    }
    return ad::make_op(std::move(y), {a, b}, [B, M, K, N](ad::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        Tensor ga, gb;
        if (pa->requires_grad) ga = Tensor({B, M, K});
        if (pb->requires_grad) gb = Tensor({B, N, K});
        for (int i = 0; i < B; ++i) {
            MapConst dy(self.grad.data() + static_cast<size_t>(i) * M * N, M, N);
            if (pa->requires_grad) {
                MapConst bi(pb->value.data() + static_cast<size_t>(i) * N * K, N, K);
                MapMat gi(ga.data() + static_cast<size_t>(i) * M * K, M, K);
                gi.noalias() = dy * bi;
            }
            if (pb->requires_grad) {
                MapConst ai(pa->value.data() + static_cast<size_t>(i) * M * K, M, K);
                MapMat gi(gb.data() + static_cast<size_t>(i) * N * K, N, K);
                gi.noalias() = dy.transpose() * ai;
            }
        }
        if (pa->requires_grad) pa->accumulate(ga);
        if (pb->requires_grad) pb->accumulate(gb);
    });
}

// --------------------------------------------------------------------------
// Network layers
// --------------------------------------------------------------------------

namespace detail {

/// im2col for channels-last input with zero padding, stride 1.
inline void im2col(const double* x, int h, int w, int cin, int kh, int kw, int pad, double* col) {
    const int taps = kh * kw * cin;
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            double* row = col + (static_cast<size_t>(y) * w + xx) * taps;
            for (int dy = 0; dy < kh; ++dy) {
                const int sy = y + dy - pad;
                for (int dx = 0; dx < kw; ++dx) {
                    const int sx = xx + dx - pad;
                    double* dst = row + (static_cast<size_t>(dy) * kw + dx) * cin;
                    if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
                        std::fill_n(dst, cin, 0.0);
                    } else {
                        std::copy_n(x + (static_cast<size_t>(sy) * w + sx) * cin, cin, dst);
                    }
                }
            }
        }
}

inline void col2im_add(const double* col, int h, int w, int cin, int kh, int kw, int pad, double* out) {
    const int taps = kh * kw * cin;
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            const double* row = col + (static_cast<size_t>(y) * w + xx) * taps;
            for (int dy = 0; dy < kh; ++dy) {
                const int sy = y + dy - pad;
                if (sy < 0 || sy >= h) continue;
                for (int dx = 0; dx < kw; ++dx) {
                    const int sx = xx + dx - pad;
                    if (sx < 0 || sx >= w) continue;
                    const double* src = row + (static_cast<size_t>(dy) * kw + dx) * cin;
                    double* dst = out + (static_cast<size_t>(sy) * w + sx) * cin;
                    for (int c = 0; c < cin; ++c) dst[c] += src[c];
                }
            }
        }
}

}  // namespace detail

/// Stride-1 zero-padded convolution. x [B,H,W,Cin], w [kh*kw*Cin, Cout],
/// bias [Cout]. The im2col buffer is rebuilt in backward instead of saved.
inline ad::Var conv2d(const ad::Var& x, const ad::Var& w, const ad::Var& bias, int kh, int kw, int pad) {
    const int B = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2), Cin = x.value().dim(3);
    const int taps = kh * kw * Cin;
    if (w.value().dim(0) != taps) throw std::invalid_argument("conv2d: weight rows != kh*kw*Cin");
    const int Cout = w.value().dim(1);
    const int HW = H * W;
    Tensor y({B, H, W, Cout});
    Tensor col({HW, taps});
    for (int b = 0; b < B; ++b) {
        detail::im2col(x.value().data() + static_cast<size_t>(b) * HW * Cin, H, W, Cin, kh, kw, pad, col.data());
        MapMat yb(y.data() + static_cast<size_t>(b) * HW * Cout, HW, Cout);
        yb.noalias() = as_matrix(col, HW, taps) * as_matrix(w.value(), taps, Cout);
        for (int r = 0; r < HW; ++r)
            for (int c = 0; c < Cout; ++c) yb(r, c) += bias.value()[static_cast<size_t>(c)];
    }
    return ad::make_op(std::move(y), {x, w, bias}, [B, H, W, Cin, Cout, kh, kw, pad, taps](ad::Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const int HW = H * W;
        Tensor col({HW, taps});
        Tensor gx, gw, gb;
        if (px->requires_grad) gx = Tensor({B, H, W, Cin});
        if (pw->requires_grad) gw = Tensor({taps, Cout});
        if (pb->requires_grad) gb = Tensor({Cout});
        Tensor dcol({HW, taps});
        for (int b = 0; b < B; ++b) {
            MapConst dy(self.grad.data() + static_cast<size_t>(b) * HW * Cout, HW, Cout);
            if (pw->requires_grad || px->requires_grad)
                detail::im2col(px->value.data() + static_cast<size_t>(b) * HW * Cin, H, W, Cin, kh, kw, pad,
                               col.data());
            if (pw->requires_grad)
                as_matrix(gw, taps, Cout).noalias() += as_matrix(col, HW, taps).transpose() * dy;
            if (px->requires_grad) {
                as_matrix(dcol, HW, taps).noalias() = dy * as_matrix(pw->value, taps, Cout).transpose();
                detail::col2im_add(dcol.data(), H, W, Cin, kh, kw, pad,
                                   gx.data() + static_cast<size_t>(b) * HW * Cin);
            }
            if (pb->requires_grad)
                for (int r = 0; r < HW; ++r)
                    for (int c = 0; c < Cout; ++c) gb[static_cast<size_t>(c)] += dy(r, c);
        }
        if (px->requires_grad) px->accumulate(gx);
        if (pw->requires_grad) pw->accumulate(gw);
        if (pb->requires_grad) pb->accumulate(gb);
    });
}

/// GroupNorm over channels-last activations.
inline ad::Var groupnorm(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, int groups,
                         double eps = 1e-5) {
    const int B = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2), C = x.value().dim(3);
    if (C % groups != 0) throw std::invalid_argument("groupnorm: C % groups != 0");
    const int S = C / groups, HW = H * W;
    Tensor y({B, H, W, C});
    Tensor mean({B, groups}), inv_std({B, groups});
    const double n = static_cast<double>(HW) * S;
    for (int b = 0; b < B; ++b) {
        const double* xb = x.value().data() + static_cast<size_t>(b) * HW * C;
        for (int g = 0; g < groups; ++g) {
            double m = 0.0;
            for (int p = 0; p < HW; ++p)
                for (int c = g * S; c < (g + 1) * S; ++c) m += xb[static_cast<size_t>(p) * C + c];
            m /= n;
            double v = 0.0;
            for (int p = 0; p < HW; ++p)
                for (int c = g * S; c < (g + 1) * S; ++c) {
                    const double d = xb[static_cast<size_t>(p) * C + c] - m;
                    v += d * d;
                }
            v /= n;
            mean.at(b, g) = m;
            inv_std.at(b, g) = 1.0 / std::sqrt(v + eps);
        }
        double* yb = y.data() + static_cast<size_t>(b) * HW * C;
        for (int p = 0; p < HW; ++p)
            for (int c = 0; c < C; ++c) {
                const int g = c / S;
                const double xh = (xb[static_cast<size_t>(p) * C + c] - mean.at(b, g)) * inv_std.at(b, g);
                yb[static_cast<size_t>(p) * C + c] = gamma.value()[static_cast<size_t>(c)] * xh +
                                                     beta.value()[static_cast<size_t>(c)];
            }
    }
    return ad::make_op(std::move(y), {x, gamma, beta},
                       [B, H, W, C, S, groups, mean, inv_std](ad::Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const int HW = H * W;
        const double n = static_cast<double>(HW) * S;
        Tensor gx, gg, gb;
        if (px->requires_grad) gx = Tensor({B, H, W, C});
        if (pg->requires_grad) gg = Tensor({C});
        if (pb->requires_grad) gb = Tensor({C});
        for (int b = 0; b < B; ++b) {
            const double* xb = px->value.data() + static_cast<size_t>(b) * HW * C;
            const double* dy = self.grad.data() + static_cast<size_t>(b) * HW * C;
            for (int g = 0; g < groups; ++g) {
                const double m = mean.at(b, g), is = inv_std.at(b, g);
                double s_dxh = 0.0, s_dxh_xh = 0.0;
                for (int p = 0; p < HW; ++p)
                    for (int c = g * S; c < (g + 1) * S; ++c) {
                        const size_t i = static_cast<size_t>(p) * C + c;
                        const double xh = (xb[i] - m) * is;
                        const double dxh = dy[i] * pg->value[static_cast<size_t>(c)];
                        s_dxh += dxh;
                        s_dxh_xh += dxh * xh;
                        if (pg->requires_grad) gg[static_cast<size_t>(c)] += dy[i] * xh;
                        if (pb->requires_grad) gb[static_cast<size_t>(c)] += dy[i];
                    }
                if (px->requires_grad) {
                    double* gxb = gx.data() + static_cast<size_t>(b) * HW * C;
                    for (int p = 0; p < HW; ++p)
                        for (int c = g * S; c < (g + 1) * S; ++c) {
                            const size_t i = static_cast<size_t>(p) * C + c;
                            const double xh = (xb[i] - m) * is;
                            const double dxh = dy[i] * pg->value[static_cast<size_t>(c)];
                            gxb[i] = is * (dxh - s_dxh / n - xh * s_dxh_xh / n);
                        }
                }
            }
        }
        if (px->requires_grad) px->accumulate(gx);
        if (pg->requires_grad) pg->accumulate(gg);
        if (pb->requires_grad) pb->accumulate(gb);
    });
}

inline ad::Var silu(const ad::Var& x) {
    Tensor y(x.value().shape());
    for (size_t i = 0; i < y.numel(); ++i) {
        const double v = x.value()[i];
        y[i] = v / (1.0 + std::exp(-v));
    }
    return ad::make_op(std::move(y), {x}, [](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g(p->value.shape());
        for (size_t i = 0; i < g.numel(); ++i) {
            const double v = p->value[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            g[i] = self.grad[i] * s * (1.0 + v * (1.0 - s));
        }
        p->accumulate(g);
    });
}

inline ad::Var avgpool2(const ad::Var& x) {
    const int B = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2), C = x.value().dim(3);
    if (H % 2 || W % 2) throw std::invalid_argument("avgpool2: odd spatial size");
    Tensor y({B, H / 2, W / 2, C});
    for (int b = 0; b < B; ++b)
        for (int yy = 0; yy < H / 2; ++yy)
            for (int xx = 0; xx < W / 2; ++xx)
                for (int c = 0; c < C; ++c)
                    y.at(b, yy, xx, c) = 0.25 * (x.value().at(b, 2 * yy, 2 * xx, c) +
                                                 x.value().at(b, 2 * yy, 2 * xx + 1, c) +
                                                 x.value().at(b, 2 * yy + 1, 2 * xx, c) +
                                                 x.value().at(b, 2 * yy + 1, 2 * xx + 1, c));
    return ad::make_op(std::move(y), {x}, [B, H, W, C](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g({B, H, W, C});
        for (int b = 0; b < B; ++b)
            for (int yy = 0; yy < H / 2; ++yy)
                for (int xx = 0; xx < W / 2; ++xx)
                    for (int c = 0; c < C; ++c) {
                        const double v = 0.25 * self.grad.at(b, yy, xx, c);
                        g.at(b, 2 * yy, 2 * xx, c) = v;
                        g.at(b, 2 * yy, 2 * xx + 1, c) = v;
                        g.at(b, 2 * yy + 1, 2 * xx, c) = v;
                        g.at(b, 2 * yy + 1, 2 * xx + 1, c) = v;
                    }
        p->accumulate(g);
    });
}

inline ad::Var upsample2(const ad::Var& x) {
    const int B = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2), C = x.value().dim(3);
    Tensor y({B, 2 * H, 2 * W, C});
    for (int b = 0; b < B; ++b)
        for (int yy = 0; yy < 2 * H; ++yy)
            for (int xx = 0; xx < 2 * W; ++xx)
                for (int c = 0; c < C; ++c) y.at(b, yy, xx, c) = x.value().at(b, yy / 2, xx / 2, c);
    return ad::make_op(std::move(y), {x}, [B, H, W, C](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g({B, H, W, C});
        for (int yy = 0; yy < 2 * H; ++yy)
            for (int xx = 0; xx < 2 * W; ++xx)
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) g.at(b, yy / 2, xx / 2, c) += self.grad.at(b, yy, xx, c);
        p->accumulate(g);
    });
}

/// Per-sample channel bias: x [B,H,W,C] + v [B,C] broadcast over space.
inline ad::Var add_bias_per_sample(const ad::Var& x, const ad::Var& v) {
    const int B = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2), C = x.value().dim(3);
    if (v.value().dim(0) != B || v.value().dim(1) != C)
        throw std::invalid_argument("add_bias_per_sample: shape mismatch");
    Tensor y = x.value();
    for (int b = 0; b < B; ++b)
        for (int p = 0; p < H * W; ++p)
            for (int c = 0; c < C; ++c)
                y[(static_cast<size_t>(b) * H * W + p) * C + c] += v.value().at(b, c);
    return ad::make_op(std::move(y), {x, v}, [B, H, W, C](ad::Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor gv({B, C});
            for (int b = 0; b < B; ++b)
                for (int p = 0; p < H * W; ++p)
                    for (int c = 0; c < C; ++c)
                        gv.at(b, c) += self.grad[(static_cast<size_t>(b) * H * W + p) * C + c];
            self.parents[1]->accumulate(gv);
        }
    });
}

/// Softmax over the last axis of any tensor (rows = flattened leading dims).
inline ad::Var softmax_lastdim(const ad::Var& x) {
    const int c = x.value().dim(x.value().rank() - 1);
    const int r = static_cast<int>(x.value().numel()) / c;
    Tensor y = num::softmax_rows(x.value().reshaped({r, c})).reshaped(x.value().shape());
    return ad::make_op(std::move(y), {x}, [r, c](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor dx = num::softmax_rows_vjp(self.value.reshaped({r, c}), self.grad.reshaped({r, c}));
        p->accumulate(dx.reshaped(p->value.shape()));
    });
}

// --------------------------------------------------------------------------
// Guidance-loss ops
// --------------------------------------------------------------------------

inline ad::Var minmax_normalize(const ad::Var& x) {
    return ad::make_op(num::minmax_normalize(x.value()), {x}, [](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->accumulate(num::minmax_normalize_vjp(p->value, self.grad));
    });
}

inline ad::Var gaussian_smooth(const ad::Var& x, int kernel_size, double sigma) {
    return ad::make_op(num::gaussian_smooth(x.value(), kernel_size, sigma), {x},
                       [kernel_size, sigma](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->accumulate(num::gaussian_smooth_vjp(p->value, kernel_size, sigma, self.grad));
    });
}

/// Frobenius distance to a constant target.
inline ad::Var frobenius_to(const ad::Var& x, Tensor target) {
    const double d = num::frobenius_distance(x.value(), target);
    return ad::make_op(Tensor::scalar(d), {x}, [target = std::move(target)](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->accumulate(num::frobenius_distance_vjp_a(p->value, target, self.grad[0]));
    });
}

/// Pairwise cosine distances against a constant reference set: C [n x m]
/// where rows index the reference and columns index `gen`.
inline ad::Var cosine_distance_to_ref(Tensor ref, const ad::Var& gen) {
    Tensor c = num::cosine_distance_matrix(ref, gen.value());
    return ad::make_op(std::move(c), {gen}, [ref = std::move(ref)](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->accumulate(num::cosine_distance_matrix_vjp_b(ref, p->value, self.grad));
    });
}

/// Column-wise minima of a cost matrix, scaled: w * sum_j min_i C_ij.
/// Ties break toward the lowest row index. Optionally reports the argmins.
inline ad::Var colmin_sum(const ad::Var& c, double w, std::vector<int>* argmins = nullptr) {
    const int n = c.value().dim(0), m = c.value().dim(1);
    std::vector<int> idx(static_cast<size_t>(m), 0);
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (c.value().at(i, j) < c.value().at(best, j)) best = i;
        idx[static_cast<size_t>(j)] = best;
        s += c.value().at(best, j);
    }
    if (argmins) *argmins = idx;
    return ad::make_op(Tensor::scalar(w * s), {c}, [idx = std::move(idx), w, n, m](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g({n, m});
        for (int j = 0; j < m; ++j) g.at(idx[static_cast<size_t>(j)], j) = w * self.grad[0];
        p->accumulate(g);
    });
}

/// Mean squared error against a constant target.
inline ad::Var mse_to(const ad::Var& x, Tensor target) {
    if (!x.value().same_shape(target)) throw std::invalid_argument("mse_to: shape mismatch");
    const size_t n = x.value().numel();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = x.value()[i] - target[i];
        s += d * d;
    }
    return ad::make_op(Tensor::scalar(s / static_cast<double>(n)), {x},
                       [target = std::move(target), n](ad::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor g(p->value.shape());
        const double c = 2.0 * self.grad[0] / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) g[i] = c * (p->value[i] - target[i]);
        p->accumulate(g);
    });
}

}  // namespace pickdraw::ops
