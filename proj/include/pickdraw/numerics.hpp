// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pickdraw/tensor.hpp"

namespace pickdraw::num {

// ---------------------------------------------------------------------------
// Forward kernels. Each kernel that participates in a guidance loss has a
// matching *_vjp below; the pair is what the autodiff layer wraps.
// ---------------------------------------------------------------------------

/// Row-wise softmax with row-max subtraction. Rejects non-finite input.
inline Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax_rows: expected 2-D input");
    if (!logits.all_finite()) throw std::invalid_argument("softmax_rows: non-finite input");
    const int r = logits.dim(0), c = logits.dim(1);
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
        double m = logits.at(i, 0);
        for (int j = 1; j < c; ++j) m = std::max(m, logits.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            double e = std::exp(logits.at(i, j) - m);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    return out;
}

/// VJP of softmax_rows given the forward output y: dx = y * (dy - sum(dy*y)).
inline Tensor softmax_rows_vjp(const Tensor& y, const Tensor& dy) {
    const int r = y.dim(0), c = y.dim(1);
    Tensor dx({r, c});
    for (int i = 0; i < r; ++i) {
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += dy.at(i, j) * y.at(i, j);
        for (int j = 0; j < c; ++j) dx.at(i, j) = y.at(i, j) * (dy.at(i, j) - dot);
    }
    return dx;
}

/// Min-max normalization to [0,1]. A constant map maps to all zeros.
inline Tensor minmax_normalize(const Tensor& map) {
    if (!map.all_finite()) throw std::invalid_argument("minmax_normalize: non-finite input");
    const double lo = map.min(), hi = map.max();
    Tensor out(map.shape());
    if (hi - lo <= 0.0) return out;  // featureless map selects nothing
    const double inv = 1.0 / (hi - lo);
    for (size_t i = 0; i < map.numel(); ++i) out[i] = (map[i] - lo) * inv;
    return out;
}

/// VJP of minmax_normalize. Subgradient choice: min/max anchor entries are the
/// first occurrences in row-major order, matching the forward scan.
inline Tensor minmax_normalize_vjp(const Tensor& x, const Tensor& dy) {
    const size_t n = x.numel();
    size_t imin = 0, imax = 0;
    for (size_t i = 1; i < n; ++i) {
        if (x[i] < x[imin]) imin = i;
        if (x[i] > x[imax]) imax = i;
    }
    Tensor dx(x.shape());
    const double range = x[imax] - x[imin];
    if (range <= 0.0) return dx;
    const double inv = 1.0 / range;
    // y_i = (x_i - lo) / (hi - lo): direct term plus the terms through lo, hi.
    double s_dy = 0.0, s_dyy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        s_dy += dy[i];
        s_dyy += dy[i] * (x[i] - x[imin]) * inv;
    }
    for (size_t i = 0; i < n; ++i) dx[i] = dy[i] * inv;
    dx[imin] += (-s_dy + s_dyy) * inv;
    dx[imax] += -s_dyy * inv;
    return dx;
}

/// Pairwise cosine distances C_ij = 1 - <A_i,B_j>/(|A_i||B_j|) between two
/// row sets of equal feature dimension. Zero-norm rows are rejected.
inline Tensor cosine_distance_matrix(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw std::invalid_argument("cosine_distance_matrix: need [n x D] and [m x D]");
    const int n = a.dim(0), m = b.dim(0), d = a.dim(1);
    auto row_norms = [d](const Tensor& t, const char* side) {
        std::vector<double> ns(static_cast<size_t>(t.dim(0)));
        for (int i = 0; i < t.dim(0); ++i) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += t.at(i, k) * t.at(i, k);
            if (s <= 0.0)
                throw std::invalid_argument(std::string("cosine_distance_matrix: zero-norm vector ") +
                                            side + "[" + std::to_string(i) + "]");
            ns[static_cast<size_t>(i)] = std::sqrt(s);
        }
        return ns;
    };
    const auto na = row_norms(a, "A"), nb = row_norms(b, "B");
    Tensor c({n, m});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += a.at(i, k) * b.at(j, k);
            c.at(i, j) = 1.0 - dot / (na[static_cast<size_t>(i)] * nb[static_cast<size_t>(j)]);
        }
    return c;
}

/// VJP of cosine_distance_matrix with respect to the second argument B.
/// d(1 - cos)/dB_j = -(A_i/(|A_i||B_j|) - cos(i,j) * B_j/|B_j|^2).
inline Tensor cosine_distance_matrix_vjp_b(const Tensor& a, const Tensor& b, const Tensor& dc) {
    const int n = a.dim(0), m = b.dim(0), d = a.dim(1);
    Tensor db({m, d});
    for (int j = 0; j < m; ++j) {
        double nb2 = 0.0;
        for (int k = 0; k < d; ++k) nb2 += b.at(j, k) * b.at(j, k);
        const double nb = std::sqrt(nb2);
        for (int i = 0; i < n; ++i) {
            const double g = dc.at(i, j);
            if (g == 0.0) continue;
            double na2 = 0.0, dot = 0.0;
            for (int k = 0; k < d; ++k) {
                na2 += a.at(i, k) * a.at(i, k);
                dot += a.at(i, k) * b.at(j, k);
            }
            const double na = std::sqrt(na2);
            const double inv = 1.0 / (na * nb);
            const double cosv = dot * inv;
            for (int k = 0; k < d; ++k)
                db.at(j, k) += g * (cosv * b.at(j, k) / nb2 - a.at(i, k) * inv);
        }
    }
    return db;
}

/// Normalized 2-D Gaussian kernel, odd size.
inline Tensor gaussian_kernel(int kernel_size, double sigma) {
    if (kernel_size <= 0 || kernel_size % 2 == 0)
        throw std::invalid_argument("gaussian_kernel: kernel_size must be odd and positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    const int c = kernel_size / 2;
    Tensor k({kernel_size, kernel_size});
    double s = 0.0;
    for (int i = 0; i < kernel_size; ++i)
        for (int j = 0; j < kernel_size; ++j) {
            double r2 = double(i - c) * (i - c) + double(j - c) * (j - c);
            double v = std::exp(-r2 / (2.0 * sigma * sigma));
            k.at(i, j) = v;
            s += v;
        }
    for (size_t i = 0; i < k.numel(); ++i) k[i] /= s;
    return k;
}

inline int reflect_index(int i, int n) {
    // half-sample symmetric reflection: -1 -> 0, n -> n-1
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

/// 2-D convolution with a normalized Gaussian kernel, reflect padding.
/// Constant maps are fixed points and total mass is conserved.
inline Tensor gaussian_smooth(const Tensor& map, int kernel_size, double sigma) {
    if (map.rank() != 2) throw std::invalid_argument("gaussian_smooth: expected 2-D map");
    const Tensor k = gaussian_kernel(kernel_size, sigma);
    const int h = map.dim(0), w = map.dim(1), c = kernel_size / 2;
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -c; dy <= c; ++dy)
                for (int dx = -c; dx <= c; ++dx)
                    s += k.at(dy + c, dx + c) * map.at(reflect_index(y + dy, h), reflect_index(x + dx, w));
            out.at(y, x) = s;
        }
    return out;
}

/// VJP of gaussian_smooth: the adjoint scatters through the same reflected
/// taps, which is not a plain flipped-kernel convolution at the borders.
inline Tensor gaussian_smooth_vjp(const Tensor& map, int kernel_size, double sigma, const Tensor& dy) {
    const Tensor k = gaussian_kernel(kernel_size, sigma);
    const int h = map.dim(0), w = map.dim(1), c = kernel_size / 2;
    Tensor dx({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double g = dy.at(y, x);
            for (int ddy = -c; ddy <= c; ++ddy)
                for (int ddx = -c; ddx <= c; ++ddx)
                    dx.at(reflect_index(y + ddy, h), reflect_index(x + ddx, w)) += g * k.at(ddy + c, ddx + c);
        }
    return dx;
}

/// Frobenius distance sqrt(sum (A-B)^2); shapes must match.
inline double frobenius_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("frobenius_distance: shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// VJP of frobenius_distance with respect to A; zero at the non-smooth point.
inline Tensor frobenius_distance_vjp_a(const Tensor& a, const Tensor& b, double g) {
    Tensor da(a.shape());
    const double f = frobenius_distance(a, b);
    if (f <= 0.0) return da;
    const double s = g / f;
    for (size_t i = 0; i < a.numel(); ++i) da[i] = s * (a[i] - b[i]);
    return da;
}

}  // namespace pickdraw::num
