// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "pickdraw/autodiff.hpp"
#include "pickdraw/tensor.hpp"

// Central-difference gradient checking. Used by the unit tests to validate
// every op's VJP and by the acceptance suite to bound the error of the
// composed guidance-energy gradient.

namespace pickdraw::ad {

struct GradCheckResult {
    double max_rel_err = 0.0;
    size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool finite = true;
    std::string note;

    bool ok(double tol) const { return finite && max_rel_err <= tol; }
};

/// Compares the tape gradient of a scalar-valued function against central
/// differences. Non-scalar outputs are reduced with a fixed random cotangent
/// so a single backward pass suffices. Step size per coordinate is
/// h_scale * max(1, |x_i|); relative error uses a floor tied to the largest
/// finite-difference entry so near-zero coordinates do not dominate.
inline GradCheckResult grad_check(const std::function<Var(const Var&)>& fn, const Tensor& point,
                                  uint64_t cotangent_seed = 1234, double h_scale = 1e-5) {
    GradCheckResult res;

    Var x(point, /*requires_grad=*/true);
    Var y = fn(x);

    Tensor cotangent;
    const bool scalar_out = y.value().numel() == 1;
    if (!scalar_out) {
        Rng rng(cotangent_seed);
        cotangent = rng.normal_tensor(y.value().shape());
    }

    backward(y, scalar_out ? nullptr : &cotangent);
    if (!x.has_grad()) {
        res.note = "no gradient reached the input";
        res.finite = false;
        return res;
    }
    Tensor g_ad = x.grad();
    if (!g_ad.all_finite()) {
        res.note = "analytic gradient not finite";
        res.finite = false;
        return res;
    }

    auto eval = [&](const Tensor& p) {
        NoGradGuard guard;
        Var v(p, false);
        Tensor out = fn(v).value();
        if (scalar_out) return out[0];
        double s = 0.0;
        for (size_t i = 0; i < out.numel(); ++i) s += out[i] * cotangent[i];
        return s;
    };

    Tensor g_fd(point.shape());
    Tensor probe = point;
    for (size_t i = 0; i < point.numel(); ++i) {
        const double h = h_scale * std::max(1.0, std::abs(point[i]));
        probe[i] = point[i] + h;
        const double f_plus = eval(probe);
        probe[i] = point[i] - h;
        const double f_minus = eval(probe);
        probe[i] = point[i];
        g_fd[i] = (f_plus - f_minus) / (2.0 * h);
    }
    if (!g_fd.all_finite()) {
        res.note = "finite-difference gradient not finite";
        res.finite = false;
        return res;
    }

    const double floor = std::max(1e-12, 1e-2 * g_fd.abs_max());
    for (size_t i = 0; i < point.numel(); ++i) {
        const double denom = std::max({std::abs(g_fd[i]), std::abs(g_ad[i]), floor});
        const double rel = std::abs(g_ad[i] - g_fd[i]) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_index = i;
            res.analytic_at_worst = g_ad[i];
            res.numeric_at_worst = g_fd[i];
        }
    }
    return res;
}

}  // namespace pickdraw::ad
