// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pickdraw/numerics.hpp"
#include "pickdraw/tensor.hpp"

// Optimal transport between feature sets. emd_exact solves the uniform
// transportation problem (row mass 1/n, column mass 1/m) with the
// transportation simplex; it is oracle-scale only (n, m <= 16) and exists to
// validate the relaxed loss. uremd is the closed-form relaxation that the
// guidance actually uses: each generated feature is matched to its nearest
// reference feature.

namespace pickdraw::ot {

enum class Normalization {
    paper_1_over_n,  // (1/n) * sum_j min_i C_ij
    mean_1_over_m,   // (1/m) * sum_j min_i C_ij
};

struct EmdResult {
    double cost = 0.0;
    Tensor plan;  // [n, m], row sums 1/n, column sums 1/m
    int pivots = 0;
};

struct UremdResult {
    double loss = 0.0;
    std::vector<int> argmin;  // per generated column, matched reference row
};

/// Exact EMD on a precomputed cost matrix via the transportation simplex
/// (MODI pivoting, Bland's rule for both entering and leaving variables).
inline EmdResult emd_exact_cost(const Tensor& c) {
    if (c.rank() != 2) throw std::invalid_argument("emd_exact: cost must be 2-D");
    const int n = c.dim(0), m = c.dim(1);
    if (n < 1 || m < 1 || n > 16 || m > 16)
        throw std::invalid_argument("emd_exact: n,m must be in [1,16]");
    if (!c.all_finite()) throw std::invalid_argument("emd_exact: non-finite cost");

    const double row_mass = 1.0 / n, col_mass = 1.0 / m;
    Tensor flow({n, m});
    std::vector<char> basic(static_cast<size_t>(n) * m, 0);

    // Northwest-corner start: exactly n+m-1 basic cells, zero cells included.
    {
        std::vector<double> ra(static_cast<size_t>(n), row_mass);
        std::vector<double> rb(static_cast<size_t>(m), col_mass);
        int i = 0, j = 0;
        while (true) {
            const double f = std::min(ra[static_cast<size_t>(i)], rb[static_cast<size_t>(j)]);
            flow.at(i, j) = f;
            basic[static_cast<size_t>(i) * m + j] = 1;
            ra[static_cast<size_t>(i)] -= f;
            rb[static_cast<size_t>(j)] -= f;
            if (i == n - 1 && j == m - 1) break;
            if (ra[static_cast<size_t>(i)] <= rb[static_cast<size_t>(j)] && i < n - 1)
                ++i;
            else
                ++j;
        }
    }

    const int nodes = n + m;  // rows 0..n-1, columns n..n+m-1
    std::vector<double> u(static_cast<size_t>(n)), v(static_cast<size_t>(m));
    std::vector<int> parent(static_cast<size_t>(nodes));
    std::vector<char> seen(static_cast<size_t>(nodes));
    const int cap = 2000;
    int pivots = 0;

    for (;; ++pivots) {
        if (pivots >= cap) {
            std::ostringstream ss;
            ss << "emd_exact: pivot cap exceeded (n=" << n << ", m=" << m << ", pivots=" << pivots
               << ", cost so far=";
            double running = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) running += flow.at(i, j) * c.at(i, j);
            ss << running << ")";
            throw std::runtime_error(ss.str());
        }

        // Potentials from the basis tree: u_i + v_j = c_ij on basic cells.
        std::fill(seen.begin(), seen.end(), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        u[0] = 0.0;
        while (!stack.empty()) {
            const int node = stack.back();
            stack.pop_back();
            if (node < n) {
                for (int j = 0; j < m; ++j)
                    if (basic[static_cast<size_t>(node) * m + j] && !seen[static_cast<size_t>(n + j)]) {
                        v[static_cast<size_t>(j)] = c.at(node, j) - u[static_cast<size_t>(node)];
                        seen[static_cast<size_t>(n + j)] = 1;
                        stack.push_back(n + j);
                    }
            } else {
                const int j = node - n;
                for (int i = 0; i < n; ++i)
                    if (basic[static_cast<size_t>(i) * m + j] && !seen[static_cast<size_t>(i)]) {
                        u[static_cast<size_t>(i)] = c.at(i, j) - v[static_cast<size_t>(j)];
                        seen[static_cast<size_t>(i)] = 1;
                        stack.push_back(i);
                    }
            }
        }

        // Entering variable: lowest-index cell with negative reduced cost.
        int ei = -1, ej = -1;
        for (int i = 0; i < n && ei < 0; ++i)
            for (int j = 0; j < m; ++j)
                if (!basic[static_cast<size_t>(i) * m + j] &&
                    c.at(i, j) - u[static_cast<size_t>(i)] - v[static_cast<size_t>(j)] < -1e-12) {
                    ei = i;
                    ej = j;
                    break;
                }
        if (ei < 0) break;  // optimal

        // Unique tree path from column ej back to row ei.
        std::fill(seen.begin(), seen.end(), 0);
        std::fill(parent.begin(), parent.end(), -1);
        stack.assign(1, n + ej);
        seen[static_cast<size_t>(n + ej)] = 1;
        while (!stack.empty()) {
            const int node = stack.back();
            stack.pop_back();
            if (node == ei) break;
            if (node < n) {
                for (int j = 0; j < m; ++j)
                    if (basic[static_cast<size_t>(node) * m + j] && !seen[static_cast<size_t>(n + j)]) {
                        seen[static_cast<size_t>(n + j)] = 1;
                        parent[static_cast<size_t>(n + j)] = node;
                        stack.push_back(n + j);
                    }
            } else {
                const int j = node - n;
                for (int i = 0; i < n; ++i)
                    if (basic[static_cast<size_t>(i) * m + j] && !seen[static_cast<size_t>(i)]) {
                        seen[static_cast<size_t>(i)] = 1;
                        parent[static_cast<size_t>(i)] = node;
                        stack.push_back(i);
                    }
            }
        }
        if (!seen[static_cast<size_t>(ei)]) throw std::runtime_error("emd_exact: basis tree disconnected");

        // Cycle = entering cell (+) followed by alternating signs along the path.
        std::vector<std::pair<int, int>> minus, plus;
        int node = ei;
        bool sign_plus = false;  // edge touching the entering row comes first and is '-'
        while (node != n + ej) {
            const int par = parent[static_cast<size_t>(node)];
            const int i = node < n ? node : par;
            const int j = node < n ? par - n : node - n;
            (sign_plus ? plus : minus).emplace_back(i, j);
            sign_plus = !sign_plus;
            node = par;
        }

        double theta = std::numeric_limits<double>::infinity();
        int li = -1, lj = -1;
        for (const auto& [i, j] : minus) {
            const double f = flow.at(i, j);
            if (f < theta - 1e-15 ||
                (f < theta + 1e-15 && (li < 0 || static_cast<int64_t>(i) * m + j < static_cast<int64_t>(li) * m + lj))) {
                theta = f;
                li = i;
                lj = j;
            }
        }

        for (const auto& [i, j] : minus) flow.at(i, j) -= theta;
        for (const auto& [i, j] : plus) flow.at(i, j) += theta;
        flow.at(ei, ej) = theta;
        basic[static_cast<size_t>(ei) * m + ej] = 1;
        basic[static_cast<size_t>(li) * m + lj] = 0;
        flow.at(li, lj) = 0.0;
    }

    // Feasibility check before trusting the result.
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            if (flow.at(i, j) < -1e-12) throw std::runtime_error("emd_exact: negative flow");
            if (flow.at(i, j) < 0.0) flow.at(i, j) = 0.0;
            s += flow.at(i, j);
        }
        if (std::abs(s - row_mass) > 1e-9) throw std::runtime_error("emd_exact: row marginal violated");
    }
    for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += flow.at(i, j);
        if (std::abs(s - col_mass) > 1e-9) throw std::runtime_error("emd_exact: column marginal violated");
    }

    EmdResult res;
    res.pivots = pivots;
    res.plan = std::move(flow);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) res.cost += res.plan.at(i, j) * c.at(i, j);
    return res;
}

/// Relaxed unidirectional EMD on a precomputed cost matrix. Keeps only the
/// generated-side constraint, so each column picks its cheapest row.
inline UremdResult uremd_cost(const Tensor& c, Normalization norm) {
    if (c.rank() != 2) throw std::invalid_argument("uremd: cost must be 2-D");
    const int n = c.dim(0), m = c.dim(1);
    if (n < 1 || m < 1) throw std::invalid_argument("uremd: empty feature set");
    UremdResult res;
    res.argmin.resize(static_cast<size_t>(m));
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (c.at(i, j) < c.at(best, j)) best = i;
        res.argmin[static_cast<size_t>(j)] = best;
        s += c.at(best, j);
    }
    res.loss = s * (norm == Normalization::paper_1_over_n ? 1.0 / n : 1.0 / m);
    return res;
}

/// Feature-set front ends: rows of `ref` and `gen` are D-dimensional vectors,
/// costs are pairwise cosine distances.
inline EmdResult emd_exact(const Tensor& ref, const Tensor& gen) {
    return emd_exact_cost(num::cosine_distance_matrix(ref, gen));
}

inline UremdResult uremd(const Tensor& ref, const Tensor& gen, Normalization norm) {
    return uremd_cost(num::cosine_distance_matrix(ref, gen), norm);
}

}  // namespace pickdraw::ot
