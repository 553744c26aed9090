#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "backshift/dataset.hpp"

namespace backshift {

// Orientation used everywhere: B(i, j) != 0 is an edge j -> i.

struct CycleProductReport {
    bool feasible = true;     // CP(B) < 1 (strictly, with the borderline band excluded)
    bool borderline = false;  // |CP(B) - 1| <= cp_borderline_band
    std::optional<double> exact_value;
    std::vector<int> witness_cycle; // distinct nodes in edge order; closes back to the first
};

inline constexpr double cp_borderline_band = 1e-9;

namespace detail {

inline void require_zero_diagonal(const Matrix& b)
{
    require_square(b, "connectivity matrix");
    if (!b.allFinite()) {
        fail(ErrorCode::ContractViolation, "connectivity matrix has non-finite entries");
    }
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        if (b(i, i) != 0.0) {
            fail(ErrorCode::ContractViolation, "connectivity matrix has a nonzero diagonal at " + std::to_string(i));
        }
    }
}

// Largest log-weight of any closed walk of length >= 2, found with a
// max-plus Floyd-Warshall pass. Exact (equal to log CP) whenever no cycle
// has a positive log-weight; positive otherwise.
inline double max_closed_walk_log_weight(const Matrix& b)
{
    constexpr double none = -std::numeric_limits<double>::infinity();
    const auto p = b.rows();
    Matrix dist = Matrix::Constant(p, p, none); // dist(from, to)
    for (Eigen::Index to = 0; to < p; ++to) {
        for (Eigen::Index from = 0; from < p; ++from) {
            if (from != to && b(to, from) != 0.0) {
                dist(from, to) = std::log(std::abs(b(to, from)));
            }
        }
    }
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index i = 0; i < p; ++i) {
            const double ik = dist(i, k);
            if (ik == none) {
                continue;
            }
            for (Eigen::Index j = 0; j < p; ++j) {
                const double through = ik + dist(k, j);
                if (through > dist(i, j)) {
                    dist(i, j) = through;
                }
            }
        }
    }
    return dist.diagonal().maxCoeff();
}

} // namespace detail

/// O(p^3) test of CP(B) < 1. Every closed walk splits into simple cycles, so
/// all simple-cycle products are below one exactly when no closed walk has a
/// nonnegative log-weight.
inline CycleProductReport cycle_product_feasible(const Matrix& b)
{
    detail::require_zero_diagonal(b);
    CycleProductReport report;
    if (b.rows() < 2) {
        return report;
    }
    const double walk = detail::max_closed_walk_log_weight(b);
    report.feasible = walk < std::log1p(-cp_borderline_band);
    report.borderline = walk >= std::log1p(-cp_borderline_band) && walk <= std::log1p(cp_borderline_band);
    return report;
}

/// Exhaustive simple-cycle enumeration; the reference value of CP(B).
inline CycleProductReport cycle_product_exact(const Matrix& b, Eigen::Index limit = 12)
{
    detail::require_zero_diagonal(b);
    const auto p = b.rows();
    if (p > limit) {
        fail(ErrorCode::TooLargeForExact,
             "exact cycle enumeration limited to " + std::to_string(limit) + " nodes, got " + std::to_string(p));
    }

    const auto n = static_cast<int>(p);
    double best = 0.0;
    std::vector<int> best_cycle;
    std::vector<int> path;
    std::vector<char> on_path(static_cast<std::size_t>(n), 0);

    // Cycles are rooted at their smallest node so each is visited once.
    std::function<void(int, int, double)> extend = [&](int start, int node, double product) {
        for (int next = start; next < n; ++next) {
            const double weight = b(next, node);
            if (weight == 0.0) {
                continue;
            }
            const double extended = product * std::abs(weight);
            if (next == start) {
                if (path.size() >= 2 && extended > best) {
                    best = extended;
                    best_cycle = path;
                }
            } else if (!on_path[static_cast<std::size_t>(next)]) {
                on_path[static_cast<std::size_t>(next)] = 1;
                path.push_back(next);
                extend(start, next, extended);
                path.pop_back();
                on_path[static_cast<std::size_t>(next)] = 0;
            }
        }
    };
    for (int start = 0; start < n; ++start) {
        path.assign(1, start);
        on_path[static_cast<std::size_t>(start)] = 1;
        extend(start, start, 1.0);
        on_path[static_cast<std::size_t>(start)] = 0;
    }

    CycleProductReport report;
    report.exact_value = best;
    report.witness_cycle = best_cycle;
    report.feasible = best < 1.0 - cp_borderline_band;
    report.borderline = std::abs(best - 1.0) <= cp_borderline_band;
    return report;
}

/// Minimum-cost perfect assignment (Hungarian method with potentials,
/// O(p^3)). Entries may be +infinity to forbid a pairing. Returns
/// assignment[row] = column.
inline std::vector<int> lap_solve(const Matrix& cost)
{
    require_square(cost, "assignment cost");
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto n = static_cast<int>(cost.rows());
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
        for (Eigen::Index j = 0; j < cost.cols(); ++j) {
            if (std::isnan(cost(i, j)) || cost(i, j) == -inf) {
                fail(ErrorCode::ContractViolation, "assignment costs must be finite or +infinity");
            }
        }
    }

    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<int> match(static_cast<std::size_t>(n + 1), 0); // column -> row
    std::vector<int> way(static_cast<std::size_t>(n + 1), 0);

    for (int row = 1; row <= n; ++row) {
        match[0] = row;
        int col0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
        do {
            used[static_cast<std::size_t>(col0)] = 1;
            const int row0 = match[static_cast<std::size_t>(col0)];
            double delta = inf;
            int col1 = 0;
            for (int col = 1; col <= n; ++col) {
                if (used[static_cast<std::size_t>(col)]) {
                    continue;
                }
                const double c = cost(row0 - 1, col - 1);
                const double reduced = c == inf ? inf : c - u[static_cast<std::size_t>(row0)] - v[static_cast<std::size_t>(col)];
                if (reduced < minv[static_cast<std::size_t>(col)]) {
                    minv[static_cast<std::size_t>(col)] = reduced;
                    way[static_cast<std::size_t>(col)] = col0;
                }
                if (minv[static_cast<std::size_t>(col)] < delta) {
                    delta = minv[static_cast<std::size_t>(col)];
                    col1 = col;
                }
            }
            if (delta == inf) {
                fail(ErrorCode::Infeasible, "no perfect assignment with finite cost exists");
            }
            for (int col = 0; col <= n; ++col) {
                const auto c = static_cast<std::size_t>(col);
                if (used[c]) {
                    u[static_cast<std::size_t>(match[c])] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
        } while (match[static_cast<std::size_t>(col0)] != 0);
        do {
            const int col1 = way[static_cast<std::size_t>(col0)];
            match[static_cast<std::size_t>(col0)] = match[static_cast<std::size_t>(col1)];
            col0 = col1;
        } while (col0 != 0);
    }

    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    for (int col = 1; col <= n; ++col) {
        assignment[static_cast<std::size_t>(match[static_cast<std::size_t>(col)] - 1)] = col - 1;
    }
    return assignment;
}

/// Unit-diagonal diagonalizer obtained by reordering and rescaling rows.
struct FeasibleDiagonalizer {
    Matrix D_hat;
    std::vector<int> permutation; // source row k of the input lands on row permutation[k]
    Vector row_scales;            // factor applied to output row l
};

/// Below this magnitude an entry cannot serve as a diagonal pivot.
inline constexpr double structural_zero = 1e-12;

/// Projects a raw diagonalizer onto unit-diagonal matrices with CP(I - D) < 1.
/// The row order maximises the product of the chosen pivots |D(k, sigma(k))|,
/// which is the unique order giving a cycle product below one if any does.
inline FeasibleDiagonalizer permute_and_scale(const Matrix& d_tilde)
{
    require_square(d_tilde, "diagonalizer");
    if (!d_tilde.allFinite()) {
        fail(ErrorCode::NumericalBreakdown, "diagonalizer has non-finite entries");
    }
    const auto p = d_tilde.rows();
    Matrix cost(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index l = 0; l < p; ++l) {
            const double mag = std::abs(d_tilde(k, l));
            cost(k, l) = mag < structural_zero ? std::numeric_limits<double>::infinity() : -std::log(mag);
        }
    }

    std::vector<int> sigma;
    try {
        sigma = lap_solve(cost);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Infeasible) {
            fail(ErrorCode::ModelAssumptionsViolated, "no row order gives a nonzero diagonal");
        }
        throw;
    }

    FeasibleDiagonalizer out;
    out.D_hat = Matrix(p, p);
    out.row_scales = Vector(p);
    out.permutation = sigma;
    for (Eigen::Index k = 0; k < p; ++k) {
        const auto target = static_cast<Eigen::Index>(sigma[static_cast<std::size_t>(k)]);
        const double pivot = d_tilde(k, target);
        out.D_hat.row(target) = d_tilde.row(k) / pivot;
        out.D_hat(target, target) = 1.0;
        out.row_scales(target) = 1.0 / pivot;
    }

    const Matrix b = Matrix::Identity(p, p) - out.D_hat;
    const auto cp = cycle_product_feasible(b);
    if (!cp.feasible) {
        fail(ErrorCode::ModelAssumptionsViolated,
             cp.borderline ? "cycle product of the projected solution is borderline (within 1e-9 of 1)"
                           : "cycle product of the projected solution is not below one");
    }
    return out;
}

} // namespace backshift
