#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "backshift/dataset.hpp"

namespace backshift {

/// Sum of squared off-diagonal entries of a square matrix.
inline double offdiag_sq(const Matrix& a)
{
    return std::max(0.0, a.squaredNorm() - a.diagonal().squaredNorm());
}

/// Sum over the family of the off-diagonal mass of D * M_j * D^T.
inline double offdiag_loss(const std::vector<Matrix>& matrices, const Matrix& d)
{
    require_square(d, "diagonalizer");
    double loss = 0.0;
    for (const auto& m : matrices) {
        if (m.rows() != d.rows() || m.cols() != d.cols()) {
            fail(ErrorCode::ShapeError, "matrix family and diagonalizer differ in dimension");
        }
        loss += offdiag_sq(d * m * d.transpose());
    }
    return loss;
}

struct DiagonalizerOptions {
    double tol = 1e-8;        // relative loss change that counts as converged
    int max_iter = 500;
    double step_bound = 0.9;  // Frobenius-norm cap on the update W
    int max_halvings = 20;
};

struct DiagonalizerResult {
    Matrix D;
    double final_loss = 0.0;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;     // no damped step decreased the loss
    std::vector<double> loss_trace;
};

namespace detail {

inline void normalize_rows(Matrix& d)
{
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double norm = d.row(i).norm();
        if (norm > 0.0) {
            d.row(i) /= norm;
        }
    }
}

inline std::vector<Matrix> transform_all(const std::vector<Matrix>& matrices, const Matrix& d)
{
    std::vector<Matrix> out;
    out.reserve(matrices.size());
    for (const auto& m : matrices) {
        out.push_back(d * m * d.transpose());
    }
    return out;
}

inline double family_loss(const std::vector<Matrix>& transformed)
{
    double loss = 0.0;
    for (const auto& c : transformed) {
        loss += offdiag_sq(c);
    }
    return loss;
}

// Non-orthogonal update of the fast Frobenius diagonalizer: for every pair
// (k, l) the entries W_kl, W_lk solve the 2x2 system of the linearised
// off-diagonal loss around the current transformed family.
inline Matrix ffdiag_update(const std::vector<Matrix>& transformed)
{
    const Eigen::Index p = transformed.front().rows();
    Matrix z = Matrix::Zero(p, p);
    Matrix y = Matrix::Zero(p, p);
    for (const auto& c : transformed) {
        const Vector diag = c.diagonal();
        z.noalias() += diag * diag.transpose();
        // y(k,l) = sum_j C_j(l,l) * C_j(k,l)
        y += c * diag.asDiagonal();
    }
    Matrix w = Matrix::Zero(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index l = k + 1; l < p; ++l) {
            const double det = z(l, l) * z(k, k) - z(k, l) * z(k, l);
            if (std::abs(det) < 1e-12) {
                continue;
            }
            w(k, l) = (z(k, l) * y(l, k) - z(k, k) * y(k, l)) / det;
            w(l, k) = (z(k, l) * y(k, l) - z(l, l) * y(l, k)) / det;
        }
    }
    return w;
}

// Gauss-Newton step on the full linearisation of the row-normalised loss in
// the p(p-1) off-diagonal entries of W. Unlike the diagonal-dominance
// approximation above it is a descent direction for the exact loss, so it
// takes over whenever that step fails to decrease the loss.
inline Matrix gauss_newton_update(const std::vector<Matrix>& transformed, const Matrix& gram)
{
    const Eigen::Index p = transformed.front().rows();
    const Eigen::Index unknowns = p * (p - 1);
    auto index = [p](Eigen::Index a, Eigen::Index b) { return a * (p - 1) + (b < a ? b : b - 1); };

    Matrix jtj = Matrix::Zero(unknowns, unknowns);
    Vector jtr = Vector::Zero(unknowns);
    Vector row(unknowns);
    for (const auto& c : transformed) {
        for (Eigen::Index k = 0; k < p; ++k) {
            for (Eigen::Index l = k + 1; l < p; ++l) {
                // d C(k,l) = (W C)(k,l) + (C W^T)(k,l) - C(k,l) (s_k + s_l),
                // with s_i = (W D D^T)(i,i) the first-order change of row norm i.
                row.setZero();
                for (Eigen::Index m = 0; m < p; ++m) {
                    if (m != k) {
                        row(index(k, m)) += c(m, l) - c(k, l) * gram(m, k);
                    }
                    if (m != l) {
                        row(index(l, m)) += c(k, m) - c(k, l) * gram(m, l);
                    }
                }
                jtj.selfadjointView<Eigen::Lower>().rankUpdate(row, 2.0);
                jtr += 2.0 * c(k, l) * row;
            }
        }
    }
    Matrix h = jtj.selfadjointView<Eigen::Lower>();
    // Small Levenberg damping keeps the system solvable along flat directions.
    h.diagonal().array() += 1e-10 * std::max(h.diagonal().maxCoeff(), 1e-300);
    const Vector w = -h.ldlt().solve(jtr);

    Matrix out = Matrix::Zero(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = 0; b < p; ++b) {
            if (a != b) {
                out(a, b) = w(index(a, b));
            }
        }
    }
    return out;
}

inline double product_of_row_norms(const Matrix& d)
{
    double prod = 1.0;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        prod *= d.row(i).norm();
    }
    return prod;
}

} // namespace detail

namespace detail {

inline double inverse_condition(const Matrix& d)
{
    const Vector sv = Eigen::JacobiSVD<Matrix>(d).singularValues();
    return sv(sv.size() - 1) / sv(0);
}

// Start from the eigenvectors of pencil(M_a, M_b) for two fixed generic
// combinations of the family. Exact for simultaneously diagonalizable inputs
// with distinct generalized eigenvalues.
inline std::optional<Matrix> pencil_start(const std::vector<Matrix>& matrices)
{
    const Eigen::Index p = matrices.front().rows();
    Matrix a = Matrix::Zero(p, p);
    Matrix b = Matrix::Zero(p, p);
    for (std::size_t j = 0; j < matrices.size(); ++j) {
        const auto t = static_cast<double>(j);
        a += std::cos(0.7 * t + 0.3) * matrices[j];
        b += std::sin(1.3 * t + 0.5) * matrices[j];
    }
    const Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible()) {
        return std::nullopt;
    }
    const Eigen::EigenSolver<Matrix> solver(lu.solve(b));
    if (solver.info() != Eigen::Success) {
        return std::nullopt;
    }
    Matrix d = solver.eigenvectors().real().transpose();
    for (Eigen::Index i = 0; i < p; ++i) {
        if (!(d.row(i).norm() > 0.0)) {
            return std::nullopt;
        }
    }
    normalize_rows(d);
    if (!d.allFinite() || inverse_condition(d) < 1e-8) {
        return std::nullopt;
    }
    return d;
}

inline DiagonalizerResult descend(const std::vector<Matrix>& matrices, Matrix d, double floor,
                                  const DiagonalizerOptions& options)
{
    const Eigen::Index p = d.rows();
    DiagonalizerResult result;
    auto transformed = transform_all(matrices, d);
    double loss = family_loss(transformed);
    result.loss_trace.push_back(loss);

    if (loss <= floor) {
        result.D = d;
        result.final_loss = loss;
        result.converged = true;
        return result;
    }

    const Matrix identity = Matrix::Identity(p, p);
    Matrix candidate;
    std::vector<Matrix> candidate_transformed;
    double candidate_loss = loss;

    auto cap = [&](Matrix w, int iter) {
        const double norm = w.norm();
        if (!std::isfinite(norm)) {
            fail(ErrorCode::NumericalBreakdown, "update became non-finite at iteration " + std::to_string(iter));
        }
        if (norm > options.step_bound) {
            w *= options.step_bound / norm;
        }
        return w;
    };
    auto try_step = [&](const Matrix& w, int iter) {
        candidate = (identity + w) * d;
        normalize_rows(candidate);
        candidate_transformed = transform_all(matrices, candidate);
        candidate_loss = family_loss(candidate_transformed);
        if (!std::isfinite(candidate_loss)) {
            fail(ErrorCode::NumericalBreakdown, "loss became non-finite at iteration " + std::to_string(iter));
        }
        return candidate_loss <= loss;
    };

    for (int iter = 0; iter < options.max_iter; ++iter) {
        result.iterations = iter + 1;
        bool accepted = try_step(cap(ffdiag_update(transformed), iter), iter);
        bool full_step = accepted;
        if (!accepted) {
            Matrix w = cap(gauss_newton_update(transformed, d * d.transpose()), iter);
            for (int h = 0; h <= options.max_halvings; ++h) {
                if (try_step(w, iter)) {
                    accepted = true;
                    full_step = h == 0;
                    break;
                }
                w *= 0.5;
            }
        }
        if (!accepted) {
            result.stalled = true;
            break;
        }

        const double det = std::abs(candidate.partialPivLu().determinant());
        if (!(det >= 1e-12 * product_of_row_norms(candidate))) {
            fail(ErrorCode::NumericalBreakdown,
                 "diagonalizer became numerically singular at iteration " + std::to_string(iter));
        }

        const double change = (loss - candidate_loss) / std::max(loss, floor);
        d = candidate;
        transformed = std::move(candidate_transformed);
        loss = candidate_loss;
        result.loss_trace.push_back(loss);
        if (loss <= floor || (full_step && change < options.tol)) {
            result.converged = true;
            break;
        }
    }

    result.D = d;
    result.final_loss = loss;
    return result;
}

} // namespace detail

/// Approximate joint diagonalizer: searches for an invertible D making every
/// D * M_j * D^T as diagonal as possible, starting from the identity.
///
/// Rows of D are kept at unit Euclidean norm and the loss is evaluated on
/// that normalisation. Each iteration tries the fast diagonal-dominance step
/// at full length; if it does not decrease the loss, a Gauss-Newton step is
/// halved until it does. Steps are capped at `step_bound` in Frobenius norm.
/// Convergence is only declared on an undamped step. Non-convergence is
/// reported, not thrown; a D drifting towards singularity is a breakdown.
///
/// If the run from the identity breaks down or ends nearly singular, the
/// descent is repeated from a generalized-eigenvector start and the better
/// of the two runs is returned.
inline DiagonalizerResult joint_diagonalize(const std::vector<Matrix>& matrices,
                                            const DiagonalizerOptions& options = {})
{
    if (matrices.size() < 2) {
        fail(ErrorCode::NeedMultipleEnvironments, "joint diagonalization needs at least 2 matrices");
    }
    const Eigen::Index p = matrices.front().rows();
    double scale = 0.0;
    for (const auto& m : matrices) {
        if (m.rows() != p || m.cols() != p) {
            fail(ErrorCode::ShapeError, "all matrices must be square with the same dimension");
        }
        if (!m.allFinite()) {
            fail(ErrorCode::NumericalBreakdown, "input matrix has non-finite entries");
        }
        scale += m.squaredNorm();
    }
    // Below this the loss is at round-off level for the given inputs.
    const double floor = 1e-24 * scale;
    constexpr double degenerate = 1e-4;

    std::optional<DiagonalizerResult> first;
    std::optional<Error> breakdown;
    try {
        first = detail::descend(matrices, Matrix::Identity(p, p), floor, options);
        if (first->final_loss <= floor || detail::inverse_condition(first->D) >= degenerate) {
            return *first;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NumericalBreakdown) {
            throw;
        }
        breakdown = e;
    }

    const auto start = detail::pencil_start(matrices);
    std::optional<DiagonalizerResult> second;
    if (start) {
        try {
            second = detail::descend(matrices, *start, floor, options);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NumericalBreakdown) {
                throw;
            }
        }
    }
    if (!second) {
        if (breakdown) {
            throw *breakdown;
        }
        return *first;
    }
    if (!first) {
        return *second;
    }
    const bool second_regular = detail::inverse_condition(second->D) >= degenerate;
    return second_regular || second->final_loss < first->final_loss ? *second : *first;
}

} // namespace backshift
