#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "backshift/dataset.hpp"
#include "backshift/feasibility.hpp"
#include "backshift/jointdiag.hpp"
#include "backshift/scatter.hpp"

namespace backshift {

struct EstimatorConfig {
    ScatterMode mode = ScatterMode::covariance;
    DiagonalizerOptions diagonalizer{};
};

/// Result of one backShift fit. When `empty` is set the graph could not be
/// estimated and B_hat is the zero matrix; `warnings` says why.
struct ConnectivityEstimate {
    Matrix B_hat;
    std::optional<FeasibleDiagonalizer> D_hat;
    Matrix D_tilde; // raw diagonalizer, before permuting and scaling
    bool converged = false;
    bool empty = true;
    bool assumptions_violated = false;
    bool identifiable_setting = true; // false with fewer than three environments
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    std::vector<std::string> warnings;
};

/// Diagonalize the given difference matrices, project onto the feasible set
/// and read off B = I - D. Usable on exact population differences as well as
/// on estimates.
inline ConnectivityEstimate estimate_from_deltas(const std::vector<Matrix>& deltas,
                                                 const DiagonalizerOptions& options = {})
{
    if (deltas.size() < 2) {
        fail(ErrorCode::NeedMultipleEnvironments, "need at least 2 environments");
    }
    const auto p = deltas.front().rows();
    ConnectivityEstimate est;
    est.B_hat = Matrix::Zero(p, p);
    if (deltas.size() < 3) {
        est.identifiable_setting = false;
        est.warnings.emplace_back("fewer than three environments: the connectivity matrix is not identifiable");
    }

    DiagonalizerResult raw;
    try {
        raw = joint_diagonalize(deltas, options);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NumericalBreakdown) {
            throw;
        }
        est.warnings.emplace_back(std::string("joint diagonalization did not converge (") + e.what() +
                                  "); returning the empty graph");
        return est;
    }
    est.D_tilde = raw.D;
    est.final_loss = raw.final_loss;
    est.iterations = raw.iterations;
    est.converged = raw.converged;
    if (!raw.converged) {
        est.warnings.emplace_back("joint diagonalization did not converge after " + std::to_string(raw.iterations) +
                                  " iterations; returning the empty graph");
        return est;
    }

    try {
        auto projected = permute_and_scale(raw.D);
        est.B_hat = Matrix::Identity(p, p) - projected.D_hat;
        est.B_hat.diagonal().setZero();
        est.D_hat = std::move(projected);
        est.empty = false;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ModelAssumptionsViolated) {
            throw;
        }
        est.assumptions_violated = true;
        est.warnings.emplace_back(std::string("model assumptions are not met: ") + e.what());
    }
    return est;
}

inline ConnectivityEstimate estimate_from_scatter(const ScatterSet& scatter, const EstimatorConfig& config = {})
{
    return estimate_from_deltas(scatter.deltas, config.diagonalizer);
}

/// End-to-end estimator: scatter matrices, leave-one-out differences, joint
/// diagonalization, permute-and-scale, B = I - D.
inline ConnectivityEstimate estimate(const MultiEnvDataset& dataset, const EstimatorConfig& config = {})
{
    if (dataset.num_variables() < 2) {
        fail(ErrorCode::InsufficientData, "need at least 2 variables");
    }
    return estimate_from_scatter(build_scatter_set(dataset, config.mode), config);
}

struct Edge {
    int from = 0;
    int to = 0;
    double weight = 0.0;
};

/// Edges j -> i with |B(i, j)| > t, in row-major order of B.
inline std::vector<Edge> threshold_edges(const Matrix& b_hat, double t)
{
    if (!(t >= 0.0)) {
        fail(ErrorCode::ContractViolation, "threshold must be nonnegative");
    }
    std::vector<Edge> edges;
    for (Eigen::Index i = 0; i < b_hat.rows(); ++i) {
        for (Eigen::Index j = 0; j < b_hat.cols(); ++j) {
            if (i != j && std::abs(b_hat(i, j)) > t) {
                edges.push_back({static_cast<int>(j), static_cast<int>(i), b_hat(i, j)});
            }
        }
    }
    return edges;
}

// ---------------------------------------------------------------------------
// Intervention variances

/// Baseline for absolute intervention variances: the smallest value per
/// variable (default), or a named environment such as observational data.
struct Baseline {
    std::optional<std::string> environment;

    static Baseline min_zero() { return {}; }
    static Baseline env(std::string label) { return {std::move(label)}; }
};

struct InterventionProfile {
    std::vector<std::string> labels;
    Matrix delta_variances;    // |J| x p, diagonal of (I - B) delta_j (I - B)^T
    Matrix absolute_variances; // |J| x p, anchored at the baseline
    Baseline baseline;
};

/// Intervention variances from a connectivity matrix and the scatter
/// differences. The leave-one-out differences determine the per-environment
/// variances up to a per-variable offset: s_j = (|J|-1)/|J| * eta_j + const.
inline InterventionProfile intervention_variances(const Matrix& b_hat, const ScatterSet& scatter,
                                                  const Baseline& baseline = Baseline::min_zero())
{
    require_square(b_hat, "connectivity matrix");
    if (scatter.deltas.empty()) {
        fail(ErrorCode::NeedMultipleEnvironments, "scatter set has no differences");
    }
    const auto p = b_hat.rows();
    if (scatter.dim() != p) {
        fail(ErrorCode::ShapeError, "connectivity matrix and scatter set differ in dimension");
    }
    const auto count = static_cast<Eigen::Index>(scatter.deltas.size());
    const Matrix d = Matrix::Identity(p, p) - b_hat;

    InterventionProfile profile;
    profile.labels = scatter.labels;
    profile.baseline = baseline;
    profile.delta_variances.resize(count, p);
    for (Eigen::Index j = 0; j < count; ++j) {
        const Matrix transformed = d * scatter.deltas[static_cast<std::size_t>(j)] * d.transpose();
        profile.delta_variances.row(j) = transformed.diagonal().transpose();
    }

    Matrix relative = profile.delta_variances * (static_cast<double>(count - 1) / static_cast<double>(count));
    Eigen::RowVectorXd offset(p);
    if (baseline.environment) {
        Eigen::Index row = -1;
        for (Eigen::Index j = 0; j < count; ++j) {
            if (scatter.labels[static_cast<std::size_t>(j)] == *baseline.environment) {
                row = j;
                break;
            }
        }
        if (row < 0) {
            fail(ErrorCode::ContractViolation, "baseline environment '" + *baseline.environment + "' not found");
        }
        offset = relative.row(row);
    } else {
        offset = relative.colwise().minCoeff();
    }
    profile.absolute_variances = relative.rowwise() - offset;
    return profile;
}

inline InterventionProfile intervention_variances(const ConnectivityEstimate& est, const ScatterSet& scatter,
                                                  const Baseline& baseline = Baseline::min_zero())
{
    if (est.empty) {
        fail(ErrorCode::EstimateUnavailable, "no connectivity estimate available");
    }
    return intervention_variances(est.B_hat, scatter, baseline);
}

// ---------------------------------------------------------------------------
// Identifiability

struct IdentifiabilityReport {
    bool identifiable = true;
    std::vector<std::pair<int, int>> violating_pairs; // k < l
};

/// The fit is unique iff for every pair of variables (k, l) some pair of
/// environments has eta(j,k) * eta(j',l) != eta(j,l) * eta(j',k). Products
/// count as different when they differ by more than 1e-8 relative. Fewer
/// than three environments never qualify.
inline IdentifiabilityReport check_identifiability(const Matrix& eta)
{
    if (!eta.allFinite()) {
        fail(ErrorCode::ContractViolation, "intervention variance differences must be finite");
    }
    IdentifiabilityReport report;
    const auto envs = eta.rows();
    const auto p = eta.cols();
    if (envs < 3) {
        // Leave-one-out differences of two environments are negatives of
        // each other, so every pair of cross-products coincides.
        report.identifiable = false;
        for (Eigen::Index k = 0; k < p; ++k) {
            for (Eigen::Index l = k + 1; l < p; ++l) {
                report.violating_pairs.emplace_back(static_cast<int>(k), static_cast<int>(l));
            }
        }
        return report;
    }
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index l = k + 1; l < p; ++l) {
            bool separated = false;
            for (Eigen::Index j = 0; j < envs && !separated; ++j) {
                for (Eigen::Index jp = j + 1; jp < envs && !separated; ++jp) {
                    const double a = eta(j, k) * eta(jp, l);
                    const double b = eta(j, l) * eta(jp, k);
                    const double scale = std::max({std::abs(a), std::abs(b), 1.0});
                    separated = std::abs(a - b) > 1e-8 * scale;
                }
            }
            if (!separated) {
                report.identifiable = false;
                report.violating_pairs.emplace_back(static_cast<int>(k), static_cast<int>(l));
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Mechanism-violation diagnostics

struct Violation {
    int k = 0;
    int l = 0;
    double magnitude = 0.0;
};

struct DiagnosticsReport {
    std::vector<std::string> labels;
    std::vector<Matrix> residuals; // off-diagonal part of (I - B) delta_j (I - B)^T
    std::vector<Violation> top_violation;
};

/// Under pure shift interventions (I - B) delta_j (I - B)^T is diagonal; large
/// off-diagonal entries point at environments where a mechanism changed.
inline DiagnosticsReport diagnose(const Matrix& b_hat, const ScatterSet& scatter)
{
    require_square(b_hat, "connectivity matrix");
    const auto p = b_hat.rows();
    if (scatter.dim() != p) {
        fail(ErrorCode::ShapeError, "connectivity matrix and scatter set differ in dimension");
    }
    const Matrix d = Matrix::Identity(p, p) - b_hat;
    DiagnosticsReport report;
    report.labels = scatter.labels;
    for (const auto& delta : scatter.deltas) {
        Matrix r = symmetrize(d * delta * d.transpose());
        r.diagonal().setZero();
        Violation top;
        for (Eigen::Index k = 0; k < p; ++k) {
            for (Eigen::Index l = k + 1; l < p; ++l) {
                if (std::abs(r(k, l)) > top.magnitude) {
                    top = {static_cast<int>(k), static_cast<int>(l), std::abs(r(k, l))};
                }
            }
        }
        report.residuals.push_back(std::move(r));
        report.top_violation.push_back(top);
    }
    return report;
}

inline DiagnosticsReport diagnose(const ConnectivityEstimate& est, const ScatterSet& scatter)
{
    if (est.empty) {
        fail(ErrorCode::EstimateUnavailable, "no connectivity estimate available");
    }
    return diagnose(est.B_hat, scatter);
}

} // namespace backshift
