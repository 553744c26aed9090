#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "backshift/dataset.hpp"

namespace backshift {

enum class ScatterMode { covariance, gram };

inline Matrix symmetrize(const Matrix& m)
{
    return 0.5 * (m + m.transpose());
}

/// Sample covariance with divisor n-1. Two passes: column means, then
/// centred cross products.
inline Matrix covariance(const Matrix& data)
{
    if (data.rows() < 2) {
        fail(ErrorCode::InsufficientData, "covariance needs at least 2 rows");
    }
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Matrix centered = data.rowwise() - mean;
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);
    return symmetrize(cov);
}

/// Uncentred second-moment matrix (1/n) X^T X.
inline Matrix gram(const Matrix& data)
{
    if (data.rows() < 1 || data.cols() < 1) {
        fail(ErrorCode::InsufficientData, "gram needs a non-empty matrix");
    }
    Matrix g = (data.transpose() * data) / static_cast<double>(data.rows());
    return symmetrize(g);
}

inline Matrix scatter(const Matrix& data, ScatterMode mode)
{
    return mode == ScatterMode::covariance ? covariance(data) : gram(data);
}

/// Per-environment scatter matrices and their leave-one-out differences
/// delta_j = S_j - mean_{j' != j} S_{j'}.
struct ScatterSet {
    ScatterMode mode = ScatterMode::covariance;
    std::vector<std::string> labels;
    std::vector<Matrix> per_env;
    std::vector<Matrix> deltas;

    [[nodiscard]] std::size_t size() const noexcept { return per_env.size(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return per_env.empty() ? 0 : per_env.front().rows(); }
};

/// Leave-one-out differences of an arbitrary list of equally shaped
/// symmetric matrices. The average is unweighted across environments.
inline std::vector<Matrix> leave_one_out_deltas(const std::vector<Matrix>& per_env)
{
    const auto count = per_env.size();
    if (count < 2) {
        fail(ErrorCode::NeedMultipleEnvironments, "leave-one-out differences need at least 2 environments");
    }
    // The others are summed directly rather than as total - S_j, so equal
    // inputs give exactly zero and two environments give exact negatives.
    const double others = static_cast<double>(count - 1);
    std::vector<Matrix> deltas;
    deltas.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        Matrix rest = Matrix::Zero(per_env[j].rows(), per_env[j].cols());
        for (std::size_t m = 0; m < count; ++m) {
            if (m != j) {
                rest += per_env[m];
            }
        }
        deltas.push_back(symmetrize(per_env[j] - rest / others));
    }
    return deltas;
}

inline ScatterSet build_scatter_set(const MultiEnvDataset& dataset, ScatterMode mode = ScatterMode::covariance)
{
    if (dataset.num_environments() < 2) {
        fail(ErrorCode::NeedMultipleEnvironments,
             "need at least 2 environments, got " + std::to_string(dataset.num_environments()));
    }
    ScatterSet set;
    set.mode = mode;
    for (const auto& env : dataset.environments()) {
        set.labels.push_back(env.label);
        set.per_env.push_back(scatter(env.data, mode));
    }
    set.deltas = leave_one_out_deltas(set.per_env);
    return set;
}

/// Cuts a T x p series into overlapping windows; window k holds rows
/// [k*stride, k*stride + block_len).
inline MultiEnvDataset window_group(const Matrix& series, Eigen::Index block_len, Eigen::Index stride,
                                    std::vector<std::string> variable_names = {})
{
    if (block_len < 2) {
        fail(ErrorCode::ContractViolation, "window length must be at least 2");
    }
    if (stride < 1) {
        fail(ErrorCode::ContractViolation, "window stride must be at least 1");
    }
    if (series.rows() < block_len) {
        fail(ErrorCode::InsufficientData, "series has " + std::to_string(series.rows()) +
                                              " rows, shorter than the window length " + std::to_string(block_len));
    }
    const Eigen::Index count = (series.rows() - block_len) / stride + 1;
    std::vector<Environment> envs;
    envs.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index k = 0; k < count; ++k) {
        envs.push_back({"w" + std::to_string(k), series.middleRows(k * stride, block_len)});
    }
    return MultiEnvDataset(std::move(envs), std::move(variable_names));
}

} // namespace backshift
