#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "backshift/error.hpp"

namespace backshift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One block of observations sharing an interventional distribution.
struct Environment {
    std::string label;
    Matrix data; // n_j rows x p columns
};

/// Environment-labelled observation matrices over a common set of variables.
///
/// Construction validates the shared-column invariant, the two-row minimum
/// required for a covariance, and finiteness of every entry.
class MultiEnvDataset {
public:
    MultiEnvDataset() = default;

    MultiEnvDataset(std::vector<Environment> environments, std::vector<std::string> variable_names = {})
        : environments_(std::move(environments)), variable_names_(std::move(variable_names))
    {
        if (environments_.empty()) {
            fail(ErrorCode::InsufficientData, "dataset has no environments");
        }
        const auto p = environments_.front().data.cols();
        if (p < 1) {
            fail(ErrorCode::InsufficientData, "dataset has no variables");
        }
        for (const auto& env : environments_) {
            if (env.data.cols() != p) {
                fail(ErrorCode::ShapeError, "environment '" + env.label + "' has " +
                                                std::to_string(env.data.cols()) + " columns, expected " +
                                                std::to_string(p));
            }
            if (env.data.rows() < 2) {
                fail(ErrorCode::InsufficientData,
                     "environment '" + env.label + "' has fewer than 2 observations");
            }
            if (!env.data.allFinite()) {
                fail(ErrorCode::ContractViolation, "environment '" + env.label + "' contains non-finite entries");
            }
        }
        if (variable_names_.empty()) {
            variable_names_.reserve(static_cast<std::size_t>(p));
            for (Eigen::Index k = 0; k < p; ++k) {
                variable_names_.push_back("X" + std::to_string(k + 1));
            }
        } else if (static_cast<Eigen::Index>(variable_names_.size()) != p) {
            fail(ErrorCode::ShapeError, "variable name count does not match column count");
        }
    }

    [[nodiscard]] const std::vector<Environment>& environments() const noexcept { return environments_; }
    [[nodiscard]] const std::vector<std::string>& variable_names() const noexcept { return variable_names_; }
    [[nodiscard]] std::size_t num_environments() const noexcept { return environments_.size(); }
    [[nodiscard]] Eigen::Index num_variables() const noexcept
    {
        return environments_.empty() ? 0 : environments_.front().data.cols();
    }
    [[nodiscard]] const Environment& operator[](std::size_t j) const { return environments_.at(j); }

private:
    std::vector<Environment> environments_;
    std::vector<std::string> variable_names_;
};

inline void require_square(const Matrix& m, const char* what)
{
    if (m.rows() != m.cols()) {
        fail(ErrorCode::ShapeError, std::string(what) + " must be square");
    }
}

} // namespace backshift
