#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "backshift/pipeline.hpp"
#include "backshift/random.hpp"

namespace backshift {

struct StabilityConfig {
    double ev_bound = 2.0;         // tolerated expected number of false selections E(V)
    double pi_thr = 0.75;          // selection-frequency threshold, in (0.5, 1]
    int n_subsamples = 100;
    double subsample_fraction = 0.5;
    std::optional<int> q;          // edges kept per run; derived from ev_bound when absent
    std::uint64_t seed = 0;
};

struct StabilityResult {
    Matrix frequencies;         // p x p, entry (i, j) for edge j -> i
    std::vector<Edge> selected; // weight holds the selection frequency
    int q_used = 0;
    int runs = 0;
    int failed_runs = 0;
};

/// Largest q with q^2 <= E(V) (2 pi_thr - 1) p (p - 1), the per-run edge
/// budget under the usual stability-selection error bound.
inline int stability_q(double ev_bound, double pi_thr, Eigen::Index p)
{
    const double bound = ev_bound * (2.0 * pi_thr - 1.0) * static_cast<double>(p * (p - 1));
    return std::max(1, static_cast<int>(std::floor(std::sqrt(bound))));
}

/// Edges j -> i ranked by |B(i, j)| descending; equal magnitudes keep
/// row-major order.
inline std::vector<Edge> top_edges(const Matrix& b_hat, int q)
{
    std::vector<Edge> all = threshold_edges(b_hat, 0.0);
    std::stable_sort(all.begin(), all.end(),
                     [](const Edge& a, const Edge& b) { return std::abs(a.weight) > std::abs(b.weight); });
    if (static_cast<int>(all.size()) > q) {
        all.resize(static_cast<std::size_t>(q));
    }
    return all;
}

namespace detail {

inline MultiEnvDataset stratified_subsample(const MultiEnvDataset& dataset, double fraction, Rng& rng)
{
    std::vector<Environment> envs;
    envs.reserve(dataset.num_environments());
    for (const auto& env : dataset.environments()) {
        const auto n = env.data.rows();
        const auto keep = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n)));
        if (keep < 2) {
            fail(ErrorCode::InsufficientData, "subsample of environment '" + env.label + "' keeps fewer than 2 rows");
        }
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        for (Eigen::Index i = 0; i < keep; ++i) {
            const auto pick = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
            std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick)]);
        }
        std::sort(rows.begin(), rows.begin() + keep);
        Matrix sub(keep, env.data.cols());
        for (Eigen::Index i = 0; i < keep; ++i) {
            sub.row(i) = env.data.row(rows[static_cast<std::size_t>(i)]);
        }
        envs.push_back({env.label, std::move(sub)});
    }
    return MultiEnvDataset(std::move(envs), dataset.variable_names());
}

} // namespace detail

/// Stability selection: refit on stratified subsamples (each environment is
/// subsampled separately), keep the q strongest edges of every run and
/// select the edges whose retention frequency reaches pi_thr. Runs that fail
/// or return the empty graph retain nothing; more than half failing is an
/// error.
inline StabilityResult stability_select(const MultiEnvDataset& dataset, const StabilityConfig& config,
                                        const EstimatorConfig& estimator = {})
{
    if (!(config.pi_thr > 0.5 && config.pi_thr <= 1.0)) {
        fail(ErrorCode::ContractViolation, "pi_thr must lie in (0.5, 1]");
    }
    if (config.n_subsamples < 2) {
        fail(ErrorCode::ContractViolation, "need at least 2 subsamples");
    }
    if (!(config.subsample_fraction > 0.0 && config.subsample_fraction < 1.0)) {
        fail(ErrorCode::ContractViolation, "subsample fraction must lie in (0, 1)");
    }
    if (dataset.num_environments() < 2) {
        fail(ErrorCode::NeedMultipleEnvironments, "stability selection needs at least 2 environments");
    }

    const auto p = dataset.num_variables();
    StabilityResult result;
    result.q_used = config.q ? *config.q : stability_q(config.ev_bound, config.pi_thr, p);
    if (result.q_used < 1) {
        fail(ErrorCode::ContractViolation, "q must be positive");
    }
    result.runs = config.n_subsamples;

    Matrix counts = Matrix::Zero(p, p);
    for (int run = 0; run < config.n_subsamples; ++run) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(run)));
        const auto sub = detail::stratified_subsample(dataset, config.subsample_fraction, rng);
        ConnectivityEstimate est;
        try {
            est = estimate(sub, estimator);
        } catch (const Error&) {
            ++result.failed_runs;
            continue;
        }
        if (est.empty) {
            ++result.failed_runs;
            continue;
        }
        for (const auto& e : top_edges(est.B_hat, result.q_used)) {
            counts(e.to, e.from) += 1.0;
        }
    }
    if (2 * result.failed_runs > result.runs) {
        fail(ErrorCode::StabilityFailed, std::to_string(result.failed_runs) + " of " + std::to_string(result.runs) +
                                             " subsample fits failed or returned the empty graph");
    }

    result.frequencies = counts / static_cast<double>(config.n_subsamples);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
            if (i != j && result.frequencies(i, j) >= config.pi_thr) {
                result.selected.push_back({static_cast<int>(j), static_cast<int>(i), result.frequencies(i, j)});
            }
        }
    }
    return result;
}

} // namespace backshift
