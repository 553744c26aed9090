#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "backshift/dataset.hpp"
#include "backshift/feasibility.hpp"
#include "backshift/pipeline.hpp"
#include "backshift/random.hpp"

namespace backshift {

/// Linear cyclic model x = B x + c + e used to generate synthetic data.
struct GroundTruthModel {
    Matrix B;
    bool hidden = false;
    Vector gamma; // confounder loadings, used when hidden
    std::uint64_t seed = 0;
};

struct WeightedEdge {
    int from = 0;
    int to = 0;
    double weight = 0.0;
};

/// Builds a model from B, drawing confounder loadings gamma ~ N(0, 1) from
/// the seed. Rejects B with CP(B) >= 1 or singular I - B.
inline GroundTruthModel make_model(Matrix b, bool hidden, std::uint64_t seed)
{
    require_square(b, "connectivity matrix");
    const auto p = b.rows();
    if (p < 2) {
        fail(ErrorCode::GenerationFailed, "need at least 2 variables");
    }
    try {
        if (!cycle_product_feasible(b).feasible) {
            fail(ErrorCode::GenerationFailed, "cycle product of the network is not below one");
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::GenerationFailed) {
            throw;
        }
        fail(ErrorCode::GenerationFailed, e.what());
    }
    const Matrix i_minus_b = Matrix::Identity(p, p) - b;
    if (std::abs(i_minus_b.partialPivLu().determinant()) < 1e-12) {
        fail(ErrorCode::GenerationFailed, "I - B is singular");
    }
    GroundTruthModel model;
    model.B = std::move(b);
    model.hidden = hidden;
    model.seed = seed;
    Rng rng(derive_seed(seed, 0xC0F0));
    model.gamma = Vector(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        model.gamma(k) = rng.normal();
    }
    return model;
}

/// Model from an explicit edge list (edge j -> i sets B(i, j)).
inline GroundTruthModel generate_network(int p, const std::vector<WeightedEdge>& edges, bool hidden,
                                         std::uint64_t seed)
{
    if (p < 2) {
        fail(ErrorCode::GenerationFailed, "need at least 2 variables");
    }
    Matrix b = Matrix::Zero(p, p);
    for (const auto& e : edges) {
        if (e.from < 0 || e.to < 0 || e.from >= p || e.to >= p || e.from == e.to) {
            fail(ErrorCode::GenerationFailed, "invalid edge " + std::to_string(e.from) + " -> " + std::to_string(e.to));
        }
        b(e.to, e.from) = e.weight;
    }
    return make_model(std::move(b), hidden, seed);
}

struct RandomNetworkOptions {
    double edge_probability = 0.2; // per ordered pair
    double min_weight = 0.3;       // |weight| drawn uniformly from [min, max]
    double max_weight = 0.8;       // with a random sign
    int max_attempts = 1000;
};

/// Random sparse network, redrawn until CP(B) < 1.
inline GroundTruthModel generate_network(int p, const RandomNetworkOptions& options, bool hidden, std::uint64_t seed)
{
    if (p < 2) {
        fail(ErrorCode::GenerationFailed, "need at least 2 variables");
    }
    Rng rng(derive_seed(seed, 0xB0B0));
    for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
        Matrix b = Matrix::Zero(p, p);
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j < p; ++j) {
                if (i != j && rng.uniform() < options.edge_probability) {
                    const double magnitude = rng.uniform(options.min_weight, options.max_weight);
                    b(i, j) = rng.uniform() < 0.5 ? -magnitude : magnitude;
                }
            }
        }
        if (cycle_product_feasible(b).feasible) {
            return make_model(std::move(b), hidden, seed);
        }
    }
    fail(ErrorCode::GenerationFailed, "no network with cycle product below one after " +
                                          std::to_string(options.max_attempts) + " attempts");
}

/// The fixed ten-node reference network used by the synthetic experiments.
///
/// Ten edges: a 3-cycle X1 -> X2 -> X3 -> X1 (product 0.336), a 2-cycle
/// X6 <-> X7 (product 0.42) and a single weakest edge X6 -> X10 (0.3). X9 has
/// no edges.
inline std::vector<WeightedEdge> reference_edges()
{
    return {
        {0, 1, 0.8},  {1, 2, 0.7},   {2, 0, -0.6}, {2, 3, 0.5},  {4, 3, -0.55},
        {3, 5, 0.65}, {5, 6, 0.6},   {6, 5, -0.7}, {6, 7, 0.75}, {5, 9, 0.3},
    };
}

inline GroundTruthModel reference_network(bool hidden, std::uint64_t seed)
{
    return generate_network(10, reference_edges(), hidden, seed);
}

/// Shift interventions (c_j)_k = beta_k^j * I_k^j with beta drawn from an
/// exponential distribution of mean m_I and I standard normal per
/// observation.
struct InterventionSpec {
    double m_I = 1.0;
    std::vector<int> targets;            // empty: every variable is a target
    bool beta_per_observation = false;   // redraw beta for every row instead of once per environment
};

struct SimulationOptions {
    bool record_components = false;
    /// Per-environment replacement of B (mechanism changes); empty or
    /// nullopt entries use the model's B.
    std::vector<std::optional<Matrix>> mechanism_override;
};

struct SimulatedData {
    MultiEnvDataset dataset;
    Matrix beta;                 // |J| x p intervention strengths (per-environment draws)
    std::vector<Matrix> shifts;  // c rows, when recorded
    std::vector<Matrix> noises;  // e rows, when recorded
};

/// Equilibrium draws x = (I - B)^{-1} (c + e) in each environment. Noise is
/// Laplace(0, 1) per variable, or gamma_k * W with a shared W ~ Laplace(0, 1)
/// when the model has hidden confounding.
inline SimulatedData simulate_detailed(const GroundTruthModel& model, const InterventionSpec& spec,
                                       const std::vector<Eigen::Index>& n_per_env, std::uint64_t seed,
                                       const SimulationOptions& options = {})
{
    if (n_per_env.empty()) {
        fail(ErrorCode::InsufficientData, "need at least one environment");
    }
    if (!(spec.m_I >= 0.0)) {
        fail(ErrorCode::ContractViolation, "intervention strength m_I must be nonnegative");
    }
    const auto p = model.B.rows();
    std::vector<char> targeted(static_cast<std::size_t>(p), spec.targets.empty() ? 1 : 0);
    for (int t : spec.targets) {
        if (t < 0 || t >= p) {
            fail(ErrorCode::ContractViolation, "intervention target out of range");
        }
        targeted[static_cast<std::size_t>(t)] = 1;
    }

    const auto env_count = static_cast<Eigen::Index>(n_per_env.size());
    SimulatedData out;
    out.beta = Matrix::Zero(env_count, p);
    std::vector<Environment> envs;
    envs.reserve(n_per_env.size());
    for (Eigen::Index j = 0; j < env_count; ++j) {
        const auto n = n_per_env[static_cast<std::size_t>(j)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        for (Eigen::Index k = 0; k < p; ++k) {
            if (targeted[static_cast<std::size_t>(k)]) {
                out.beta(j, k) = rng.exponential(spec.m_I);
            }
        }

        Matrix shifts(n, p);
        Matrix noises(n, p);
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index k = 0; k < p; ++k) {
                if (!targeted[static_cast<std::size_t>(k)]) {
                    shifts(r, k) = 0.0;
                    continue;
                }
                const double strength = spec.beta_per_observation ? rng.exponential(spec.m_I) : out.beta(j, k);
                shifts(r, k) = strength * rng.normal();
            }
            if (model.hidden) {
                const double w = rng.laplace();
                noises.row(r) = w * model.gamma.transpose();
            } else {
                for (Eigen::Index k = 0; k < p; ++k) {
                    noises(r, k) = rng.laplace();
                }
            }
        }

        const Matrix* b = &model.B;
        if (static_cast<std::size_t>(j) < options.mechanism_override.size() &&
            options.mechanism_override[static_cast<std::size_t>(j)]) {
            b = &*options.mechanism_override[static_cast<std::size_t>(j)];
        }
        const Matrix i_minus_b = Matrix::Identity(p, p) - *b;
        // Rows: x^T = (c + e)^T (I - B)^{-T}
        Matrix x = i_minus_b.partialPivLu().solve((shifts + noises).transpose()).transpose();
        envs.push_back({"env" + std::to_string(j + 1), std::move(x)});
        if (options.record_components) {
            out.shifts.push_back(std::move(shifts));
            out.noises.push_back(std::move(noises));
        }
    }
    out.dataset = MultiEnvDataset(std::move(envs));
    return out;
}

inline MultiEnvDataset simulate(const GroundTruthModel& model, const InterventionSpec& spec,
                                const std::vector<Eigen::Index>& n_per_env, std::uint64_t seed)
{
    return simulate_detailed(model, spec, n_per_env, seed).dataset;
}

struct ScoreReport {
    int shd = 0;
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
    std::optional<double> precision; // absent when nothing was predicted
    double recall = 0.0;
    double threshold = 0.0;
};

/// Compares directed edge sets: estimate thresholded at |B_hat| > t, truth at
/// B != 0. SHD counts ordered pairs that disagree, so a reversed edge costs 2.
inline ScoreReport score(const Matrix& b_hat, const Matrix& truth, double t)
{
    if (b_hat.rows() != truth.rows() || b_hat.cols() != truth.cols()) {
        fail(ErrorCode::ShapeError, "estimate and truth differ in dimension");
    }
    ScoreReport report;
    report.threshold = t;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (Eigen::Index j = 0; j < truth.cols(); ++j) {
            if (i == j) {
                continue;
            }
            const bool predicted = std::abs(b_hat(i, j)) > t;
            const bool actual = truth(i, j) != 0.0;
            report.true_positives += predicted && actual;
            report.false_positives += predicted && !actual;
            report.false_negatives += !predicted && actual;
        }
    }
    report.shd = report.false_positives + report.false_negatives;
    const int predicted = report.true_positives + report.false_positives;
    if (predicted > 0) {
        report.precision = static_cast<double>(report.true_positives) / predicted;
    }
    const int actual = report.true_positives + report.false_negatives;
    report.recall = actual > 0 ? static_cast<double>(report.true_positives) / actual : 1.0;
    return report;
}

inline ScoreReport score(const std::vector<Edge>& edges, const Matrix& truth)
{
    Matrix b_hat = Matrix::Zero(truth.rows(), truth.cols());
    for (const auto& e : edges) {
        if (e.from < 0 || e.to < 0 || e.from >= truth.cols() || e.to >= truth.rows()) {
            fail(ErrorCode::ShapeError, "edge outside the truth's dimension");
        }
        b_hat(e.to, e.from) = 1.0;
    }
    return score(b_hat, truth, 0.0);
}

} // namespace backshift
