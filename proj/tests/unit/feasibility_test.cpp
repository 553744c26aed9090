#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

#include "test_support.hpp"

using namespace backshift;
using backshift::testing::error_code_of;
using backshift::testing::random_feasible_graph;
using backshift::testing::random_matrix;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double assignment_cost(const Matrix& cost, const std::vector<int>& perm)
{
    double total = 0.0;
    for (std::size_t k = 0; k < perm.size(); ++k) {
        total += cost(static_cast<Eigen::Index>(k), perm[k]);
    }
    return total;
}

double brute_force_min(const Matrix& cost)
{
    std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = inf;
    do {
        best = std::min(best, assignment_cost(cost, perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Matrix edge(Eigen::Index p, std::initializer_list<std::tuple<int, int, double>> edges)
{
    Matrix b = Matrix::Zero(p, p);
    for (const auto& [from, to, w] : edges) {
        b(to, from) = w;
    }
    return b;
}

Matrix permutation_matrix(const std::vector<int>& sigma)
{
    const auto p = static_cast<Eigen::Index>(sigma.size());
    Matrix m = Matrix::Zero(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        m(sigma[static_cast<std::size_t>(k)], k) = 1.0;
    }
    return m;
}

} // namespace

TEST(CycleProduct, AcyclicIsFeasible)
{
    std::mt19937_64 gen(1);
    Matrix b = random_matrix(gen, 6, 6).triangularView<Eigen::StrictlyUpper>();
    EXPECT_TRUE(cycle_product_feasible(b).feasible);
    const auto exact = cycle_product_exact(b);
    EXPECT_EQ(*exact.exact_value, 0.0);
    EXPECT_TRUE(exact.witness_cycle.empty());
}

TEST(CycleProduct, ThreeCycle)
{
    const Matrix b = edge(3, {{0, 1, 0.5}, {1, 2, 0.5}, {2, 0, 0.5}});
    EXPECT_TRUE(cycle_product_feasible(b).feasible);
    EXPECT_DOUBLE_EQ(*cycle_product_exact(b).exact_value, 0.125);
}

TEST(CycleProduct, InfeasibleTwoCycle)
{
    const Matrix b = edge(2, {{0, 1, 2.0}, {1, 0, 0.6}});
    EXPECT_FALSE(cycle_product_feasible(b).feasible);
    const auto exact = cycle_product_exact(b);
    EXPECT_DOUBLE_EQ(*exact.exact_value, 1.2);
    EXPECT_FALSE(exact.feasible);
}

TEST(CycleProduct, NegativeWeightsUseMagnitudes)
{
    const Matrix b = edge(2, {{0, 1, -2.0}, {1, 0, 0.6}});
    EXPECT_FALSE(cycle_product_feasible(b).feasible);
}

TEST(CycleProduct, WitnessIsLargestCycle)
{
    const Matrix b = edge(5, {{0, 1, 0.5}, {1, 0, 0.6}, {2, 3, 1.0}, {3, 4, 0.8}, {4, 2, 1.0}});
    const auto exact = cycle_product_exact(b);
    EXPECT_DOUBLE_EQ(*exact.exact_value, 0.8);
    EXPECT_EQ(exact.witness_cycle, (std::vector<int>{2, 3, 4}));
}

TEST(CycleProduct, BorderlineIsNotFeasible)
{
    const Matrix b = edge(2, {{0, 1, 2.0}, {1, 0, 0.5}});
    const auto report = cycle_product_feasible(b);
    EXPECT_FALSE(report.feasible);
    EXPECT_TRUE(report.borderline);
}

TEST(CycleProduct, AgreesWithExactOnRandomSparseGraphs)
{
    std::mt19937_64 gen(101);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int infeasible = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Matrix b = Matrix::Zero(8, 8);
        for (Eigen::Index i = 0; i < 8; ++i) {
            for (Eigen::Index j = 0; j < 8; ++j) {
                if (i != j && unit(gen) < 0.25) {
                    b(i, j) = (unit(gen) < 0.5 ? -1.0 : 1.0) * (0.2 + 1.3 * unit(gen));
                }
            }
        }
        const bool exact = *cycle_product_exact(b).exact_value < 1.0;
        EXPECT_EQ(cycle_product_feasible(b).feasible, exact) << "trial " << trial;
        infeasible += !exact;
    }
    EXPECT_GT(infeasible, 50);
    EXPECT_LT(infeasible, 950);
}

TEST(CycleProduct, NonzeroDiagonalIsRejected)
{
    Matrix b = Matrix::Zero(3, 3);
    b(1, 1) = 0.1;
    EXPECT_EQ(error_code_of([&] { cycle_product_feasible(b); }), ErrorCode::ContractViolation);
}

TEST(CycleProduct, ExactEnumerationIsCapped)
{
    EXPECT_EQ(error_code_of([] { cycle_product_exact(Matrix::Zero(13, 13)); }), ErrorCode::TooLargeForExact);
    EXPECT_TRUE(cycle_product_exact(Matrix::Zero(13, 13), 13).feasible);
}

TEST(Lap, IdentityCost)
{
    const Matrix cost = Matrix::Ones(5, 5) - Matrix::Identity(5, 5);
    EXPECT_EQ(lap_solve(cost), (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Lap, ThreeByThreeAgainstEnumeration)
{
    Matrix cost(3, 3);
    cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
    const auto perm = lap_solve(cost);
    EXPECT_EQ(assignment_cost(cost, perm), brute_force_min(cost));
    EXPECT_EQ(assignment_cost(cost, perm), 5.0);
}

TEST(Lap, RowOfInfinityIsInfeasible)
{
    Matrix cost = Matrix::Ones(3, 3);
    cost.row(1).setConstant(inf);
    EXPECT_EQ(error_code_of([&] { lap_solve(cost); }), ErrorCode::Infeasible);
}

TEST(Lap, NanIsRejected)
{
    Matrix cost = Matrix::Ones(2, 2);
    cost(0, 1) = std::nan("");
    EXPECT_EQ(error_code_of([&] { lap_solve(cost); }), ErrorCode::ContractViolation);
}

TEST(Lap, MatchesBruteForceWithForbiddenPairs)
{
    std::mt19937_64 gen(202);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::Index p = 1 + trial % 7;
        Matrix cost(p, p);
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) {
                cost(i, j) = unit(gen) < 0.2 ? inf : 10.0 * unit(gen) - 5.0;
            }
        }
        const double best = brute_force_min(cost);
        if (best == inf) {
            EXPECT_EQ(error_code_of([&] { lap_solve(cost); }), ErrorCode::Infeasible) << "trial " << trial;
            continue;
        }
        const auto perm = lap_solve(cost);
        std::vector<int> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < sorted.size(); ++k) {
            ASSERT_EQ(sorted[k], static_cast<int>(k));
        }
        EXPECT_NEAR(assignment_cost(cost, perm), best, 1e-9) << "trial " << trial;
    }
}

TEST(PermuteAndScale, FeasibleUnitDiagonalIsFixed)
{
    std::mt19937_64 gen(303);
    const Matrix b = random_feasible_graph(gen, 6, 0.3);
    const Matrix d = Matrix::Identity(6, 6) - b;
    const auto out = permute_and_scale(d);
    EXPECT_EQ(out.permutation, (std::vector<int>{0, 1, 2, 3, 4, 5}));
    EXPECT_LE((out.D_hat - d).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PermuteAndScale, UndoesRowPermutationAndScaling)
{
    std::mt19937_64 gen(404);
    std::uniform_real_distribution<double> scale(0.2, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index p = 2 + trial % 6;
        const Matrix b = random_feasible_graph(gen, p, 0.4);
        const Matrix d = Matrix::Identity(p, p) - b;
        std::vector<int> sigma(static_cast<std::size_t>(p));
        std::iota(sigma.begin(), sigma.end(), 0);
        std::shuffle(sigma.begin(), sigma.end(), gen);
        Vector s(p);
        for (Eigen::Index k = 0; k < p; ++k) {
            s(k) = (gen() % 2 ? 1.0 : -1.0) * scale(gen);
        }
        const Matrix scrambled = s.asDiagonal() * permutation_matrix(sigma) * d;
        const auto out = permute_and_scale(scrambled);
        EXPECT_LE((out.D_hat - d).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
    }
}

TEST(PermuteAndScale, IsIdempotent)
{
    std::mt19937_64 gen(505);
    const Matrix b = random_feasible_graph(gen, 5, 0.5);
    const Matrix scrambled = Vector::LinSpaced(5, 0.5, 3.0).asDiagonal() *
                             permutation_matrix({2, 0, 4, 1, 3}) * (Matrix::Identity(5, 5) - b);
    const auto once = permute_and_scale(scrambled);
    const auto twice = permute_and_scale(once.D_hat);
    EXPECT_EQ((twice.D_hat - once.D_hat).cwiseAbs().maxCoeff(), 0.0);
}

TEST(PermuteAndScale, MaximisesDiagonalProduct)
{
    std::mt19937_64 gen(606);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index p = 3 + trial % 3;
        const Matrix d = random_matrix(gen, p, p);
        std::vector<int> perm(static_cast<std::size_t>(p));
        std::iota(perm.begin(), perm.end(), 0);
        double best = 0.0;
        do {
            double prod = 1.0;
            for (Eigen::Index k = 0; k < p; ++k) {
                prod *= std::abs(d(k, perm[static_cast<std::size_t>(k)]));
            }
            best = std::max(best, prod);
        } while (std::next_permutation(perm.begin(), perm.end()));
        Matrix cost(p, p);
        for (Eigen::Index k = 0; k < p; ++k) {
            for (Eigen::Index l = 0; l < p; ++l) {
                cost(k, l) = -std::log(std::abs(d(k, l)));
            }
        }
        const auto sigma = lap_solve(cost);
        double chosen = 1.0;
        for (Eigen::Index k = 0; k < p; ++k) {
            chosen *= std::abs(d(k, sigma[static_cast<std::size_t>(k)]));
        }
        EXPECT_NEAR(chosen, best, 1e-12 * best);
    }
}

TEST(PermuteAndScale, LargeOffDiagonalsViolateAssumptions)
{
    Matrix d = Matrix::Constant(3, 3, 3.0);
    d.diagonal().setOnes();
    // Every row order leaves some cycle with product of at least one.
    std::vector<int> perm{0, 1, 2};
    do {
        Matrix rows(3, 3);
        for (Eigen::Index k = 0; k < 3; ++k) {
            const double pivot = d(k, perm[static_cast<std::size_t>(k)]);
            rows.row(perm[static_cast<std::size_t>(k)]) = d.row(k) / pivot;
        }
        Matrix b = Matrix::Identity(3, 3) - rows;
        b.diagonal().setZero();
        EXPECT_GE(*cycle_product_exact(b).exact_value, 1.0 - 1e-12);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(error_code_of([&] { permute_and_scale(d); }), ErrorCode::ModelAssumptionsViolated);
}

TEST(PermuteAndScale, StructurallySingularViolatesAssumptions)
{
    Matrix d = Matrix::Identity(3, 3);
    d.col(2).setZero();
    EXPECT_EQ(error_code_of([&] { permute_and_scale(d); }), ErrorCode::ModelAssumptionsViolated);
}
