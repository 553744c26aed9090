#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace backshift;
using backshift::testing::error_code_of;
using backshift::testing::random_matrix;
using backshift::testing::random_symmetric;

TEST(OffdiagLoss, DiagonalFamilyIsZero)
{
    std::vector<Matrix> family{Vector::LinSpaced(3, 1, 3).asDiagonal(), Vector::LinSpaced(3, -1, 2).asDiagonal()};
    EXPECT_EQ(offdiag_loss(family, Matrix::Identity(3, 3)), 0.0);
}

TEST(OffdiagLoss, TwoByTwoExample)
{
    Matrix m(2, 2);
    m << 1, 2, 2, 1;
    EXPECT_EQ(offdiag_loss({m}, Matrix::Identity(2, 2)), 8.0);
}

TEST(OffdiagLoss, MatchesNaiveOracle)
{
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index p = 2 + trial % 5;
        std::vector<Matrix> family{random_symmetric(gen, p), random_symmetric(gen, p), random_symmetric(gen, p)};
        const Matrix d = random_matrix(gen, p, p);
        double expected = 0.0;
        for (const auto& m : family) {
            for (Eigen::Index k = 0; k < p; ++k) {
                for (Eigen::Index l = 0; l < p; ++l) {
                    if (k == l) {
                        continue;
                    }
                    double entry = 0.0;
                    for (Eigen::Index a = 0; a < p; ++a) {
                        for (Eigen::Index b = 0; b < p; ++b) {
                            entry += d(k, a) * m(a, b) * d(l, b);
                        }
                    }
                    expected += entry * entry;
                }
            }
        }
        EXPECT_NEAR(offdiag_loss(family, d), expected, 1e-12 * std::max(1.0, expected));
    }
}

TEST(OffdiagLoss, ShapeMismatch)
{
    EXPECT_EQ(error_code_of([] { offdiag_loss({Matrix::Identity(3, 3)}, Matrix::Identity(2, 2)); }),
              ErrorCode::ShapeError);
}

TEST(JointDiagonalize, AlreadyDiagonal)
{
    std::vector<Matrix> family{Vector::LinSpaced(4, 1, 4).asDiagonal(), Vector::LinSpaced(4, -2, 1).asDiagonal(),
                               Vector::LinSpaced(4, 3, 0.5).asDiagonal()};
    const auto result = joint_diagonalize(family);
    EXPECT_TRUE(result.converged);
    EXPECT_LE(result.final_loss, 1e-12);
    EXPECT_TRUE(result.D.isApprox(Matrix::Identity(4, 4)));
}

TEST(JointDiagonalize, RecoversExactMixing)
{
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> spread(-2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index p = 3 + trial % 4;
        const Matrix a = Matrix::Identity(p, p) + 0.3 * random_matrix(gen, p, p);
        std::vector<Matrix> family;
        for (int j = 0; j < 4; ++j) {
            Vector diag(p);
            for (Eigen::Index k = 0; k < p; ++k) {
                diag(k) = spread(gen);
            }
            family.push_back(a * diag.asDiagonal() * a.transpose());
        }
        const auto result = joint_diagonalize(family);
        ASSERT_TRUE(result.converged) << "trial " << trial;
        Matrix product = result.D * a;
        for (Eigen::Index k = 0; k < p; ++k) {
            product.row(k) /= product.row(k).norm();
            int large = 0;
            for (Eigen::Index l = 0; l < p; ++l) {
                large += std::abs(product(k, l)) > 1e-6;
            }
            EXPECT_EQ(large, 1) << "trial " << trial << " row " << k;
        }
    }
}

TEST(JointDiagonalize, LeaveOneOutFamiliesReachTheLossFloor)
{
    std::mt19937_64 gen(33);
    std::uniform_real_distribution<double> var(0.1, 3.0);
    for (int trial = 0; trial < 60; ++trial) {
        const Eigen::Index p = 3 + trial % 6;
        const Matrix b = backshift::testing::random_feasible_graph(gen, p, 0.3);
        std::vector<Vector> variances(3, Vector(p));
        for (auto& v : variances) {
            for (Eigen::Index k = 0; k < p; ++k) {
                v(k) = var(gen);
            }
        }
        const auto deltas = backshift::testing::population_deltas(b, variances);
        const auto result = joint_diagonalize(deltas);
        EXPECT_LT(result.final_loss, 1e-10) << "trial " << trial;
        const Vector sv = Eigen::JacobiSVD<Matrix>(result.D).singularValues();
        EXPECT_GT(sv(p - 1) / sv(0), 1e-6) << "trial " << trial;
    }
}

TEST(OffdiagLoss, RowScalingOfTheInputsIsAbsorbed)
{
    std::mt19937_64 gen(35);
    std::vector<Matrix> family{random_symmetric(gen, 4), random_symmetric(gen, 4), random_symmetric(gen, 4)};
    const Matrix d = random_matrix(gen, 4, 4);
    const Matrix s = random_matrix(gen, 4, 4) + 4.0 * Matrix::Identity(4, 4);
    std::vector<Matrix> moved;
    for (const auto& m : family) {
        moved.push_back(s * m * s.transpose());
    }
    const Matrix pulled = d * s.inverse();
    EXPECT_NEAR(offdiag_loss(moved, pulled), offdiag_loss(family, d), 1e-9 * offdiag_loss(family, d));
}

TEST(JointDiagonalize, GenericFamilyHasPositiveLossAndMonotoneTrace)
{
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 5; ++trial) {
        // Positive definite, so no direction is isotropic for the whole family.
        std::vector<Matrix> family;
        for (int j = 0; j < 3; ++j) {
            const Matrix a = random_matrix(gen, 4, 4);
            family.push_back(a * a.transpose());
        }
        const auto result = joint_diagonalize(family);
        EXPECT_TRUE(result.converged) << "trial " << trial;
        EXPECT_GT(result.final_loss, 0.0);
        for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
            EXPECT_LE(result.loss_trace[i], result.loss_trace[i - 1]);
        }
        EXPECT_LT(result.final_loss, result.loss_trace.front());
        EXPECT_NEAR(result.final_loss, offdiag_loss(family, result.D), 1e-9 * result.loss_trace.front());
    }
}

TEST(JointDiagonalize, IndefiniteFamiliesNeverReturnASingularResult)
{
    // Indefinite families can be driven towards a common isotropic direction;
    // that must surface as a breakdown, not as a singular D.
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Matrix> family{random_symmetric(gen, 4), random_symmetric(gen, 4), random_symmetric(gen, 4)};
        try {
            const auto result = joint_diagonalize(family);
            EXPECT_GE(std::abs(result.D.determinant()), 1e-12);
            for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
                EXPECT_LE(result.loss_trace[i], result.loss_trace[i - 1]);
            }
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::NumericalBreakdown);
        }
    }
}

TEST(JointDiagonalize, RowsHaveUnitNorm)
{
    std::mt19937_64 gen(51);
    std::vector<Matrix> family{random_symmetric(gen, 5), random_symmetric(gen, 5), random_symmetric(gen, 5)};
    const auto result = joint_diagonalize(family);
    for (Eigen::Index k = 0; k < 5; ++k) {
        EXPECT_NEAR(result.D.row(k).norm(), 1.0, 1e-12);
    }
}

TEST(JointDiagonalize, NeedsTwoMatrices)
{
    EXPECT_EQ(error_code_of([] { joint_diagonalize({Matrix::Identity(2, 2)}); }),
              ErrorCode::NeedMultipleEnvironments);
}

TEST(JointDiagonalize, RejectsMixedShapes)
{
    EXPECT_EQ(error_code_of([] { joint_diagonalize({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}); }),
              ErrorCode::ShapeError);
}

TEST(JointDiagonalize, RejectsNonFinite)
{
    Matrix bad = Matrix::Identity(2, 2);
    bad(0, 1) = bad(1, 0) = std::nan("");
    EXPECT_EQ(error_code_of([&] { joint_diagonalize({Matrix::Identity(2, 2), bad}); }),
              ErrorCode::NumericalBreakdown);
}

TEST(JointDiagonalize, IterationLimitIsReported)
{
    std::mt19937_64 gen(61);
    std::vector<Matrix> family{random_symmetric(gen, 5), random_symmetric(gen, 5), random_symmetric(gen, 5)};
    DiagonalizerOptions options;
    options.max_iter = 1;
    options.tol = 0.0;
    const auto result = joint_diagonalize(family, options);
    EXPECT_FALSE(result.converged);
    EXPECT_EQ(result.iterations, 1);
}
