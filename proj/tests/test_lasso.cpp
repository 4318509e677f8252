#include <gtest/gtest.h>

#include <random>

#include "mfsr/coordinate_descent.hpp"
#include "mfsr/lasso.hpp"

namespace {

using mfsr::coordinate_descent_oracle;
using mfsr::lars_lasso;

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = n(gen);
    return m;
}

Eigen::VectorXd random_vector(int n, std::mt19937_64& gen) {
    return random_matrix(n, 1, gen).col(0);
}

TEST(LarsLasso, LargePenaltyGivesZero) {
    std::mt19937_64 gen(1);
    const Eigen::MatrixXd d = random_matrix(10, 30, gen);
    const Eigen::VectorXd s = random_vector(10, gen);
    const double eta = (d.transpose() * s).lpNorm<Eigen::Infinity>();
    const auto code = lars_lasso(d, s, eta);
    EXPECT_TRUE(code.active_set.empty());
    EXPECT_EQ(code.coefficients.lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_DOUBLE_EQ(code.objective, 0.5 * s.squaredNorm());
}

TEST(LarsLasso, OrthonormalDesignIsSoftThreshold) {
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd q = random_matrix(24, 24, gen).householderQr().householderQ();
        const Eigen::VectorXd s = random_vector(24, gen);
        const double eta = 0.3;
        const auto code = lars_lasso(q, s, eta);
        const Eigen::VectorXd proj = q.transpose() * s;
        for (int j = 0; j < 24; ++j) {
            EXPECT_NEAR(code.coefficients[j], mfsr::soft_threshold(proj[j], eta), 1e-8);
        }
    }
}

TEST(LarsLasso, MatchesCoordinateDescentAndKkt) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd d = random_matrix(20, 50, gen);
        const Eigen::VectorXd s = random_vector(20, gen);
        const auto code = lars_lasso(d, s, 0.05);
        const auto oracle = coordinate_descent_oracle(d, s, 0.05, 1e-12);
        EXPECT_NEAR(code.objective, oracle.objective, 1e-6);
        EXPECT_LE(mfsr::kkt_violation(d, s, 0.05, code.coefficients), 1e-8);
        EXPECT_LE(code.objective, 0.5 * s.squaredNorm());
    }
}

TEST(LarsLasso, UnnormalizedAtoms) {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    Eigen::MatrixXd d = random_matrix(30, 80, gen);
    for (int c = 0; c < d.cols(); ++c) d.col(c) *= u(gen);
    const Eigen::VectorXd s = 10.0 * random_vector(30, gen);
    for (double eta : {0.1, 1.0, 25.0}) {
        const auto code = lars_lasso(d, s, eta);
        const auto oracle = coordinate_descent_oracle(d, s, eta, 1e-13);
        EXPECT_NEAR(code.objective, oracle.objective, 1e-6 * std::max(1.0, oracle.objective));
        EXPECT_LE(mfsr::kkt_violation(d, s, eta, code.coefficients), 1e-8);
    }
}

TEST(LarsLasso, ActiveSetAndZerosAgree) {
    std::mt19937_64 gen(5);
    const Eigen::MatrixXd d = random_matrix(15, 40, gen);
    const Eigen::VectorXd s = random_vector(15, gen);
    const auto code = lars_lasso(d, s, 0.2);
    std::vector<char> in(40, 0);
    for (int j : code.active_set) in[j] = 1;
    for (int j = 0; j < 40; ++j) {
        if (!in[j]) EXPECT_EQ(code.coefficients[j], 0.0);
        else EXPECT_NE(code.coefficients[j], 0.0);
    }
    EXPECT_TRUE(std::is_sorted(code.active_set.begin(), code.active_set.end()));
}

TEST(LarsLasso, PathPenaltyDecreasesToEta) {
    std::mt19937_64 gen(6);
    const Eigen::MatrixXd d = random_matrix(20, 60, gen);
    const Eigen::VectorXd s = random_vector(20, gen);
    mfsr::LassoOptions opts;
    opts.record_path = true;
    const auto code = lars_lasso(d, s, 0.05, opts);
    ASSERT_GE(code.path.size(), 2u);
    EXPECT_DOUBLE_EQ(code.path.front(), (d.transpose() * s).lpNorm<Eigen::Infinity>());
    for (std::size_t i = 1; i < code.path.size(); ++i) EXPECT_LE(code.path[i], code.path[i - 1]);
    EXPECT_NEAR(code.path.back(), 0.05, 1e-12);
}

TEST(LarsLasso, DuplicateAtomsStayFeasible) {
    std::mt19937_64 gen(7);
    Eigen::MatrixXd d = random_matrix(12, 20, gen);
    d.col(7) = d.col(3);
    d.col(15) = d.col(3);
    const Eigen::VectorXd s = d.col(3) * 2.0 + 0.1 * random_vector(12, gen);
    const auto code = lars_lasso(d, s, 0.05);
    EXPECT_LE(mfsr::kkt_violation(d, s, 0.05, code.coefficients), 1e-8);
    // the lower index takes the shared weight
    EXPECT_NE(code.coefficients[3], 0.0);
    EXPECT_EQ(code.coefficients[7], 0.0);
    EXPECT_EQ(code.coefficients[15], 0.0);
}

TEST(LarsLasso, SparseModelOptimalityBound) {
    std::mt19937_64 gen(8);
    Eigen::MatrixXd d = random_matrix(64, 128, gen);
    d.colwise().normalize();
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(128);
    truth[5] = 1.5;
    truth[70] = -2.0;
    truth[101] = 0.7;
    const Eigen::VectorXd s = d * truth;
    const double eta = 1e-3;
    const auto code = lars_lasso(d, s, eta);
    const double err = (d * code.coefficients - s).norm();
    EXPECT_LE(err, (d * truth - s).norm() + eta * truth.lpNorm<1>());
}

TEST(LarsLasso, RejectsBadInput) {
    const Eigen::MatrixXd d = Eigen::MatrixXd::Identity(3, 3);
    EXPECT_THROW(lars_lasso(d, Eigen::VectorXd::Ones(3), -1.0), std::invalid_argument);
    EXPECT_THROW(lars_lasso(d, Eigen::VectorXd::Ones(4), 0.1), std::invalid_argument);
}

TEST(LarsLasso, StepGuardReportsObjective) {
    std::mt19937_64 gen(9);
    const Eigen::MatrixXd d = random_matrix(20, 50, gen);
    const Eigen::VectorXd s = random_vector(20, gen);
    mfsr::LassoOptions opts;
    opts.max_steps = 2;
    try {
        lars_lasso(d, s, 1e-6, opts);
        FAIL() << "expected the step guard to fire";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("last objective"), std::string::npos);
    }
}

TEST(LarsLasso, PrecomputedGramGivesSameAnswer) {
    std::mt19937_64 gen(10);
    const Eigen::MatrixXd d = random_matrix(25, 70, gen);
    const Eigen::MatrixXd gram = d.transpose() * d;
    const Eigen::VectorXd s = random_vector(25, gen);
    mfsr::LassoOptions opts;
    opts.gram = &gram;
    const auto a = lars_lasso(d, s, 0.1);
    const auto b = lars_lasso(d, s, 0.1, opts);
    EXPECT_LE((a.coefficients - b.coefficients).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(CoordinateDescent, SingleAtomClosedForm) {
    Eigen::MatrixXd d(3, 1);
    d << 1.0, 2.0, -2.0;
    Eigen::VectorXd s(3);
    s << 3.0, 1.0, 0.5;
    // d^T s = 3 + 2 - 1 = 4, ||d||^2 = 9
    const auto code = coordinate_descent_oracle(d, s, 0.5, 1e-14);
    EXPECT_NEAR(code.coefficients[0], (4.0 - 0.5) / 9.0, 1e-12);
}

TEST(CoordinateDescent, UnpenalizedSquareSolve) {
    std::mt19937_64 gen(11);
    Eigen::MatrixXd d = random_matrix(6, 6, gen) + 6.0 * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::VectorXd s = random_vector(6, gen);
    const auto code = coordinate_descent_oracle(d, s, 0.0, 1e-14);
    const Eigen::VectorXd exact = d.partialPivLu().solve(s);
    EXPECT_LE((code.coefficients - exact).lpNorm<Eigen::Infinity>(), 1e-8);
}

}  // namespace
