#include <cmath>

#include <gtest/gtest.h>

#include "mvlab/adjoint.hpp"
#include "mvlab/errors.hpp"
#include "support/benchmark_models.hpp"

namespace mvlab {
namespace {

ControlSet unit_box() { return ControlSet::box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)); }

struct Scenario {
    ModelPtr model;
    GalerkinSpace space;
    TimeGrid grid;
    ControlPath ubar;
    StatePath base;
};

Scenario make_run(ModelPtr model, GalerkinSpace space, int M, int N, const InitialSampler& sampler, double u = 0.0,
             std::uint64_t seed = 3) {
    Scenario r{std::move(model), std::move(space), TimeGrid(1.0, M), ControlPath::constant(M, N, Eigen::VectorXd::Constant(1, u)), {}};
    r.base = simulate(*r.model, r.space, r.grid, r.ubar, N, sampler, SimulationOptions{seed});
    return r;
}

InitialSampler gaussian(int n, double mean, double sd) {
    InitialSampler s;
    s.mean = Eigen::VectorXd::Constant(n, mean);
    s.stddev = Eigen::VectorXd::Constant(n, sd);
    return s;
}

TEST(AdjointTrivial, ZeroCostGivesZeroAdjoint) {
    LinearQuadraticParams p = testing::lq_params();
    p.Q.setZero();
    p.qbar = 0.0;
    p.r = 0.0;
    p.H.setZero();
    p.hbar = 0.0;
    p.c.setZero();
    const auto model = make_linear_quadratic(2, 2, Eigen::Vector2d(1.0, 0.5), unit_box(), p);
    const Scenario r = make_run(model, testing::lq_space(), 8, 50, testing::lq_sampler(), 0.3);
    for (auto method : {FirstAdjointMethod::picard_regression, FirstAdjointMethod::lq_closed_form}) {
        const FirstAdjointPath a = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, method);
        for (const auto& b : a.p) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0) << to_string(method);
        for (const auto& b : a.q) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0) << to_string(method);
    }
}

TEST(AdjointTrivial, PureSemigroupAdjoint) {
    LinearQuadraticParams p;
    p.c = Eigen::Vector3d(0.5, -1.0, 2.0);
    const auto model = make_linear_quadratic(3, 2, Eigen::Vector3d(1.0, 0.0, 0.0), unit_box(), p);
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(3, 2, 0.1);
    const Scenario r = make_run(model, space, 10, 40, gaussian(3, 0.2, 0.5));
    for (auto method : {FirstAdjointMethod::picard_regression, FirstAdjointMethod::lq_closed_form}) {
        const FirstAdjointPath a = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, method);
        for (int k = 0; k <= 10; ++k) {
            const StateVector expected = -semigroup_apply(space, (10 - k) * r.grid.dt(), p.c);
            for (int i = 0; i < 40; ++i) EXPECT_LT((a.p[k].col(i) - expected).norm(), 1e-10) << to_string(method);
        }
        for (const auto& b : a.q) EXPECT_LT(b.cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Adjoint, PicardApproximatesClosedFormOnSmallRun) {
    const Scenario r = make_run(testing::lq_benchmark(), testing::lq_space(), 16, 4000, testing::lq_sampler(), 0.3);
    const auto exact = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, FirstAdjointMethod::lq_closed_form);
    const auto approx = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, FirstAdjointMethod::picard_regression);
    EXPECT_TRUE(approx.converged);
    const AdjointComparison c = compare_adjoints(approx, exact);
    EXPECT_LT(c.p_relative_rmse, 0.02);
    EXPECT_LT(c.q_relative_rmse, 0.10);
}

TEST(Adjoint, AutoSelectsClosedFormForLq) {
    const Scenario r = make_run(testing::lq_benchmark(), testing::lq_space(), 4, 20, testing::lq_sampler());
    EXPECT_EQ(solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar).method, FirstAdjointMethod::lq_closed_form);
    const Scenario t = make_run(testing::tanh_benchmark(), testing::tanh_space(), 4, 20, testing::tanh_sampler());
    EXPECT_EQ(solve_first_adjoint_auto(*t.model, t.space, t.base, t.ubar).method, FirstAdjointMethod::picard_regression);
    EXPECT_THROW(solve_first_adjoint(*t.model, t.space, t.base, t.ubar, FirstAdjointMethod::lq_closed_form),
                 UnsupportedError);
}

// No coupling of the adjoint to the state or the measure: the first Picard iterate is already the
// fixed point.
TEST(AdjointTrivial, ContractionFactorZeroWithoutCoupling) {
    LinearQuadraticParams p;
    p.S0 = 0.3 * Eigen::MatrixXd::Identity(2, 2);
    p.c = Eigen::Vector2d(1.0, -1.0);
    const auto model = make_linear_quadratic(2, 2, Eigen::Vector2d(1.0, 0.5), unit_box(), p);
    const Scenario r = make_run(model, testing::lq_space(), 16, 200, testing::lq_sampler());
    const ContractionReport rep = picard_contraction_probe(*r.model, r.space, r.base, r.ubar, {0.25, 0.5, 1.0});
    for (const auto& s : rep.splits) EXPECT_EQ(s.factor, 0.0);
}

TEST(Adjoint, ContractionProbeValidation) {
    const Scenario r = make_run(testing::lq_benchmark(), testing::lq_space(), 8, 20, testing::lq_sampler());
    EXPECT_THROW(picard_contraction_probe(*r.model, r.space, r.base, r.ubar, {0.5}), DomainError);
    EXPECT_THROW(picard_contraction_probe(*r.model, r.space, r.base, r.ubar, {0.5, 2.0}), DomainError);
}

TEST(AdjointTrivial, ZeroTestSystemBalances) {
    const Scenario r = make_run(testing::lq_benchmark(), testing::lq_space(), 8, 50, testing::lq_sampler());
    const auto adj = solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar);
    const TestTrajectory traj = simulate_test_system(zero_test_system(2, 2, Eigen::Vector2d::Zero()), r.space, r.base);
    const DualityCheck c = first_duality("zero", adj, r.space, traj);
    EXPECT_EQ(c.lhs, 0.0);
    EXPECT_EQ(c.rhs, 0.0);
}

// Noise-free test system on a deterministic problem: only the O(dt) quadrature gap remains.
TEST(Adjoint, FirstDualityConvergesInDt) {
    LinearQuadraticParams p;
    p.A1 = Eigen::MatrixXd::Constant(1, 1, -0.4);
    p.Q = Eigen::MatrixXd::Ones(1, 1);
    p.H = Eigen::MatrixXd::Constant(1, 1, 0.5);
    p.c = Eigen::VectorXd::Constant(1, 0.3);
    p.B = Eigen::MatrixXd::Ones(1, 1);
    const auto model = make_linear_quadratic(1, 1, Eigen::VectorXd::Ones(1), unit_box(), p);
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(1, 1, 0.05);
    TestSystem sys = zero_test_system(1, 1, Eigen::VectorXd::Constant(1, 1.0));
    sys.J = Eigen::MatrixXd::Constant(1, 1, 0.8);
    sys.alpha0 = Eigen::VectorXd::Constant(1, 0.5);
    sys.alpha1 = Eigen::VectorXd::Constant(1, 1.0);
    std::vector<double> dts, residuals;
    for (int M : {16, 32, 64, 128}) {
        const Scenario r = make_run(model, space, M, 2, gaussian(1, 1.0, 0.0), 0.5);
        const auto adj = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, FirstAdjointMethod::lq_closed_form);
        const DualityCheck c = first_duality("det", adj, space, simulate_test_system(sys, space, r.base));
        dts.push_back(r.grid.dt());
        residuals.push_back(c.residual);
    }
    EXPECT_GE(loglog_fit(dts, residuals).slope, 0.9);
}

TEST(AdjointTrivial, QuadraticTerminalOnlyGivesConstantP) {
    LinearQuadraticParams p;
    p.H = Eigen::MatrixXd(2, 2);
    p.H << 2.0, 0.3, 0.3, 1.0;
    const auto model = make_linear_quadratic(2, 1, Eigen::Vector2d(1.0, 0.0), unit_box(), p);
    const GalerkinSpace space(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(1));
    const Scenario r = make_run(model, space, 8, 30, gaussian(2, 0.0, 1.0));
    const auto first = solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar);
    for (auto method : {SecondAdjointMethod::deterministic_lyapunov, SecondAdjointMethod::regression}) {
        const auto P = solve_second_adjoint(*r.model, r.space, r.base, r.ubar, first, method);
        for (int k = 0; k <= 8; ++k)
            for (int i : {0, 7}) EXPECT_LT((P.P_at(k, i) + p.H).cwiseAbs().maxCoeff(), 1e-12) << to_string(method);
    }
}

// Scalar LQ: -P' = (2 lambda + 2 A + w K^2) P - Q with K = sigma_x + w_m, P(T) = -H.
TEST(Adjoint, ScalarSecondAdjointMatchesOde) {
    const testing::ScalarLq q;
    const auto model = testing::scalar_lq_model(q);
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(1, 1, 0.05);
    const double K = q.sigma_x + q.w_m;
    const double c = 2.0 * space.eigenvalues()[0] + 2.0 * q.A + K * K;
    const double exact0 = q.Q / c + (-q.H - q.Q / c) * std::exp(c * 1.0);
    double previous = 1e9;
    for (int M : {32, 64, 128}) {
        const Scenario r = make_run(model, space, M, 20, testing::scalar_lq_sampler(q), 0.2);
        const auto first = solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar);
        const auto P = solve_second_adjoint_auto(*r.model, r.space, r.base, r.ubar, first);
        ASSERT_TRUE(P.deterministic());
        const double err = std::abs(P.P_at(0, 0)(0, 0) - exact0);
        EXPECT_LT(err, 2.0 * r.grid.dt());
        EXPECT_LT(err, previous);
        previous = err;
    }
}

TEST(Adjoint, SecondAdjointIsNegativeSemidefiniteOnLq) {
    const Scenario r = make_run(testing::lq_benchmark(), testing::lq_space(), 32, 200, testing::lq_sampler(), 0.3);
    const auto first = solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar);
    const auto P = solve_second_adjoint_auto(*r.model, r.space, r.base, r.ubar, first);
    ASSERT_TRUE(P.deterministic());
    for (int k = 0; k <= 32; ++k) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-P.P_at(k, 0));
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    }
    EXPECT_TRUE(P.warnings.empty());
}

TEST(AdjointTrivial, SecondDualityWithoutForcing) {
    const auto model = testing::zero_model(2, 2, unit_box());
    const Scenario r = make_run(model, testing::lq_space(), 8, 30, testing::lq_sampler());
    const auto first = solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar);
    const auto P = solve_second_adjoint_auto(*r.model, r.space, r.base, r.ubar, first);
    const TranspositionReport rep = verify_transposition_second(r.space, r.base, P, 2, 5);
    for (const auto& c : rep.checks) {
        EXPECT_EQ(c.lhs, 0.0) << c.name;
        EXPECT_EQ(c.rhs, 0.0) << c.name;
    }
}

// Deterministic fast path: sources zero, b_x = 0 and f = 0 leave <P_M phi1, phi2> = <P_0 xi1, xi2>.
TEST(Adjoint, SecondDualityDeterministicFastPath) {
    LinearQuadraticParams p;
    p.A1 = Eigen::MatrixXd(2, 2);
    p.A1 << -0.5, 0.2, 0.1, -0.3;
    p.S0 = 0.4 * Eigen::MatrixXd::Identity(2, 2);
    p.H = Eigen::MatrixXd(2, 2);
    p.H << 1.0, 0.2, 0.2, 0.5;
    const auto model = make_linear_quadratic(2, 2, Eigen::Vector2d(1.0, 0.5), unit_box(), p);
    const Scenario r = make_run(model, testing::lq_space(), 256, 10, testing::lq_sampler());
    const auto first = solve_first_adjoint_auto(*r.model, r.space, r.base, r.ubar);
    const auto P = solve_second_adjoint_auto(*r.model, r.space, r.base, r.ubar, first);
    SecondTestSource s1{Eigen::Vector2d(1.0, -0.5), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(),
                        Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
    SecondTestSource s2 = s1;
    s2.xi = Eigen::Vector2d(0.3, 2.0);
    const auto a = simulate_second_test(s1, P, r.space, r.base);
    const auto b = simulate_second_test(s2, P, r.space, r.base);
    EXPECT_LT(second_duality("fast", P, r.space, a, b).residual, 1e-6);
}

TEST(Reproducibility, AdjointsAreBitIdenticalAcrossWorkers) {
    const Scenario r = make_run(testing::tanh_benchmark(), testing::tanh_space(), 8, 301, testing::tanh_sampler(), 0.1);
    AdjointOptions one, four;
    four.exec.workers = 4;
    const auto a = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, FirstAdjointMethod::picard_regression, one);
    const auto b = solve_first_adjoint(*r.model, r.space, r.base, r.ubar, FirstAdjointMethod::picard_regression, four);
    for (int k = 0; k <= 8; ++k) EXPECT_EQ(a.p[k], b.p[k]);
    for (int k = 0; k < 8; ++k) EXPECT_EQ(a.q[k], b.q[k]);
    const auto Pa = solve_second_adjoint_auto(*r.model, r.space, r.base, r.ubar, a, one);
    const auto Pb = solve_second_adjoint_auto(*r.model, r.space, r.base, r.ubar, b, four);
    for (int k = 0; k <= 8; ++k) EXPECT_EQ(Pa.P[k], Pb.P[k]);
}

TEST(Adjoint, DualityCheckScaleGuardsCancellation) {
    const DualityCheck c = make_duality_check("x", 0.01, 0.02, {5.0, -4.99});
    EXPECT_DOUBLE_EQ(c.scale, 5.0);
    EXPECT_DOUBLE_EQ(c.relative, 0.01 / 5.0);
    const DualityCheck d = make_duality_check("y", 0.0, 0.0);
    EXPECT_EQ(d.relative, 0.0);
}

}  // namespace
}  // namespace mvlab
