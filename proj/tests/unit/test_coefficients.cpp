#include <sstream>

#include <gtest/gtest.h>

#include "mvlab/derivative_checks.hpp"
#include "mvlab/errors.hpp"
#include "support/oracles.hpp"

namespace mvlab {
namespace {

using testing::FrozenLq;
using testing::FrozenTanh;

ControlSet unit_box() { return ControlSet::box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)); }

Eigen::MatrixXd random_matrix(int rows, int cols, RngStream& s, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = scale * s.normal();
    return m;
}

TEST(CoefficientsTrivial, ZeroLqHasZeroDrift) {
    const auto model = testing::zero_model(2, 2, unit_box());
    RngStream s(3, StreamPurpose::user);
    for (int r = 0; r < 5; ++r) {
        const ParticleEnsemble mu(random_matrix(2, 4, s));
        const Eigen::VectorXd a = eval(*model, Coef::a, 0.3, random_matrix(2, 1, s), mu, Eigen::VectorXd::Constant(1, 0.5));
        EXPECT_EQ(a, Eigen::VectorXd::Zero(2));
    }
}

TEST(CoefficientsTrivial, TanhDriftVanishesAtZeroEnsemble) {
    ScalarInteractionParams p;
    p.kappa = 0.0;
    p.alpha_x = 0.0;
    const auto model = make_scalar_interaction(2, 1, Eigen::Vector2d(1.0, 0.5), unit_box(), p);
    const ParticleEnsemble mu(Eigen::MatrixXd::Zero(2, 3));
    EXPECT_EQ(eval(*model, Coef::a, 0.0, Eigen::Vector2d(0.7, -0.2), mu, Eigen::VectorXd::Zero(1)),
              Eigen::VectorXd::Zero(2));
}

TEST(Coefficients, TanhMatchesFrozenImplementation) {
    const auto model = testing::tanh_benchmark();
    const FrozenTanh frozen{testing::tanh_params(), testing::tanh_psi(), 2};
    RngStream s(11, StreamPurpose::user);
    for (int r = 0; r < 100; ++r) {
        const ParticleEnsemble mu(random_matrix(3, 5, s));
        const double m = empirical_mean_statistic(mu, model->psi());
        const Eigen::VectorXd x = random_matrix(3, 1, s, 1.5);
        const Control u = Eigen::VectorXd::Constant(1, 2.0 * s.uniform() - 1.0);
        EXPECT_LT((eval(*model, Coef::a, 0.1, x, mu, u) - frozen.a(x, m, u)).cwiseAbs().maxCoeff(), 1e-12);
        const Eigen::VectorXd b = eval(*model, Coef::b, 0.1, x, mu, u);
        EXPECT_LT((as_hs(b, 3, 2) - frozen.b(x, m, u)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(eval(*model, Coef::f, 0.1, x, mu, u)[0], frozen.f(x, m, u), 1e-12);
        EXPECT_NEAR(eval(*model, Coef::h, 0.1, x, mu, u)[0], frozen.h(x, m), 1e-12);
    }
}

TEST(Coefficients, LqMatchesFrozenImplementation) {
    const auto model = testing::lq_benchmark();
    const FrozenLq frozen{testing::lq_params(), Eigen::Vector2d(1.0, 0.5), 2};
    RngStream s(12, StreamPurpose::user);
    for (int r = 0; r < 100; ++r) {
        const ParticleEnsemble mu(random_matrix(2, 5, s));
        const double m = empirical_mean_statistic(mu, model->psi());
        const Eigen::VectorXd x = random_matrix(2, 1, s, 1.5);
        const Control u = Eigen::VectorXd::Constant(1, 4.0 * s.uniform() - 2.0);
        EXPECT_LT((eval(*model, Coef::a, 0.1, x, mu, u) - frozen.a(x, m, u)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((as_hs(eval(*model, Coef::b, 0.1, x, mu, u), 2, 2) - frozen.b(x, m, u)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(eval(*model, Coef::f, 0.1, x, mu, u)[0], frozen.f(x, m, u), 1e-12);
        EXPECT_NEAR(eval(*model, Coef::h, 0.1, x, mu, u)[0], frozen.h(x, m), 1e-12);
    }
}

TEST(CoefficientsTrivial, LinearDriftDerivatives) {
    LinearQuadraticParams p;
    p.A1 = Eigen::MatrixXd(2, 2);
    p.A1 << -1.0, 0.5, 0.25, -2.0;
    const auto model = make_linear_quadratic(2, 1, Eigen::Vector2d(1.0, 0.0), unit_box(), p);
    const ParticleEnsemble mu(Eigen::MatrixXd::Ones(2, 3));
    const Eigen::Vector2d x(0.3, -0.4);
    const Control u = Eigen::VectorXd::Zero(1);
    EXPECT_EQ(deriv_x(*model, Coef::a, 0.0, x, mu, u), p.A1);
    for (const auto& h : deriv_xx(*model, Coef::a, 0.0, x, mu, u)) EXPECT_EQ(h, Eigen::MatrixXd::Zero(2, 2));
}

TEST(CoefficientsTrivial, QuadraticCostHessian) {
    LinearQuadraticParams p;
    p.Q = Eigen::MatrixXd(2, 2);
    p.Q << 2.0, 0.5, 0.5, 1.0;
    const auto model = make_linear_quadratic(2, 1, Eigen::Vector2d(1.0, 0.0), unit_box(), p);
    const ParticleEnsemble mu(Eigen::MatrixXd::Ones(2, 3));
    const auto hess = deriv_xx(*model, Coef::f, 0.0, Eigen::Vector2d(0.3, -0.4), mu, Eigen::VectorXd::Zero(1));
    ASSERT_EQ(hess.size(), 1u);
    EXPECT_EQ(hess[0], p.Q);
}

TEST(CoefficientsTrivial, MeasureFreeModelHasZeroLionsDerivatives) {
    LinearQuadraticParams p = testing::lq_params();
    p.abar = 0.0;
    p.w_m = 0.0;
    p.qbar = 0.0;
    p.hbar = 0.0;
    const auto model = make_linear_quadratic(2, 2, Eigen::Vector2d(1.0, 0.5),
                                             ControlSet::box(Eigen::VectorXd::Constant(1, -2), Eigen::VectorXd::Constant(1, 2)), p);
    const ParticleEnsemble mu(Eigen::MatrixXd::Ones(2, 3));
    const Eigen::Vector2d x(0.1, 0.2), y(-0.5, 0.7);
    for (Coef c : {Coef::a, Coef::b, Coef::f, Coef::h}) {
        for (MeasureKind k : {MeasureKind::mu, MeasureKind::y_mu, MeasureKind::mu_x, MeasureKind::mu_mu}) {
            const LionsDerivative D = deriv_mu(*model, c, k, 0.0, x, mu, Eigen::VectorXd::Zero(1), y, y);
            EXPECT_EQ(D.first.cwiseAbs().sum(), 0.0);
            for (const auto& m : D.second) EXPECT_EQ(m.cwiseAbs().sum(), 0.0);
        }
    }
}

TEST(CoefficientsTrivial, SquaredStatisticChainRule) {
    LinearQuadraticParams p;
    p.qbar = 2.0;  // f = m^2
    const auto model = make_linear_quadratic(2, 1, Eigen::Vector2d(1.0, 0.0), unit_box(), p);
    Eigen::MatrixXd x(2, 2);
    x << 2.0, 4.0, 7.0, -1.0;  // m = mean of first coordinates = 3
    const ParticleEnsemble mu(x);
    for (const Eigen::Vector2d y : {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(5.0, -3.0)}) {
        const LionsDerivative D =
            deriv_mu(*model, Coef::f, MeasureKind::mu, 0.0, Eigen::Vector2d(1, 1), mu, Eigen::VectorXd::Zero(1), y);
        EXPECT_EQ(D.first.row(0), Eigen::RowVector2d(6.0, 0.0));
    }
}

TEST(CoefficientsTrivial, LiftWithZeroDirection) {
    const auto model = testing::tanh_benchmark();
    RngStream s(4, StreamPurpose::user);
    const ParticleEnsemble mu(random_matrix(3, 8, s));
    const ParticleEnsemble zero(Eigen::MatrixXd::Zero(3, 8));
    for (Coef c : {Coef::a, Coef::b, Coef::f, Coef::h}) {
        const SweepReport r = check_lions_lift(*model, c, 0.2, Eigen::Vector3d(0.1, 0.2, 0.3), mu,
                                               Eigen::VectorXd::Constant(1, 0.4), zero);
        EXPECT_EQ(r.best_error, 0.0);
        EXPECT_TRUE(r.passed);
    }
}

TEST(CoefficientsTrivial, LinearLiftIsExact) {
    LinearQuadraticParams p;
    p.abar = 1.0;  // a = m psi
    const auto model = make_linear_quadratic(2, 1, Eigen::Vector2d(1.0, -0.5), unit_box(), p);
    RngStream s(5, StreamPurpose::user);
    const ParticleEnsemble mu(random_matrix(2, 10, s));
    const ParticleEnsemble Y(random_matrix(2, 10, s));
    const SweepReport r =
        check_lions_lift(*model, Coef::a, 0.0, Eigen::Vector2d(0.0, 0.0), mu, Eigen::VectorXd::Zero(1), Y);
    EXPECT_TRUE(r.exact);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.best_error, 1e-10);
}

TEST(Coefficients, TanhLiftConvergesAtSecondOrder) {
    const auto model = testing::tanh_benchmark();
    RngStream s(6, StreamPurpose::user);
    const ParticleEnsemble mu(random_matrix(3, 32, s));
    const ParticleEnsemble Y(random_matrix(3, 32, s));
    for (Coef c : {Coef::a, Coef::b, Coef::f, Coef::h}) {
        const SweepReport r =
            check_lions_lift(*model, c, 0.2, Eigen::Vector3d(0.1, -0.2, 0.3), mu, Eigen::VectorXd::Constant(1, 0.4), Y);
        EXPECT_TRUE(r.passed) << to_string(c) << " error " << r.best_error << " order " << r.observed_order;
        EXPECT_LT(r.errors[2], 1e-4) << to_string(c);  // eps = 1e-4
    }
}

TEST(FiniteDifference, EveryFamilyPassesEverySlot) {
    for (const auto& model : {testing::tanh_benchmark(), testing::lq_benchmark(), testing::custom_table_benchmark()}) {
        for (const SweepReport& r : fd_check_family(*model, 8, 21)) {
            EXPECT_TRUE(r.passed) << to_string(model->family()) << " " << r.label << " error " << r.best_error
                                  << " order " << r.observed_order;
        }
    }
}

TEST(Coefficients, LipschitzProbePassesForBenchmarks) {
    for (const auto& model : {testing::tanh_benchmark(), testing::lq_benchmark()})
        EXPECT_TRUE(probe_lipschitz(*model, ProbeSettings{}).passed);
}

TEST(Coefficients, EvalRejectsInadmissibleControl) {
    const auto model = testing::lq_benchmark();
    const ParticleEnsemble mu(Eigen::MatrixXd::Zero(2, 2));
    EXPECT_THROW(eval(*model, Coef::a, 0.0, Eigen::Vector2d(0, 0), mu, Eigen::VectorXd::Constant(1, 3.0)), DomainError);
    EXPECT_THROW(eval(*model, Coef::a, 0.0, Eigen::Vector3d(0, 0, 0), mu, Eigen::VectorXd::Zero(1)), StructuralError);
    EXPECT_THROW(eval(*model, Coef::a, 0.0, Eigen::Vector2d(std::nan(""), 0), mu, Eigen::VectorXd::Zero(1)),
                 DomainError);
}

TEST(Coefficients, ScheduleParsing) {
    std::istringstream good("t,drift_scale,noise_scale,control_scale\n0,1,1,1\n0.5,2,3,4\n");
    const TableSchedule s = TableSchedule::from_csv(good);
    EXPECT_EQ(s.at(0.25), Eigen::Vector3d(1, 1, 1));
    EXPECT_EQ(s.at(0.75), Eigen::Vector3d(2, 3, 4));
    std::istringstream bad("t,drift_scale,noise_scale,control_scale\n0.5,1,1,1\n0.2,1,1,1\n");
    EXPECT_THROW(TableSchedule::from_csv(bad), DomainError);
}

TEST(Coefficients, LqParametersOnlyForLqFamily) {
    EXPECT_NE(lq_parameters(*testing::lq_benchmark()), nullptr);
    EXPECT_EQ(lq_parameters(*testing::tanh_benchmark()), nullptr);
}

}  // namespace
}  // namespace mvlab
