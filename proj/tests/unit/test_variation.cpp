#include <cmath>

#include <gtest/gtest.h>

#include "mvlab/errors.hpp"
#include "mvlab/variation.hpp"
#include "support/benchmark_models.hpp"

namespace mvlab {
namespace {

struct TanhSetup {
    ModelPtr model = testing::tanh_benchmark();
    GalerkinSpace space = testing::tanh_space();
    TimeGrid grid{1.0, 32};
    int N = 64;
    ControlPath ubar = ControlPath::constant(32, 64, Eigen::VectorXd::Zero(1));
    StatePath base;

    TanhSetup() { base = simulate(*model, space, grid, ubar, N, testing::tanh_sampler(), SimulationOptions{4}); }
};

TEST(VariationTrivial, EmptySpikeGivesZeroVariations) {
    TanhSetup s;
    const ControlPath spike = make_spike_control_steps(s.ubar, Eigen::VectorXd::Ones(1), {}, s.grid, s.model->control_set());
    const VariationPath y = solve_first_variation(*s.model, s.space, s.base, s.ubar, spike);
    for (const auto& block : y.y) EXPECT_EQ(block.cwiseAbs().maxCoeff(), 0.0);
    const VariationPath z = solve_second_variation(*s.model, s.space, s.base, y, s.ubar, spike);
    ASSERT_TRUE(z.has_z());
    for (const auto& block : z.z) EXPECT_EQ(block.cwiseAbs().maxCoeff(), 0.0);
}

TEST(VariationTrivial, ScalarInteractionHasNoMixedMeasureSource) {
    const auto model = testing::tanh_benchmark();
    RngStream s(2, StreamPurpose::user);
    Eigen::MatrixXd x(3, 6);
    for (int i = 0; i < 6; ++i)
        for (int k = 0; k < 3; ++k) x(k, i) = s.normal();
    const ParticleEnsemble mu(x);
    const LionsDerivative D = deriv_mu(*model, Coef::a, MeasureKind::y_mu, 0.1, Eigen::Vector3d(0.2, 0.1, -0.3), mu,
                                       Eigen::VectorXd::Constant(1, 0.5), Eigen::Vector3d(1.0, -1.0, 0.5));
    for (const auto& m : D.second) EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0);
}

// b = 0, no measure terms, a = A x + B u on one mode: y solves y' = (lambda + A) y + B du on the window.
TEST(Variation, DeterministicImpulseMatchesClosedForm) {
    LinearQuadraticParams p;
    p.A1 = Eigen::MatrixXd::Constant(1, 1, -0.7);
    p.B = Eigen::MatrixXd::Constant(1, 1, 1.3);
    const auto model = make_linear_quadratic(1, 1, Eigen::VectorXd::Ones(1),
                                             ControlSet::box(Eigen::VectorXd::Constant(1, -1), Eigen::VectorXd::Ones(1)), p);
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(1, 1, 0.05);
    const double rate = space.eigenvalues()[0] - 0.7;
    const double s0 = 0.25, eps = 0.25, du = 1.0, T = 1.0;
    // y(T) = integral over [s0, s0 + eps] of e^{rate (T - r)} B du dr.
    const double exact = 1.3 * du * (std::exp(rate * (T - s0 - eps)) - std::exp(rate * (T - s0))) / (-rate);
    double previous = 1e9;
    for (int M : {32, 64, 128}) {
        const TimeGrid grid(T, M);
        const ControlPath ubar = ControlPath::constant(M, 2, Eigen::VectorXd::Zero(1));
        InitialSampler sampler;
        sampler.mean = Eigen::VectorXd::Ones(1);
        sampler.stddev = Eigen::VectorXd::Zero(1);
        const StatePath base = simulate(*model, space, grid, ubar, 2, sampler);
        const ControlPath spike = make_spike_control(ubar, Eigen::VectorXd::Constant(1, du), eps, s0, grid, model->control_set());
        const VariationPath y = solve_first_variation(*model, space, base, ubar, spike);
        const double err = std::abs(y.y.back()(0, 0) - exact);
        EXPECT_LT(err, 2.0 * grid.dt());
        EXPECT_LT(err, previous);
        previous = err;
    }
}

TEST(Variation, FirstVariationIsLinearInSource) {
    TanhSetup s;
    const ControlPath spike = make_spike_control(s.ubar, Eigen::VectorXd::Ones(1), 0.125, 0.25, s.grid, s.model->control_set());
    VariationOptions one;
    one.second_order = false;
    VariationOptions two = one;
    two.source_scale = 2.0;
    const auto y1 = solve_variations(*s.model, s.space, s.base, s.ubar, {&spike}, one).front();
    const auto y2 = solve_variations(*s.model, s.space, s.base, s.ubar, {&spike}, two).front();
    for (int k = 0; k <= s.grid.M(); ++k) EXPECT_LT((y2.y[k] - 2.0 * y1.y[k]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Variation, JointSweepMatchesSeparateSolves) {
    TanhSetup s;
    const ControlPath a = make_spike_control(s.ubar, Eigen::VectorXd::Ones(1), 0.125, 0.25, s.grid, s.model->control_set());
    const ControlPath b = make_spike_control(s.ubar, -Eigen::VectorXd::Ones(1), 0.25, 0.5, s.grid, s.model->control_set());
    const auto joint = solve_variations(*s.model, s.space, s.base, s.ubar, {&a, &b});
    const auto single = solve_variations(*s.model, s.space, s.base, s.ubar, {&b});
    for (int k = 0; k <= s.grid.M(); ++k) {
        EXPECT_EQ(joint[1].y[k], single[0].y[k]);
        EXPECT_EQ(joint[1].z[k], single[0].z[k]);
    }
}

TEST(VariationTrivial, SmoothingEstimateDegenerateCases) {
    TanhSetup s;
    const ControlPath spike = make_spike_control(s.ubar, Eigen::VectorXd::Ones(1), 0.125, 0.25, s.grid, s.model->control_set());
    const VariationPath y = solve_first_variation(*s.model, s.space, s.base, s.ubar, spike);
    const TestProcess zero = constant_test_process("zero", Eigen::MatrixXd::Zero(2, 3));
    EXPECT_EQ(smoothing_estimate(s.base, y, zero), 0.0);
    EXPECT_EQ(smoothing_estimate(s.base, y, zero, false), 0.0);
    const ControlPath empty = make_spike_control_steps(s.ubar, Eigen::VectorXd::Ones(1), {}, s.grid, s.model->control_set());
    const VariationPath y0 = solve_first_variation(*s.model, s.space, s.base, s.ubar, empty);
    const TestProcess one = constant_test_process("one", Eigen::MatrixXd::Identity(3, 3));
    EXPECT_EQ(smoothing_estimate(s.base, y0, one), 0.0);
    EXPECT_EQ(smoothing_estimate(s.base, y0, path_dependent_test_process("path", s.grid)), 0.0);
}

TEST(Variation, RateSweepValidation) {
    TanhSetup s;
    RateConfig config;
    config.N = 16;
    config.pert = Eigen::VectorXd::Ones(1);
    config.sampler = testing::tanh_sampler();
    EXPECT_THROW(remainder_rates(*s.model, s.space, s.grid, ControlPath::constant(32, 16, Eigen::VectorXd::Zero(1)),
                                 {0.25, 0.125, 0.0625}, config),
                 DomainError);
    EXPECT_THROW(remainder_rates(*s.model, s.space, s.grid, ControlPath::constant(32, 16, Eigen::VectorXd::Zero(1)),
                                 {0.25, 0.2, 0.15, 0.125}, config),
                 DomainError);
}

TEST(Variation, RateReportShape) {
    const auto model = testing::tanh_benchmark();
    const GalerkinSpace space = testing::tanh_space();
    const TimeGrid grid(1.0, 32);
    RateConfig config;
    config.N = 64;
    config.seeds = {1, 2};
    config.pert = Eigen::VectorXd::Ones(1);
    config.sampler = testing::tanh_sampler();
    config.bootstrap_replicates = 50;
    const RateReport r = remainder_rates(*model, space, grid, ControlPath::constant(32, 64, Eigen::VectorXd::Zero(1)),
                                         {0.25, 0.125, 0.0625, 0.03125}, config);
    EXPECT_EQ(r.eps.size(), 4u);
    for (const char* name : {"xi", "y", "z", "eta", "zeta"}) {
        const RateSeries& s = r.get(name);
        EXPECT_EQ(s.per_seed.size(), 2u);
        EXPECT_LE(s.ci.low, s.ci.high);
    }
    EXPECT_THROW(r.get("nope"), DomainError);
}

}  // namespace
}  // namespace mvlab
