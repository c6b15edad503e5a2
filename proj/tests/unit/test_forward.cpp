#include <cmath>

#include <gtest/gtest.h>

#include "mvlab/errors.hpp"
#include "mvlab/forward.hpp"
#include "mvlab/stats.hpp"
#include "support/oracles.hpp"

namespace mvlab {
namespace {

ControlSet unit_box() { return ControlSet::box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)); }

InitialSampler point_mass(Eigen::VectorXd x) {
    InitialSampler s;
    s.stddev = Eigen::VectorXd::Zero(x.size());
    s.mean = std::move(x);
    return s;
}

TEST(ForwardTrivial, OneStepSpikeWithBaseValueIsBase) {
    const TimeGrid grid(1.0, 16);
    ControlPath base = ControlPath::constant(16, 3, Eigen::VectorXd::Constant(1, 0.25));
    const ControlPath spike =
        make_spike_control(base, Eigen::VectorXd::Constant(1, 0.25), grid.dt(), 0.5, grid, unit_box());
    for (int k = 0; k < 16; ++k) EXPECT_EQ(spike.step(k), base.step(k));
    EXPECT_EQ(spike.spike()->steps, std::vector<int>{8});
}

TEST(ForwardTrivial, FullWindowSpikeIsConstantPerturbation) {
    const TimeGrid grid(2.0, 10);
    const ControlPath base = ControlPath::constant(10, 4, Eigen::VectorXd::Constant(1, -0.5));
    const ControlPath spike = make_spike_control(base, Eigen::VectorXd::Constant(1, 0.75), 2.0, 0.0, grid, unit_box());
    for (int k = 0; k < 10; ++k) EXPECT_EQ(spike.step(k), Eigen::MatrixXd::Constant(1, 4, 0.75));
}

TEST(ForwardTrivial, SpikeMeasureEqualsEps) {
    const TimeGrid grid(1.0, 20);
    const ControlPath base = ControlPath::constant(20, 2, Eigen::VectorXd::Zero(1));
    for (int steps : {2, 5}) {
        const double eps = steps * grid.dt();
        const ControlPath spike = make_spike_control(base, Eigen::VectorXd::Ones(1), eps, 0.3, grid, unit_box());
        EXPECT_DOUBLE_EQ(spike.spike()->eps_grid, eps);
        EXPECT_EQ(static_cast<int>(spike.spike()->steps.size()), steps);
    }
}

TEST(Forward, SpikeValidation) {
    const TimeGrid grid(1.0, 8);
    const ControlPath base = ControlPath::constant(8, 2, Eigen::VectorXd::Zero(1));
    EXPECT_THROW(make_spike_control(base, Eigen::VectorXd::Ones(1), 0.0, 0.0, grid, unit_box()), DomainError);
    EXPECT_THROW(make_spike_control(base, Eigen::VectorXd::Constant(1, 2.0), 0.25, 0.0, grid, unit_box()), DomainError);
    EXPECT_THROW(make_spike_control(base, Eigen::VectorXd::Ones(1), 0.5, 0.75, grid, unit_box()), DomainError);
}

TEST(ForwardTrivial, PureSemigroupFlow) {
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(3, 2, 0.1);
    const auto model = testing::zero_model(3, 2, unit_box());
    const TimeGrid grid(1.0, 20);
    const Eigen::Vector3d xi(1.0, -2.0, 0.5);
    const StatePath path =
        simulate(*model, space, grid, ControlPath::constant(20, 4, Eigen::VectorXd::Zero(1)), 4, point_mass(xi));
    for (int k = 0; k <= 20; ++k) {
        const StateVector expected = semigroup_apply(space, k * grid.dt(), xi);
        for (int i = 0; i < 4; ++i) EXPECT_LT((path.x[k].col(i) - expected).norm(), 1e-14);
    }
}

TEST(Forward, BrownianVariance) {
    const GalerkinSpace space(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    LinearQuadraticParams p;
    p.S0 = Eigen::MatrixXd::Ones(1, 1);
    const auto model = make_linear_quadratic(1, 1, Eigen::VectorXd::Ones(1), unit_box(), p);
    const double T = 2.0;
    const int N = 100000;
    const TimeGrid grid(T, 16);
    const StatePath path = simulate(*model, space, grid, ControlPath::constant(16, N, Eigen::VectorXd::Zero(1)), N,
                                    point_mass(Eigen::VectorXd::Zero(1)), SimulationOptions{3});
    const Eigen::ArrayXd x = path.x.back().row(0).transpose().array();
    const double var = (x - x.mean()).square().sum() / (N - 1);
    EXPECT_NEAR(var / T, 1.0, 0.02);
}

// Mean of the LQ benchmark: mu' = (Lambda + A1) mu + abar psi psi' mu + B u.
TEST(Forward, LqMeanMatchesOdeReference) {
    const auto model = testing::lq_benchmark();
    const GalerkinSpace space = testing::lq_space();
    const auto p = testing::lq_params();
    const Eigen::Vector2d psi(1.0, 0.5);
    const double u = 0.7;
    const Eigen::MatrixXd L = Eigen::MatrixXd(space.eigenvalues().asDiagonal()) + p.A1 + p.abar * psi * psi.transpose();
    const Eigen::VectorXd exact = testing::rk4(
        [&](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(L * y + p.B * Eigen::VectorXd::Constant(1, u)); },
        testing::lq_sampler().mean, 1.0, 2000);
    const int N = 20000;
    double previous = 0.0;
    for (int M : {16, 64}) {
        const TimeGrid grid(1.0, M);
        const StatePath path = simulate(*model, space, grid, ControlPath::constant(M, N, Eigen::VectorXd::Constant(1, u)),
                                        N, testing::lq_sampler(), SimulationOptions{5});
        const Eigen::VectorXd mean = path.x.back().rowwise().mean();
        // Sampling band: 5 standard errors of the terminal mean.
        const Eigen::VectorXd sd = ((path.x.back().colwise() - mean).array().square().rowwise().sum() / (N - 1)).sqrt();
        const double band = 5.0 * sd.maxCoeff() / std::sqrt(N);
        const double err = (mean - exact).cwiseAbs().maxCoeff();
        EXPECT_LT(err, 2.0 * grid.dt() + band) << "M = " << M;
        if (M == 64) EXPECT_LT(err, previous + band);
        previous = err;
    }
}

TEST(ForwardTrivial, ZeroCostModel) {
    const auto model = testing::zero_model(2, 1, unit_box());
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(2, 1, 0.1);
    const TimeGrid grid(1.0, 8);
    InitialSampler s;
    s.mean = Eigen::Vector2d(1.0, 2.0);
    s.stddev = Eigen::Vector2d(0.5, 0.5);
    const ControlPath u = ControlPath::constant(8, 10, Eigen::VectorXd::Constant(1, 0.5));
    EXPECT_EQ(cost(*model, simulate(*model, space, grid, u, 10, s), u), 0.0);
}

TEST(ForwardTrivial, UnitRunningCostIntegratesToHorizon) {
    LinearQuadraticParams p;
    p.r = 2.0;  // f = |u|^2 = 1 at u = 1
    const auto model = make_linear_quadratic(1, 1, Eigen::VectorXd::Ones(1), unit_box(), p);
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(1, 1, 0.1);
    for (double T : {1.0, 2.5}) {
        const TimeGrid grid(T, 8);
        const ControlPath u = ControlPath::constant(8, 5, Eigen::VectorXd::Ones(1));
        EXPECT_EQ(cost(*model, simulate(*model, space, grid, u, 5, point_mass(Eigen::VectorXd::Ones(1))), u), T);
    }
}

// Particle cost under two-point controls against the exact mean-field cost: the best
// two-point control from the exact oracle also has the smallest simulated cost.
TEST(Forward, CostMatchesExactScalarLqAndGridSearch) {
    const testing::ScalarLq q;
    const auto model = testing::scalar_lq_model(q);
    const GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(1, 1, 0.05);
    const int M = 4, N = 20000;
    const TimeGrid grid(1.0, M);
    const auto noise = generate_noise(space, grid, N, 8);
    SimulationOptions sim{8};
    sim.noise = noise;
    double best_exact = 1e300, best_sim = 1e300;
    int argmin_exact = -1, argmin_sim = -1;
    for (int code = 0; code < (1 << M); ++code) {
        std::vector<double> u(M);
        std::vector<Control> per_step;
        for (int k = 0; k < M; ++k) {
            u[k] = (code >> k) & 1 ? 1.0 : -1.0;
            per_step.push_back(Eigen::VectorXd::Constant(1, u[k]));
        }
        const double exact = testing::scalar_lq_exact_cost(q, space.eigenvalues()[0], 1.0, u);
        const ControlPath path_u = ControlPath::common(per_step, N);
        const double simulated = cost(*model, simulate(*model, space, grid, path_u, N, testing::scalar_lq_sampler(q), sim), path_u);
        EXPECT_NEAR(simulated, exact, 0.02 * std::abs(exact) + 0.01);
        if (exact < best_exact) best_exact = exact, argmin_exact = code;
        if (simulated < best_sim) best_sim = simulated, argmin_sim = code;
    }
    EXPECT_EQ(argmin_sim, argmin_exact);
    EXPECT_NEAR(best_sim, best_exact, 0.02 * std::abs(best_exact));
}

TEST(Reproducibility, SimulationIsBitIdenticalAcrossWorkers) {
    const auto model = testing::tanh_benchmark();
    const GalerkinSpace space = testing::tanh_space();
    const TimeGrid grid(1.0, 16);
    const ControlPath u = ControlPath::constant(16, 257, Eigen::VectorXd::Constant(1, 0.2));
    SimulationOptions one{99, Execution{1}};
    SimulationOptions four{99, Execution{4}};
    const StatePath a = simulate(*model, space, grid, u, 257, testing::tanh_sampler(), one);
    const StatePath b = simulate(*model, space, grid, u, 257, testing::tanh_sampler(), four);
    for (int k = 0; k <= 16; ++k) EXPECT_EQ(a.x[k], b.x[k]);
    EXPECT_EQ(a.m, b.m);
    EXPECT_EQ(cost(*model, a, u, Execution{1}), cost(*model, b, u, Execution{3}));
}

TEST(Forward, CoarsenedNoiseDrivesSamePaths) {
    const GalerkinSpace space = testing::lq_space();
    const auto fine = generate_noise(space, TimeGrid(1.0, 8), 5, 4);
    const auto coarse = coarsen_noise(*fine, 4);
    ASSERT_EQ(coarse->steps(), 2);
    EXPECT_LT((coarse->dw[1] - (fine->dw[4] + fine->dw[5] + fine->dw[6] + fine->dw[7])).norm(), 1e-15);
    EXPECT_THROW(coarsen_noise(*fine, 3), DomainError);
}

TEST(Forward, NonFiniteStateRaisesFault) {
    LinearQuadraticParams p;
    p.A1 = Eigen::MatrixXd::Constant(1, 1, 5.0);
    const auto model = make_linear_quadratic(1, 1, Eigen::VectorXd::Ones(1), unit_box(), p);
    const GalerkinSpace space(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    const TimeGrid grid(1.0, 1);
    try {
        simulate(*model, space, grid, ControlPath::constant(1, 3, Eigen::VectorXd::Zero(1)), 3,
                 point_mass(Eigen::VectorXd::Constant(1, 1e308)));
        FAIL() << "expected a SimulationFault";
    } catch (const SimulationFault& f) {
        EXPECT_EQ(f.step(), 1);
        EXPECT_EQ(f.particle(), 0);
    }
}

TEST(Forward, StructuralChecks) {
    const auto model = testing::lq_benchmark();
    const GalerkinSpace wrong = GalerkinSpace::dirichlet_laplacian(3, 2, 0.1);
    const TimeGrid grid(1.0, 4);
    EXPECT_THROW(simulate(*model, wrong, grid, ControlPath::constant(4, 2, Eigen::VectorXd::Zero(1)), 2,
                          testing::lq_sampler()),
                 StructuralError);
    EXPECT_THROW(TimeGrid(1.0, 0), DomainError);
    EXPECT_THROW(simulate(*model, testing::lq_space(), grid, ControlPath::constant(3, 2, Eigen::VectorXd::Zero(1)), 2,
                          testing::lq_sampler()),
                 StructuralError);
}

}  // namespace
}  // namespace mvlab
