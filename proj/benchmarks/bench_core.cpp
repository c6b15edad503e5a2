#include <benchmark/benchmark.h>

#include "mvlab/adjoint.hpp"
#include "mvlab/forward.hpp"
#include "mvlab/pmp.hpp"

namespace {

using namespace mvlab;

struct Setup {
    GalerkinSpace space = GalerkinSpace::dirichlet_laplacian(2, 2, 0.05);
    ModelPtr model;
    InitialSampler sampler;
    Control ubar = Control::Constant(1, 0.3);

    Setup() {
        LinearQuadraticParams p;
        p.A1 = Eigen::MatrixXd(2, 2);
        p.A1 << -0.5, 0.2, 0.0, -0.3;
        p.abar = 0.4;
        p.B = Eigen::MatrixXd(2, 1);
        p.B << 1.0, 0.5;
        p.S0 = 0.3 * Eigen::MatrixXd::Identity(2, 2);
        p.R = {0.2 * Eigen::MatrixXd::Identity(2, 2)};
        p.sigma_x = 0.2;
        p.w_m = 0.1;
        p.Q = Eigen::MatrixXd::Identity(2, 2);
        p.qbar = 0.5;
        p.r = 0.5;
        p.H = Eigen::MatrixXd::Identity(2, 2);
        p.hbar = 0.5;
        p.c = Eigen::Vector2d(0.3, -0.2);
        model = make_linear_quadratic(2, 2, Eigen::Vector2d(1.0, 0.5), ControlSet::box(Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)), p);
        sampler.mean = Eigen::Vector2d(0.5, -0.3);
        sampler.stddev = Eigen::Vector2d::Constant(0.4);
    }
};

const Setup& setup() {
    static const Setup s;
    return s;
}

void BM_Simulate(benchmark::State& state) {
    const Setup& s = setup();
    const int N = static_cast<int>(state.range(0));
    const TimeGrid grid(1.0, 64);
    const ControlPath u = ControlPath::constant(grid.M(), N, s.ubar);
    SimulationOptions opts;
    opts.seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(simulate(*s.model, s.space, grid, u, N, s.sampler, opts));
    state.SetItemsProcessed(state.iterations() * N * grid.M());
}
BENCHMARK(BM_Simulate)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_PicardAdjoint(benchmark::State& state) {
    const Setup& s = setup();
    const int N = static_cast<int>(state.range(0));
    const TimeGrid grid(1.0, 32);
    const ControlPath u = ControlPath::constant(grid.M(), N, s.ubar);
    SimulationOptions opts;
    opts.seed = 1;
    const StatePath base = simulate(*s.model, s.space, grid, u, N, s.sampler, opts);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            solve_first_adjoint(*s.model, s.space, base, u, FirstAdjointMethod::picard_regression, AdjointOptions{}));
}
BENCHMARK(BM_PicardAdjoint)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_SmpGap(benchmark::State& state) {
    const Setup& s = setup();
    const int N = static_cast<int>(state.range(0));
    const TimeGrid grid(1.0, 16);
    const ControlPath u = ControlPath::constant(grid.M(), N, s.ubar);
    SimulationOptions opts;
    opts.seed = 1;
    const StatePath base = simulate(*s.model, s.space, grid, u, N, s.sampler, opts);
    const FirstAdjointPath first = solve_first_adjoint_auto(*s.model, s.space, base, u, AdjointOptions{});
    const SecondAdjointPath second = solve_second_adjoint_auto(*s.model, s.space, base, u, first, AdjointOptions{});
    const auto u_grid = control_grid(s.model->control_set(), 9);
    for (auto _ : state) benchmark::DoNotOptimize(smp_gap(*s.model, s.space, base, u, first, second, u_grid));
}
BENCHMARK(BM_SmpGap)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
