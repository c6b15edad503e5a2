#include <cmath>
#include <numbers>
#include <ostream>

#include "json.hpp"
#include "mvlab/adjoint.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

DualityCheck make_duality_check(std::string name, double lhs, double rhs, std::initializer_list<double> terms) {
    DualityCheck c;
    c.name = std::move(name);
    c.lhs = lhs;
    c.rhs = rhs;
    c.residual = std::abs(lhs - rhs);
    c.scale = std::max(std::abs(lhs), std::abs(rhs));
    for (double t : terms) c.scale = std::max(c.scale, std::abs(t));
    c.relative = c.scale > 0.0 ? c.residual / c.scale : 0.0;
    return c;
}

double TranspositionReport::max_relative() const {
    double worst = 0.0;
    for (const auto& c : checks) worst = std::max(worst, c.relative);
    return worst;
}

void TranspositionReport::write_json(std::ostream& out) const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : checks)
        j.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"residual", c.residual},
                     {"scale", c.scale}, {"relative", c.relative}});
    out << nlohmann::json{{"checks", j}, {"max_relative", max_relative()}}.dump(2) << '\n';
}

namespace {

double profile_sin(double t, double T) { return std::sin(2.0 * std::numbers::pi * t / T); }
double profile_cos(double t, double T) { return std::cos(2.0 * std::numbers::pi * t / T); }

Eigen::MatrixXd normal_matrix(RngStream& s, int r, int c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = scale * s.normal();
    return m;
}

double mean_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a.array() * b.array()).colwise().sum().mean();
}

}  // namespace

Eigen::VectorXd TestSystem::alpha(double t, double T) const { return alpha0 + profile_sin(t, T) * alpha1; }
Eigen::MatrixXd TestSystem::beta(double t, double T) const { return beta0 + profile_sin(t, T) * beta1; }

TestSystem random_test_system(int n, int d, double scale, std::uint64_t seed, int index) {
    RngStream s(seed, StreamPurpose::test_source, static_cast<std::uint64_t>(index), 1);
    const double mix = scale / std::sqrt(static_cast<double>(n));
    TestSystem sys;
    sys.J = normal_matrix(s, n, n, mix);
    for (int j = 0; j < d; ++j) sys.K.push_back(normal_matrix(s, n, n, mix));
    sys.x0 = normal_matrix(s, n, 1, 1.0);
    sys.alpha0 = normal_matrix(s, n, 1, scale);
    sys.alpha1 = normal_matrix(s, n, 1, scale);
    sys.beta0 = normal_matrix(s, n, d, scale);
    sys.beta1 = normal_matrix(s, n, d, scale);
    return sys;
}

TestSystem zero_test_system(int n, int d, Eigen::VectorXd x0) {
    TestSystem sys;
    sys.J = Eigen::MatrixXd::Zero(n, n);
    sys.K.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n, n));
    sys.x0 = std::move(x0);
    sys.alpha0 = sys.alpha1 = Eigen::VectorXd::Zero(n);
    sys.beta0 = sys.beta1 = Eigen::MatrixXd::Zero(n, d);
    return sys;
}

TestTrajectory simulate_test_system(const TestSystem& sys, const GalerkinSpace& space, const StatePath& base,
                                    const Execution& exec) {
    if (!base.noise) throw StructuralError("test system needs the noise record of the base path");
    const int n = space.n_state();
    const int d = space.n_noise();
    const int N = base.particles();
    const int M = base.grid.M();
    if (sys.J.rows() != n || static_cast<int>(sys.K.size()) != d || sys.x0.size() != n)
        throw StructuralError("test system dimensions do not match the space");
    const double dt = base.grid.dt();
    const Eigen::ArrayXd decay = space.semigroup_factors(dt).array();
    TestTrajectory out;
    out.x.assign(static_cast<std::size_t>(M) + 1, Eigen::MatrixXd(n, N));
    out.x.front() = sys.x0.replicate(1, N);
    out.drift.assign(static_cast<std::size_t>(M), Eigen::MatrixXd(n, N));
    out.diffusion.assign(static_cast<std::size_t>(M), Eigen::MatrixXd(n * d, N));
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double t = base.grid.t(k);
        const Eigen::VectorXd alpha = sys.alpha(t, base.grid.T());
        const Eigen::MatrixXd beta = sys.beta(t, base.grid.T());
        const Eigen::MatrixXd& X = out.x[ks];
        out.drift[ks] = sys.J * X;
        out.drift[ks].colwise() += alpha;
        for (int j = 0; j < d; ++j) {
            out.diffusion[ks].middleRows(n * j, n) = sys.K[static_cast<std::size_t>(j)] * X;
            out.diffusion[ks].middleRows(n * j, n).colwise() += beta.col(j);
        }
        const Eigen::MatrixXd& dw = base.noise->dw[ks];
        parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<Eigen::Index>(ii);
                Eigen::VectorXd next = X.col(i) + dt * out.drift[ks].col(i);
                for (int j = 0; j < d; ++j) next += dw(j, i) * out.diffusion[ks].col(i).segment(n * j, n);
                out.x[ks + 1].col(i) = (decay * next.array()).matrix();
            }
        });
    }
    return out;
}

DualityCheck first_duality(const std::string& name, const FirstAdjointPath& adjoint, const GalerkinSpace& space,
                           const TestTrajectory& traj) {
    const int M = adjoint.steps();
    if (static_cast<int>(traj.x.size()) != M + 1) throw StructuralError("trajectory and adjoint differ in length");
    const int n = space.n_state();
    const int d = space.n_noise();
    const auto& w = space.hs_weights();
    const double terminal = mean_dot(traj.x.back(), adjoint.p.back());
    const double initial = mean_dot(traj.x.front(), adjoint.p.front());
    double lhs_int = 0.0, rhs_int = 0.0;
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        lhs_int += mean_dot(traj.x[ks], adjoint.driver[ks]);
        double r = mean_dot(traj.drift[ks], adjoint.p[ks]);
        for (int j = 0; j < d; ++j)
            r += w[j] * mean_dot(traj.diffusion[ks].middleRows(n * j, n), adjoint.q[ks].middleRows(n * j, n));
        rhs_int += r;
    }
    const double dt = adjoint.dt;
    return make_duality_check(name, terminal + dt * lhs_int, initial + dt * rhs_int,
                              {terminal, initial, dt * lhs_int, dt * rhs_int});
}

TranspositionReport verify_transposition_first(const GalerkinSpace& space, const StatePath& base,
                                               const FirstAdjointPath& adjoint, int test_source_count,
                                               std::uint64_t seed, const VariationPath* variation, double scale,
                                               const Execution& exec) {
    TranspositionReport report;
    for (int idx = 0; idx < test_source_count; ++idx) {
        const TestSystem sys = random_test_system(space.n_state(), space.n_noise(), scale, seed, idx);
        report.checks.push_back(
            first_duality("test_source_" + std::to_string(idx), adjoint, space, simulate_test_system(sys, space, base, exec)));
    }
    if (variation) {
        if (variation->y_drift.empty()) throw StructuralError("variation path has no recorded coefficients");
        TestTrajectory traj{variation->y, variation->y_drift, variation->y_diffusion};
        report.checks.push_back(first_duality("variation_y", adjoint, space, traj));
    }
    return report;
}

SecondTestSource random_second_source(int n, int d, double scale, std::uint64_t seed, int index) {
    RngStream s(seed, StreamPurpose::test_source, static_cast<std::uint64_t>(index), 2);
    SecondTestSource src;
    src.xi = normal_matrix(s, n, 1, 1.0);
    src.u0 = normal_matrix(s, n, 1, scale);
    src.u1 = normal_matrix(s, n, 1, scale);
    src.v0 = normal_matrix(s, n, d, scale);
    src.v1 = normal_matrix(s, n, d, scale);
    return src;
}

SecondTrajectory simulate_second_test(const SecondTestSource& source, const SecondAdjointPath& P,
                                      const GalerkinSpace& space, const StatePath& base, const Execution& exec) {
    if (!base.noise) throw StructuralError("test pair needs the noise record of the base path");
    const int n = space.n_state();
    const int d = space.n_noise();
    const int N = base.particles();
    const int M = base.grid.M();
    if (static_cast<int>(P.J.size()) != M) throw StructuralError("second adjoint does not match the base path");
    const double dt = base.grid.dt();
    const double T = base.grid.T();
    const Eigen::ArrayXd decay = space.semigroup_factors(dt).array();
    SecondTrajectory out;
    out.phi.assign(static_cast<std::size_t>(M) + 1, Eigen::MatrixXd(n, N));
    out.phi.front() = source.xi.replicate(1, N);
    out.u.assign(static_cast<std::size_t>(M), Eigen::MatrixXd(n, N));
    out.v.assign(static_cast<std::size_t>(M), Eigen::MatrixXd(n * d, N));
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double t = base.grid.t(k);
        const Eigen::VectorXd u = source.u0 + profile_cos(t, T) * source.u1;
        const Eigen::MatrixXd v = source.v0 + profile_cos(t, T) * source.v1;
        const Eigen::MatrixXd& dw = base.noise->dw[ks];
        out.u[ks] = u.replicate(1, N);
        out.v[ks] = Eigen::Map<const Eigen::VectorXd>(v.data(), n * d).replicate(1, N);
        parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<int>(ii);
                const Eigen::VectorXd phi = out.phi[ks].col(i);
                Eigen::VectorXd next = phi + dt * (P.matrix(P.J, k, i) * phi + u);
                for (int j = 0; j < d; ++j) next += dw(j, i) * (P.K_at(k, j, i) * phi + v.col(j));
                out.phi[ks + 1].col(i) = (decay * next.array()).matrix();
            }
        });
    }
    return out;
}

DualityCheck second_duality(const std::string& name, const SecondAdjointPath& P, const GalerkinSpace& space,
                            const SecondTrajectory& a, const SecondTrajectory& b) {
    const int M = static_cast<int>(P.J.size());
    if (static_cast<int>(a.phi.size()) != M + 1 || static_cast<int>(b.phi.size()) != M + 1)
        throw StructuralError("test trajectories and second adjoint differ in length");
    const int n = space.n_state();
    const int d = space.n_noise();
    const int N = static_cast<int>(a.phi.front().cols());
    const auto& w = space.hs_weights();
    auto pair_mean = [&](auto&& term) {
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += term(i);
        return s / N;
    };
    const double terminal =
        pair_mean([&](int i) { return a.phi.back().col(i).dot(P.P_at(M, i) * b.phi.back().col(i)); });
    const double initial =
        pair_mean([&](int i) { return a.phi.front().col(i).dot(P.P_at(0, i) * b.phi.front().col(i)); });
    double lhs_int = 0.0, rhs_int = 0.0;
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        lhs_int += pair_mean([&](int i) {
            return a.phi[ks].col(i).dot(P.matrix(P.hxx, k, i) * b.phi[ks].col(i));
        });
        rhs_int += pair_mean([&](int i) {
            const Eigen::MatrixXd Pk = P.P_at(k, i);
            const Eigen::VectorXd p1 = a.phi[ks].col(i), p2 = b.phi[ks].col(i);
            double s = p2.dot(Pk * a.u[ks].col(i)) + b.u[ks].col(i).dot(Pk * p1);
            for (int j = 0; j < d; ++j) {
                const Eigen::MatrixXd Kj = P.K_at(k, j, i);
                const Eigen::MatrixXd Qj = P.Q_at(k, j, i);
                const Eigen::VectorXd v1 = a.v[ks].col(i).segment(n * j, n);
                const Eigen::VectorXd v2 = b.v[ks].col(i).segment(n * j, n);
                s += w[j] * (v2.dot(Pk * Kj * p1) + (Kj * p2 + v2).dot(Pk * v1) + p2.dot(Qj * v1) + v2.dot(Qj * p1));
            }
            return s;
        });
    }
    return make_duality_check(name, terminal + P.dt * lhs_int, initial + P.dt * rhs_int,
                              {terminal, initial, P.dt * lhs_int, P.dt * rhs_int});
}

SecondTrajectory variation_as_second_test(const VariationPath& variation, const SecondAdjointPath& P) {
    if (variation.y_drift.empty()) throw StructuralError("variation path has no recorded coefficients");
    const int M = static_cast<int>(P.J.size());
    if (static_cast<int>(variation.y.size()) != M + 1) throw StructuralError("variation and adjoint differ in length");
    const int n = P.n;
    const int d = P.d;
    SecondTrajectory out;
    out.phi = variation.y;
    out.u = variation.y_drift;
    out.v = variation.y_diffusion;
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        for (Eigen::Index i = 0; i < out.phi[ks].cols(); ++i) {
            const Eigen::VectorXd y = variation.y[ks].col(i);
            out.u[ks].col(i) -= P.matrix(P.J, k, static_cast<int>(i)) * y;
            for (int j = 0; j < d; ++j)
                out.v[ks].col(i).segment(n * j, n) -= P.K_at(k, j, static_cast<int>(i)) * y;
        }
    }
    return out;
}

TranspositionReport verify_transposition_second(const GalerkinSpace& space, const StatePath& base,
                                                const SecondAdjointPath& P, int test_pairs, std::uint64_t seed,
                                                const SecondTrajectory* variation_instance, double scale,
                                                const Execution& exec) {
    TranspositionReport report;
    const int n = space.n_state();
    const int d = space.n_noise();
    for (int idx = 0; idx < test_pairs; ++idx) {
        const auto a = simulate_second_test(random_second_source(n, d, scale, seed, 2 * idx), P, space, base, exec);
        const auto b = simulate_second_test(random_second_source(n, d, scale, seed, 2 * idx + 1), P, space, base, exec);
        report.checks.push_back(second_duality("pair_" + std::to_string(idx), P, space, a, b));
        report.checks.push_back(second_duality("symmetric_" + std::to_string(idx), P, space, a, a));
    }
    if (variation_instance)
        report.checks.push_back(second_duality("variation_y", P, space, *variation_instance, *variation_instance));
    return report;
}

namespace {

template <typename Check>
DtSweepReport dt_sweep(const CoefficientModel& model, const GalerkinSpace& space, double T, const Control& u,
                       const DtSweepConfig& config, Check&& check) {
    if (config.steps.size() < 2) throw DomainError("dt sweep needs at least two grids");
    if (config.replications < 1) throw DomainError("dt sweep needs at least one replication");
    int finest = 0;
    for (int M : config.steps) finest = std::max(finest, M);
    const TimeGrid fine(T, finest);
    DtSweepReport report;
    for (int M : config.steps) {
        if (M < 1 || finest % M != 0) throw DomainError("dt sweep grids must divide the finest grid");
        const int N = std::max(
            2, static_cast<int>(std::lround(config.N * std::pow(static_cast<double>(M) / finest, config.particle_exponent))));
        report.steps.push_back(M);
        report.particles.push_back(N);
        report.dt.push_back(T / M);
    }
    std::vector<double> sum_sq(config.steps.size(), 0.0), sum_scale(config.steps.size(), 0.0);
    for (int r = 0; r < config.replications; ++r) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
        // The first N columns of the finest record are shared by every grid.
        const auto noise = generate_noise(space, fine, config.N, seed, config.adjoint.exec);
        for (std::size_t s = 0; s < config.steps.size(); ++s) {
            const int M = config.steps[s];
            const int N = report.particles[s];
            const TimeGrid grid(T, M);
            const auto coarse = coarsen_noise(*noise, finest / M);
            auto subset = std::make_shared<NoiseRecord>();
            for (const auto& dw : coarse->dw) subset->dw.push_back(dw.leftCols(N));
            SimulationOptions sim;
            sim.seed = seed;
            sim.exec = config.adjoint.exec;
            sim.noise = subset;
            const ControlPath ubar = ControlPath::constant(M, N, u);
            const StatePath base = simulate(model, space, grid, ubar, N, config.sampler, sim);
            const DualityCheck c = check(base, ubar);
            sum_sq[s] += (c.lhs - c.rhs) * (c.lhs - c.rhs);
            sum_scale[s] += c.scale;
        }
    }
    for (std::size_t s = 0; s < config.steps.size(); ++s) {
        const double scale = sum_scale[s] / config.replications;
        const double rms = std::sqrt(sum_sq[s] / config.replications);
        report.relative.push_back(scale > 0.0 ? rms / scale : 0.0);
    }
    bool positive = true;
    for (double r : report.relative) positive = positive && r > 0.0;
    report.order = positive ? loglog_fit(report.dt, report.relative).slope : 0.0;
    return report;
}

}  // namespace

DtSweepReport transposition_first_dt_sweep(const CoefficientModel& model, const GalerkinSpace& space, double T,
                                           const Control& u, const DtSweepConfig& config) {
    return dt_sweep(model, space, T, u, config, [&](const StatePath& base, const ControlPath& ubar) {
        const auto adj = solve_first_adjoint_auto(model, space, base, ubar, config.adjoint);
        const TestSystem sys =
            random_test_system(space.n_state(), space.n_noise(), config.scale, config.seed, config.source_index);
        return first_duality("dt_sweep", adj, space, simulate_test_system(sys, space, base, config.adjoint.exec));
    });
}

DtSweepReport transposition_second_dt_sweep(const CoefficientModel& model, const GalerkinSpace& space, double T,
                                            const Control& u, const DtSweepConfig& config) {
    return dt_sweep(model, space, T, u, config, [&](const StatePath& base, const ControlPath& ubar) {
        const auto adj = solve_first_adjoint_auto(model, space, base, ubar, config.adjoint);
        const auto P = solve_second_adjoint_auto(model, space, base, ubar, adj, config.adjoint);
        const int n = space.n_state(), d = space.n_noise();
        const auto a = simulate_second_test(random_second_source(n, d, config.scale, config.seed, 2 * config.source_index),
                                            P, space, base, config.adjoint.exec);
        const auto b = simulate_second_test(
            random_second_source(n, d, config.scale, config.seed, 2 * config.source_index + 1), P, space, base,
            config.adjoint.exec);
        return second_duality("dt_sweep", P, space, a, b);
    });
}

}  // namespace mvlab
