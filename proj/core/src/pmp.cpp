#include "mvlab/pmp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include "mvlab/errors.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

namespace {

void require_admissible(const CoefficientModel& model, const Control& u) {
    if (u.size() != model.control_dim()) throw StructuralError("control has the wrong dimension");
    if (!u.allFinite() || !model.control_set().contains(u, 1e-9)) throw DomainError("control is not in U");
}

/// Hamiltonian from precomputed values; q is the flattened (n d) vector.
double hamiltonian_from(const Partials& pa, const Partials& pb, const Partials& pf, const Eigen::Ref<const Eigen::VectorXd>& p,
                        const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::VectorXd& w, int n) {
    double s = p.dot(pa.value) - pf.value[0];
    for (Eigen::Index j = 0; j < w.size(); ++j) s += w[j] * q.segment(n * j, n).dot(pb.value.segment(n * j, n));
    return s;
}

double weighted_quadratic(const Eigen::MatrixXd& P, const Eigen::VectorXd& db, const Eigen::VectorXd& w, int n) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        const auto v = db.segment(n * j, n);
        s += w[j] * v.dot(P * v);
    }
    return s;
}

struct Evaluated {
    Partials a, b, f;
};

void evaluate(const CoefficientModel& model, double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m,
              const Control& u, Evaluated& e) {
    model.partials(Coef::a, t, x, m, u, 0, e.a);
    model.partials(Coef::b, t, x, m, u, 0, e.b);
    model.partials(Coef::f, t, x, m, u, 0, e.f);
}

}  // namespace

double hamiltonian(const CoefficientModel& model, const GalerkinSpace& space, double t, const StateVector& x,
                   double m, const Control& u, const StateVector& p, const HSMatrix& q) {
    require_admissible(model, u);
    space.require_state(x, "x");
    space.require_state(p, "p");
    space.require_hs(q, "q");
    return p.dot(model.drift(t, x, m, u)) + space.hs_inner(q, model.diffusion(t, x, m, u)) -
           model.running_cost(t, x, m, u);
}

double hamiltonian(const CoefficientModel& model, const GalerkinSpace& space, double t, const StateVector& x,
                   const ParticleEnsemble& mu, const Control& u, const StateVector& p, const HSMatrix& q) {
    if (mu.dim() != model.n_state()) throw StructuralError("ensemble dimension does not match the model");
    return hamiltonian(model, space, t, x, empirical_mean_statistic(mu, model.psi()), u, p, q);
}

std::vector<Control> control_grid(const ControlSet& set, int points) {
    if (points < 1) throw DomainError("control grid needs at least one point");
    if (set.kind() == ControlSet::Kind::finite_grid) return set.points();
    const int per_axis =
        std::max(1, static_cast<int>(std::lround(std::pow(static_cast<double>(points), 1.0 / set.dim()))));
    return set.enumerate(per_axis);
}

double SMPGapReport::fraction_below(double tol) const {
    std::size_t below = 0, total = 0;
    for (const auto& g : gaps) {
        below += static_cast<std::size_t>((g.array() < -tol).count());
        total += static_cast<std::size_t>(g.size());
    }
    return total ? static_cast<double>(below) / static_cast<double>(total) : 0.0;
}

void SMPGapReport::write_csv(std::ostream& out) const {
    const int c = controls.empty() ? 0 : static_cast<int>(controls.front().size());
    out << "step,t,control";
    for (int l = 0; l < c; ++l) out << ",u" << l;
    out << ",mean_gap,standard_error\n";
    out.precision(17);
    for (Eigen::Index k = 0; k < mean_gap.rows(); ++k)
        for (Eigen::Index u = 0; u < mean_gap.cols(); ++u) {
            out << k << ',' << times[static_cast<std::size_t>(k)] << ',' << u;
            for (int l = 0; l < c; ++l) out << ',' << controls[static_cast<std::size_t>(u)][l];
            out << ',' << mean_gap(k, u) << ',' << standard_error(k, u) << '\n';
        }
}

SMPGapReport smp_gap(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                     const ControlPath& ubar, const FirstAdjointPath& first, const SecondAdjointPath& second,
                     const std::vector<Control>& u_grid, const Execution& exec) {
    const int M = base.grid.M();
    const int N = base.particles();
    const int n = space.n_state();
    const auto U = static_cast<int>(u_grid.size());
    if (U < 1) throw DomainError("smp_gap needs at least one candidate control");
    if (first.steps() != M || static_cast<int>(second.P_pred.size()) != M)
        throw StructuralError("adjoints do not match the base path");
    for (const auto& u : u_grid) require_admissible(model, u);
    const Eigen::VectorXd& w = space.hs_weights();

    SMPGapReport report;
    report.controls = u_grid;
    report.mean_gap.resize(M, U);
    report.standard_error.resize(M, U);
    report.gaps.assign(static_cast<std::size_t>(M), Eigen::MatrixXd(U, N));
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double t = base.grid.t(k);
        report.times.push_back(t);
        const double m = base.m[ks];
        Eigen::MatrixXd& g = report.gaps[ks];
        parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
            Evaluated eb, eu;
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<Eigen::Index>(ii);
                const auto x = base.x[ks].col(i);
                const auto p = first.p_pred[ks].col(i);
                const auto q = first.q[ks].col(i);
                const Eigen::MatrixXd Pk = second.P_pred_at(k, static_cast<int>(i));
                evaluate(model, t, x, m, ubar.at(k, static_cast<int>(i)), eb);
                const double hbar = hamiltonian_from(eb.a, eb.b, eb.f, p, q, w, n);
                for (int u = 0; u < U; ++u) {
                    const Control& cu = u_grid[static_cast<std::size_t>(u)];
                    if (cu == ubar.at(k, static_cast<int>(i))) {
                        g(u, i) = 0.0;
                        continue;
                    }
                    evaluate(model, t, x, m, cu, eu);
                    const Eigen::VectorXd db = eb.b.value - eu.b.value;
                    g(u, i) = hbar - hamiltonian_from(eu.a, eu.b, eu.f, p, q, w, n) -
                              0.5 * weighted_quadratic(Pk, db, w, n);
                }
            }
        });
        for (int u = 0; u < U; ++u) {
            std::vector<double> row(static_cast<std::size_t>(N));
            for (int i = 0; i < N; ++i) row[static_cast<std::size_t>(i)] = g(u, i);
            report.mean_gap(k, u) = mean(row);
            report.standard_error(k, u) = standard_error(row);
        }
        Eigen::Index best = 0;
        report.mean_gap.row(k).minCoeff(&best);
        report.argmin_per_step.push_back(static_cast<int>(best));
    }
    Eigen::Index ks = 0, us = 0;
    report.min_mean_gap = report.mean_gap.minCoeff(&ks, &us);
    report.argmin_step = static_cast<int>(ks);
    report.argmin_control = static_cast<int>(us);
    report.min_pointwise_gap = report.gaps.front().minCoeff();
    for (const auto& g : report.gaps) report.min_pointwise_gap = std::min(report.min_pointwise_gap, g.minCoeff());
    return report;
}

ControlPath refine_control(const ControlPath& control, int factor) {
    if (factor < 1) throw DomainError("refinement factor must be >= 1");
    ControlPath out(control.steps() * factor, control.particles(), control.dim());
    for (int k = 0; k < control.steps(); ++k)
        for (int r = 0; r < factor; ++r)
            for (int i = 0; i < control.particles(); ++i) out.set(k * factor + r, i, control.at(k, i));
    return out;
}

SMPCheckReport smp_check(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                         const ControlPath& ubar, const std::vector<Control>& u_grid, const SMPCheckConfig& config) {
    const TimeGrid fine(grid.T(), 2 * grid.M());
    const auto fine_noise = generate_noise(space, fine, config.N, config.seed, config.adjoint.exec);
    auto run = [&](const TimeGrid& g, const ControlPath& u, std::shared_ptr<const NoiseRecord> noise) {
        SimulationOptions sim;
        sim.seed = config.seed;
        sim.exec = config.adjoint.exec;
        sim.noise = std::move(noise);
        const StatePath base = simulate(model, space, g, u, config.N, config.sampler, sim);
        const auto adj1 = solve_first_adjoint_auto(model, space, base, u, config.adjoint);
        const auto adj2 = solve_second_adjoint_auto(model, space, base, u, adj1, config.adjoint);
        return smp_gap(model, space, base, u, adj1, adj2, u_grid, config.adjoint.exec);
    };
    SMPCheckReport report;
    report.gap = run(grid, ubar, coarsen_noise(*fine_noise, 2));
    const SMPGapReport refined = run(fine, refine_control(ubar, 2), fine_noise);
    for (int k = 0; k < grid.M(); ++k)
        for (Eigen::Index u = 0; u < report.gap.mean_gap.cols(); ++u)
            report.dt_bias =
                std::max(report.dt_bias, std::abs(report.gap.mean_gap(k, u) - refined.mean_gap(2 * k, u)));
    report.standard_error = report.gap.standard_error.maxCoeff();
    report.tol = config.se_multiplier * report.standard_error + report.dt_bias;
    report.min_mean_gap = report.gap.min_mean_gap;
    report.fraction_below_tol = report.gap.fraction_below(report.tol);
    report.passed = report.min_mean_gap >= -report.tol;
    return report;
}

namespace {

/// sum over the spike steps of mean_i [H(u_eps) - H(ubar) + 1/2 sum_j w_j <P db_j, db_j>] dt.
double window_term(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                   const ControlPath& ubar, const ControlPath& spike, const FirstAdjointPath& first,
                   const SecondAdjointPath& second, const Execution& exec) {
    const int N = base.particles();
    const int n = space.n_state();
    const Eigen::VectorXd& w = space.hs_weights();
    double total = 0.0;
    for (int k : spike.spike()->steps) {
        const auto ks = static_cast<std::size_t>(k);
        const double t = base.grid.t(k);
        const double m = base.m[ks];
        std::vector<double> terms(static_cast<std::size_t>(N));
        parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
            Evaluated eb, ee;
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<Eigen::Index>(ii);
                const auto x = base.x[ks].col(i);
                const auto p = first.p_pred[ks].col(i);
                const auto q = first.q[ks].col(i);
                evaluate(model, t, x, m, ubar.at(k, static_cast<int>(i)), eb);
                evaluate(model, t, x, m, spike.at(k, static_cast<int>(i)), ee);
                const Eigen::VectorXd db = ee.b.value - eb.b.value;
                terms[ii] = hamiltonian_from(ee.a, ee.b, ee.f, p, q, w, n) - hamiltonian_from(eb.a, eb.b, eb.f, p, q, w, n) +
                            0.5 * weighted_quadratic(second.P_pred_at(k, static_cast<int>(i)), db, w, n);
            }
        });
        total += mean(terms) * base.grid.dt();
    }
    return total;
}

}  // namespace

namespace {

/// Base path and adjoints shared by every point of an expansion sweep.
struct ExpansionBase {
    std::shared_ptr<const NoiseRecord> noise;
    StatePath path;
    FirstAdjointPath first;
    SecondAdjointPath second;
};

ExpansionBase expansion_base(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                             const ControlPath& ubar, std::shared_ptr<const NoiseRecord> noise,
                             const ExpansionConfig& config) {
    ExpansionBase out;
    out.noise = std::move(noise);
    SimulationOptions sim;
    sim.seed = config.seed;
    sim.exec = config.adjoint.exec;
    sim.noise = out.noise;
    out.path = simulate(model, space, grid, ubar, config.N, config.sampler, sim);
    out.first = solve_first_adjoint_auto(model, space, out.path, ubar, config.adjoint);
    out.second = solve_second_adjoint_auto(model, space, out.path, ubar, out.first, config.adjoint);
    return out;
}

void expansion_terms(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                     const ControlPath& ubar, const ControlPath& spike, const ExpansionBase& base,
                     const ExpansionConfig& config, double& dj, double& pred) {
    SimulationOptions sim;
    sim.seed = config.seed;
    sim.exec = config.adjoint.exec;
    sim.noise = base.noise;
    const StatePath perturbed = simulate(model, space, grid, spike, config.N, config.sampler, sim);
    dj = cost(model, perturbed, spike, config.adjoint.exec) - cost(model, base.path, ubar, config.adjoint.exec);
    pred = window_term(model, space, base.path, ubar, spike, base.first, base.second, config.adjoint.exec);
}

ExpansionPoint expansion_point_with(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                                    const ControlPath& ubar, const ControlPath& spike, const ExpansionBase& base,
                                    const ExpansionConfig& config) {
    if (!spike.spike()) throw DomainError("expansion point needs a spike control");
    ExpansionPoint pt;
    pt.eps = spike.spike()->eps_grid;
    expansion_terms(model, space, grid, ubar, spike, base, config, pt.delta_cost, pt.predicted);
    if (config.antithetic && !spike.spike()->steps.empty()) {
        const ExpansionBase flipped =
            expansion_base(model, space, grid, ubar, flip_noise(*base.noise, spike.spike()->steps), config);
        double dj = 0.0, pred = 0.0;
        expansion_terms(model, space, grid, ubar, spike, flipped, config, dj, pred);
        pt.delta_cost = 0.5 * (pt.delta_cost + dj);
        pt.predicted = 0.5 * (pt.predicted + pred);
    }
    pt.residual = pt.delta_cost + pt.predicted;
    pt.ratio = pt.eps > 0.0 ? pt.residual / pt.eps : 0.0;
    return pt;
}

}  // namespace

ExpansionPoint expansion_point(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                               const ControlPath& ubar, const ControlPath& spike, const ExpansionConfig& config) {
    const auto base =
        expansion_base(model, space, grid, ubar, generate_noise(space, grid, config.N, config.seed, config.adjoint.exec),
                       config);
    return expansion_point_with(model, space, grid, ubar, spike, base, config);
}

ExpansionReport cost_expansion_check(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                                     const ControlPath& ubar, const Control& pert, const std::vector<double>& eps_list,
                                     const ExpansionConfig& config) {
    if (eps_list.size() < 4) throw DomainError("expansion sweep needs at least 4 eps values");
    const double q = eps_list[1] / eps_list[0];
    for (std::size_t e = 1; e < eps_list.size(); ++e)
        if (!(eps_list[e] > 0.0) || std::abs(eps_list[e] / eps_list[e - 1] - q) > 1e-9 * std::abs(q))
            throw DomainError("expansion sweep must be geometric");
    const auto base =
        expansion_base(model, space, grid, ubar, generate_noise(space, grid, config.N, config.seed, config.adjoint.exec),
                       config);
    ExpansionReport report;
    for (double eps : eps_list) {
        const ControlPath spike = make_spike_control(ubar, pert, eps, config.offset, grid, model.control_set());
        report.points.push_back(expansion_point_with(model, space, grid, ubar, spike, base, config));
    }
    std::vector<std::size_t> order(report.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return report.points[a].eps > report.points[b].eps; });
    report.decreasing = true;
    for (std::size_t s = 1; s < order.size(); ++s)
        if (!(std::abs(report.points[order[s]].ratio) < std::abs(report.points[order[s - 1]].ratio)))
            report.decreasing = false;
    return report;
}

namespace {

double golden_max(const std::function<double(double)>& f, double lo, double hi, int iterations) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < iterations; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    double best = 0.5 * (a + b);
    double fbest = f(best);
    for (double edge : {lo, hi}) {
        const double fe = f(edge);
        if (fe > fbest) {
            fbest = fe;
            best = edge;
        }
    }
    return best;
}

/// Maximiser of `objective` over U, never worse than `start`.
Control argmax_over(const ControlSet& set, const std::function<double(const Control&)>& objective, const Control& start,
                    int golden_iterations) {
    if (set.kind() == ControlSet::Kind::finite_grid) {
        Control best = start;
        double fbest = objective(start);
        for (const auto& u : set.points()) {
            const double fu = objective(u);
            if (fu > fbest) {
                fbest = fu;
                best = u;
            }
        }
        return best;
    }
    Control u = start;
    const int sweeps = set.dim() == 1 ? 1 : 3;
    for (int s = 0; s < sweeps; ++s)
        for (int l = 0; l < set.dim(); ++l) {
            auto along = [&](double v) {
                Control trial = u;
                trial[l] = v;
                return objective(trial);
            };
            u[l] = golden_max(along, set.lower()[l], set.upper()[l], golden_iterations);
        }
    return objective(u) >= objective(start) ? u : start;
}

}  // namespace

ImproveResult improve_control(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                              const ControlPath& init, const ImproveOptions& options) {
    init.validate(model.control_set());
    const int M = grid.M();
    const int N = options.N;
    if (init.steps() != M || init.particles() != N) throw StructuralError("initial control does not match grid and N");
    const int n = space.n_state();
    const Eigen::VectorXd& w = space.hs_weights();
    const ControlSet& set = model.control_set();
    const Execution& exec = options.adjoint.exec;

    SimulationOptions sim;
    sim.seed = options.seed;
    sim.exec = exec;
    sim.noise = generate_noise(space, grid, N, options.seed, exec);

    ImproveResult result;
    result.control = init;
    StatePath path = simulate(model, space, grid, init, N, options.sampler, sim);
    result.cost = result.initial_cost = cost(model, path, init, exec);
    result.costs.push_back(result.cost);
    if (set.is_singleton()) {
        result.converged = true;
        return result;
    }
    const bool common = init.is_common();
    double omega = options.relaxation;

    for (int it = 0; it < options.iterations; ++it) {
        result.iterations = it + 1;
        const FirstAdjointPath adj = solve_first_adjoint_auto(model, space, path, result.control, options.adjoint);
        ControlPath proposal = result.control;
        struct Unit {
            int k, i;
            double gain;
            Control target;
        };
        std::vector<Unit> units;
        for (int k = 0; k < M; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const double t = grid.t(k);
            const double m = path.m[ks];
            auto particle_h = [&](int i, const Control& u, Evaluated& e) {
                evaluate(model, t, path.x[ks].col(i), m, u, e);
                return hamiltonian_from(e.a, e.b, e.f, adj.p_pred[ks].col(i), adj.q[ks].col(i), w, n);
            };
            if (common) {
                auto hbar = [&](const Control& u) {
                    std::vector<double> h(static_cast<std::size_t>(N));
                    parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
                        Evaluated e;
                        for (std::size_t i = begin; i < end; ++i) h[i] = particle_h(static_cast<int>(i), u, e);
                    });
                    return mean(h);
                };
                const Control current = result.control.at(k, 0);
                const Control target = argmax_over(set, hbar, current, options.golden_iterations);
                units.push_back({k, -1, hbar(target) - hbar(current), target});
            } else {
                for (int i = 0; i < N; ++i) {
                    Evaluated e;
                    auto hi = [&](const Control& u) { return particle_h(i, u, e); };
                    const Control current = result.control.at(k, i);
                    const Control target = argmax_over(set, hi, current, options.golden_iterations);
                    units.push_back({k, i, hi(target) - hi(current), target});
                }
            }
        }

        double moved = 0.0;
        auto apply = [&](const Unit& u) {
            const Control current = u.i < 0 ? Control(result.control.at(u.k, 0)) : Control(result.control.at(u.k, u.i));
            Control next = u.target;
            if (set.kind() == ControlSet::Kind::box) next = set.project(current + omega * (u.target - current));
            moved = std::max(moved, (next - current).cwiseAbs().maxCoeff());
            if (u.i < 0)
                proposal.set_step(u.k, next);
            else
                proposal.set(u.k, u.i, next);
        };
        if (set.kind() == ControlSet::Kind::box) {
            for (const auto& u : units) apply(u);
        } else {
            std::vector<const Unit*> positive;
            for (const auto& u : units)
                if (u.gain > 1e-14) positive.push_back(&u);
            std::stable_sort(positive.begin(), positive.end(),
                             [](const Unit* a, const Unit* b) { return a->gain > b->gain; });
            const auto take = static_cast<std::size_t>(std::ceil(omega * static_cast<double>(positive.size())));
            for (std::size_t s = 0; s < std::min(take, positive.size()); ++s) apply(*positive[s]);
        }
        if (moved <= options.tolerance) {
            result.converged = true;
            break;
        }
        StatePath next_path = simulate(model, space, grid, proposal, N, options.sampler, sim);
        const double next_cost = cost(model, next_path, proposal, exec);
        result.costs.push_back(next_cost);
        if (next_cost < result.cost) {
            result.cost = next_cost;
            result.control = std::move(proposal);
            path = std::move(next_path);
        } else {
            omega *= 0.5;
            if (omega < 1.0 / 1024.0) break;
        }
    }
    result.improved = result.cost < result.initial_cost;
    return result;
}

}  // namespace mvlab
