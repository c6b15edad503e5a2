#include "mvlab/variation.hpp"

#include <cmath>

#include "mvlab/errors.hpp"

namespace mvlab {

namespace {

std::vector<char> spike_steps(const ControlPath& spike, const ControlPath& ubar) {
    if (spike.spike()) return spike.spike_mask();
    std::vector<char> mask(static_cast<std::size_t>(spike.steps()), 0);
    for (int k = 0; k < spike.steps(); ++k) mask[static_cast<std::size_t>(k)] = spike.step(k) != ubar.step(k);
    return mask;
}

/// Entries y' D_o y for each output o.
void add_quadratic(const std::vector<Eigen::MatrixXd>& dxx, const Eigen::VectorXd& y, double weight,
                   Eigen::VectorXd& out) {
    for (std::size_t o = 0; o < dxx.size(); ++o) out[static_cast<Eigen::Index>(o)] += weight * y.dot(dxx[o] * y);
}

double weighted_mean_psi(const Eigen::MatrixXd& v, const Eigen::VectorXd& psi) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.cols(); ++i) s += psi.dot(v.col(i));
    return s / static_cast<double>(v.cols());
}

void run_variations(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                    const ControlPath& ubar, const std::vector<const ControlPath*>& spikes,
                    const VariationOptions& options, const std::vector<const VariationPath*>& given_first,
                    std::vector<VariationPath>& out) {
    if (!base.noise) throw StructuralError("base path carries no noise record");
    const int M = base.grid.M();
    const int N = base.particles();
    const int n = space.n_state();
    const int d = space.n_noise();
    if (ubar.steps() != M || ubar.particles() != N) throw StructuralError("ubar does not match the base path");
    for (const auto* s : spikes)
        if (s->steps() != M || s->particles() != N) throw StructuralError("spike control does not match the base path");
    const std::size_t S = spikes.size();
    const bool reuse_y = !given_first.empty();

    std::vector<std::vector<char>> masks;
    for (const auto* s : spikes) masks.push_back(spike_steps(*s, ubar));

    out.assign(S, VariationPath{});
    for (std::size_t s = 0; s < S; ++s) {
        if (reuse_y) {
            if (static_cast<int>(given_first[s]->y.size()) != M + 1) throw StructuralError("first variation has wrong length");
            out[s].y = given_first[s]->y;
        } else {
            out[s].y.assign(static_cast<std::size_t>(M) + 1, Eigen::MatrixXd::Zero(n, N));
        }
        if (options.second_order) out[s].z.assign(static_cast<std::size_t>(M) + 1, Eigen::MatrixXd::Zero(n, N));
        if (options.record_coefficients) {
            out[s].y_drift.assign(static_cast<std::size_t>(M), Eigen::MatrixXd::Zero(n, N));
            out[s].y_diffusion.assign(static_cast<std::size_t>(M), Eigen::MatrixXd::Zero(n * d, N));
        }
    }

    const Eigen::ArrayXd decay = space.semigroup_factors(base.grid.dt()).array();
    const double dt = base.grid.dt();
    const double c = options.source_scale;
    const int order = options.second_order ? 2 : 1;
    const auto& psi = model.psi();

    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        std::vector<double> ybar(S), zbar(S, 0.0);
        for (std::size_t s = 0; s < S; ++s) {
            ybar[s] = weighted_mean_psi(out[s].y[ks], psi);
            if (options.second_order) zbar[s] = weighted_mean_psi(out[s].z[ks], psi);
        }
        const Eigen::MatrixXd& dw = base.noise->dw[ks];
        const double t = base.grid.t(k);
        const double m = base.m[ks];
        parallel_for(static_cast<std::size_t>(N), options.exec, [&](std::size_t begin, std::size_t end) {
            Partials pa, pb, pae, pbe;
            Eigen::VectorXd drift(n), diff(n * d), zdrift(n), zdiff(n * d), da(n), db(n * d);
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<Eigen::Index>(ii);
                const auto x = base.x[ks].col(i);
                const Control u = ubar.at(k, static_cast<int>(i));
                model.partials(Coef::a, t, x, m, u, order, pa);
                model.partials(Coef::b, t, x, m, u, order, pb);
                for (std::size_t s = 0; s < S; ++s) {
                    const bool chi = masks[s][ks] != 0;
                    if (chi) {
                        const Control ue = spikes[s]->at(k, static_cast<int>(i));
                        model.partials(Coef::a, t, x, m, ue, 1, pae);
                        model.partials(Coef::b, t, x, m, ue, 1, pbe);
                    }
                    const Eigen::VectorXd y = out[s].y[ks].col(i);
                    drift.noalias() = pa.dx * y + pa.dm * ybar[s];
                    diff.noalias() = pb.dx * y + pb.dm * ybar[s];
                    if (chi) {
                        drift += c * (pae.value - pa.value);
                        diff += c * (pbe.value - pb.value);
                    }
                    if (options.record_coefficients) {
                        out[s].y_drift[ks].col(i) = drift;
                        out[s].y_diffusion[ks].col(i) = diff;
                    }
                    if (!reuse_y) {
                        Eigen::VectorXd inc = y + drift * dt;
                        inc.noalias() += as_hs(diff, n, d) * dw.col(i);
                        out[s].y[ks + 1].col(i) = (decay * inc.array()).matrix();
                    }
                    if (!options.second_order) continue;
                    // The y-mu derivative source vanishes for scalar-interaction coefficients.
                    const Eigen::VectorXd z = out[s].z[ks].col(i);
                    zdrift.noalias() = pa.dx * z + pa.dm * zbar[s];
                    zdiff.noalias() = pb.dx * z + pb.dm * zbar[s];
                    add_quadratic(pa.dxx, y, 0.5, zdrift);
                    add_quadratic(pb.dxx, y, 0.5, zdiff);
                    if (chi) {
                        zdrift.noalias() += c * ((pae.dx - pa.dx) * y + (pae.dm - pa.dm) * ybar[s]);
                        zdiff.noalias() += c * ((pbe.dx - pb.dx) * y + (pbe.dm - pb.dm) * ybar[s]);
                    }
                    Eigen::VectorXd zinc = z + zdrift * dt;
                    zinc.noalias() += as_hs(zdiff, n, d) * dw.col(i);
                    out[s].z[ks + 1].col(i) = (decay * zinc.array()).matrix();
                }
            }
        });
    }
}

}  // namespace

std::vector<VariationPath> solve_variations(const CoefficientModel& model, const GalerkinSpace& space,
                                            const StatePath& base, const ControlPath& ubar,
                                            const std::vector<const ControlPath*>& spikes,
                                            const VariationOptions& options) {
    std::vector<VariationPath> out;
    run_variations(model, space, base, ubar, spikes, options, {}, out);
    return out;
}

VariationPath solve_first_variation(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                    const ControlPath& ubar, const ControlPath& spike, const Execution& exec) {
    VariationOptions opt;
    opt.second_order = false;
    opt.exec = exec;
    return solve_variations(model, space, base, ubar, {&spike}, opt).front();
}

VariationPath solve_second_variation(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                     const VariationPath& first, const ControlPath& ubar, const ControlPath& spike,
                                     const Execution& exec) {
    VariationOptions opt;
    opt.second_order = true;
    opt.exec = exec;
    std::vector<VariationPath> out;
    run_variations(model, space, base, ubar, {&spike}, opt, {&first}, out);
    return out.front();
}

const RateSeries& RateReport::get(const std::string& name) const {
    for (const auto& s : series)
        if (s.name == name) return s;
    throw DomainError("rate report has no series " + name);
}

RateReport remainder_rates(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                           const ControlPath& ubar, const std::vector<double>& eps_list, const RateConfig& config) {
    if (eps_list.size() < 4) throw DomainError("rate sweep needs at least 4 eps values");
    double lo = eps_list.front(), hi = eps_list.front();
    for (double e : eps_list) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    if (hi / lo < 4.0 - 1e-12) throw DomainError("rate sweep must span at least two octaves");
    if (config.seeds.empty()) throw DomainError("rate sweep needs at least one seed");

    const int N = config.N;
    const std::size_t E = eps_list.size();
    static const char* names[] = {"xi", "y", "z", "eta", "zeta"};
    RateReport report;
    for (const char* nm : names) {
        RateSeries s;
        s.name = nm;
        report.series.push_back(std::move(s));
    }

    std::vector<ControlPath> spikes;
    for (double eps : eps_list) {
        spikes.push_back(make_spike_control(ubar, config.pert, eps, config.offset, grid, model.control_set()));
        report.eps.push_back(spikes.back().spike()->eps_grid);
    }
    std::vector<const ControlPath*> spike_ptrs;
    for (const auto& s : spikes) spike_ptrs.push_back(&s);

    for (std::uint64_t seed : config.seeds) {
        SimulationOptions sim;
        sim.seed = seed;
        sim.exec = config.exec;
        sim.noise = generate_noise(space, grid, N, seed, config.exec);
        const StatePath base = simulate(model, space, grid, ubar, N, config.sampler, sim);
        VariationOptions vopt;
        vopt.exec = config.exec;
        const auto vars = solve_variations(model, space, base, ubar, spike_ptrs, vopt);
        std::vector<std::vector<double>> row(5, std::vector<double>(E, 0.0));
        for (std::size_t e = 0; e < E; ++e) {
            const StatePath pert = simulate(model, space, grid, spikes[e], N, config.sampler, sim);
            std::vector<double> sup(5 * static_cast<std::size_t>(N), 0.0);
            for (int k = 0; k <= grid.M(); ++k) {
                const auto ks = static_cast<std::size_t>(k);
                for (int i = 0; i < N; ++i) {
                    const Eigen::VectorXd xi = pert.x[ks].col(i) - base.x[ks].col(i);
                    const Eigen::VectorXd y = vars[e].y[ks].col(i);
                    const Eigen::VectorXd z = vars[e].z[ks].col(i);
                    const double vals[5] = {xi.squaredNorm(), y.squaredNorm(), z.squaredNorm(),
                                            (xi - y).squaredNorm(), (xi - y - z).squaredNorm()};
                    for (int q = 0; q < 5; ++q) {
                        auto& slot = sup[static_cast<std::size_t>(q) * N + i];
                        slot = std::max(slot, vals[q]);
                    }
                }
            }
            for (int q = 0; q < 5; ++q) {
                double s = 0.0;
                for (int i = 0; i < N; ++i) s += sup[static_cast<std::size_t>(q) * N + i];
                row[static_cast<std::size_t>(q)][e] = s / N;
            }
        }
        for (int q = 0; q < 5; ++q) report.series[static_cast<std::size_t>(q)].per_seed.push_back(row[static_cast<std::size_t>(q)]);
    }

    for (auto& s : report.series) {
        s.values.assign(E, 0.0);
        for (const auto& r : s.per_seed)
            for (std::size_t e = 0; e < E; ++e) s.values[e] += r[e] / static_cast<double>(s.per_seed.size());
        s.slope = loglog_fit(report.eps, s.values).slope;
        s.ci = bootstrap_slope_interval(report.eps, s.per_seed, config.bootstrap_replicates, config.ci_level,
                                        config.bootstrap_seed);
    }
    return report;
}

TestProcess constant_test_process(std::string name, Eigen::MatrixXd phi) {
    TestProcess p;
    p.name = std::move(name);
    p.rows = static_cast<int>(phi.rows());
    p.eval = [phi](int, int, int, const StateVector&, double, Eigen::MatrixXd& out) { out = phi; };
    return p;
}

TestProcess path_dependent_test_process(std::string name, const TimeGrid& grid) {
    TestProcess p;
    p.name = std::move(name);
    p.rows = -1;  // n_state, fixed on first use
    p.eval = [grid](int k, int, int, const StateVector& xbar, double, Eigen::MatrixXd& out) {
        out = (xbar.array().tanh() * (1.0 + grid.t(k))).matrix().asDiagonal();
    };
    return p;
}

TestProcess independent_space_test_process(std::string name, int outer, int n_state, std::uint64_t seed) {
    if (outer < 1) throw DomainError("outer sample count must be >= 1");
    Eigen::MatrixXd theta(n_state, outer);
    for (int j = 0; j < outer; ++j) {
        RngStream stream(seed, StreamPurpose::test_source, 0x0C31, static_cast<std::uint64_t>(j));
        for (int k = 0; k < n_state; ++k) theta(k, j) = 3.0 * stream.normal();
    }
    TestProcess p;
    p.name = std::move(name);
    p.rows = n_state;
    p.outer = outer;
    p.eval = [theta](int, int j, int, const StateVector& xbar, double, Eigen::MatrixXd& out) {
        out = (theta.col(j).array() + xbar.array()).cos().matrix().asDiagonal();
    };
    return p;
}

double smoothing_estimate(const StatePath& base, const VariationPath& first, const TestProcess& phi, bool debiased,
                          const Execution& exec) {
    const int M = base.grid.M();
    const int N = base.particles();
    if (static_cast<int>(first.y.size()) != M + 1) throw StructuralError("variation path does not match the base");
    if (debiased && N < 2) throw DomainError("debiased smoothing estimate needs N >= 2");
    const double dt = base.grid.dt();
    double total = 0.0;
    for (int k = 0; k < M; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        for (int j = 0; j < phi.outer; ++j) {
            std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(N));
            parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
                Eigen::MatrixXd block;
                for (std::size_t ii = begin; ii < end; ++ii) {
                    const auto i = static_cast<int>(ii);
                    phi.eval(k, j, i, base.x[ks].col(i), base.m[ks], block);
                    v[ii] = block * first.y[ks].col(i);
                }
            });
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(v.front().size());
            double sumsq = 0.0;
            for (const auto& e : v) {
                sum += e;
                sumsq += e.squaredNorm();
            }
            const double sq = debiased ? (sum.squaredNorm() - sumsq) / (static_cast<double>(N) * (N - 1))
                                       : sum.squaredNorm() / (static_cast<double>(N) * N);
            total += sq * dt / phi.outer;
        }
    }
    return total;
}

std::vector<SmoothingReport> smoothing_sweep(const CoefficientModel& model, const GalerkinSpace& space,
                                             const TimeGrid& grid, const ControlPath& ubar,
                                             const std::vector<double>& eps_list,
                                             const std::vector<TestProcess>& processes, const RateConfig& config,
                                             bool debiased) {
    if (config.seeds.empty()) throw DomainError("smoothing sweep needs at least one seed");
    std::vector<ControlPath> spikes;
    std::vector<double> eps_grid;
    for (double eps : eps_list) {
        spikes.push_back(make_spike_control(ubar, config.pert, eps, config.offset, grid, model.control_set()));
        eps_grid.push_back(spikes.back().spike()->eps_grid);
    }
    std::vector<const ControlPath*> ptrs;
    for (const auto& s : spikes) ptrs.push_back(&s);

    std::vector<SmoothingReport> out(processes.size());
    for (std::size_t p = 0; p < processes.size(); ++p) {
        out[p].name = processes[p].name;
        out[p].eps = eps_grid;
        out[p].values.assign(eps_list.size(), 0.0);
    }
    for (std::uint64_t seed : config.seeds) {
        SimulationOptions sim;
        sim.seed = seed;
        sim.exec = config.exec;
        const StatePath base = simulate(model, space, grid, ubar, config.N, config.sampler, sim);
        VariationOptions vopt;
        vopt.second_order = false;
        vopt.exec = config.exec;
        const auto vars = solve_variations(model, space, base, ubar, ptrs, vopt);
        for (std::size_t p = 0; p < processes.size(); ++p)
            for (std::size_t e = 0; e < eps_list.size(); ++e)
                out[p].values[e] += smoothing_estimate(base, vars[e], processes[p], debiased, config.exec) /
                                    static_cast<double>(config.seeds.size());
    }
    for (auto& r : out) {
        r.ratios.clear();
        for (std::size_t e = 0; e < r.eps.size(); ++e) r.ratios.push_back(r.values[e] / r.eps[e]);
        // Sweep order: decreasing eps. The o(eps) surrogate asks the ratio to shrink with eps.
        r.decreasing = true;
        for (std::size_t e = 0; e + 1 < r.eps.size(); ++e) {
            const bool shrinking_eps = r.eps[e + 1] < r.eps[e];
            const double before = shrinking_eps ? r.ratios[e] : r.ratios[e + 1];
            const double after = shrinking_eps ? r.ratios[e + 1] : r.ratios[e];
            if (!(after < before)) r.decreasing = false;
        }
    }
    return out;
}

}  // namespace mvlab
