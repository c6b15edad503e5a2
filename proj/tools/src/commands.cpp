#include "commands.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "artifacts.hpp"
#include "config.hpp"
#include "mvlab/derivative_checks.hpp"
#include "mvlab/errors.hpp"

#ifndef MVLAB_VERSION
#define MVLAB_VERSION "0.0.0"
#endif

namespace mvlab::cli {

using nlohmann::json;

namespace {

struct Context {
    const ExperimentConfig& cfg;
    ArtifactWriter& files;
    Assertions& checks;
    json results = json::object();
    Execution exec;
    AdjointOptions adjoint;
};

std::string num(double v) {
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s.precision(6);
    s << v;
    return s.str();
}

ControlPath base_control(const ExperimentConfig& cfg, int N) { return ControlPath::constant(cfg.grid.M(), N, cfg.ubar); }

void write_control_csv(ArtifactWriter& files, const std::string& name, const TimeGrid& grid,
                       const std::vector<Control>& values) {
    files.write(name, [&](std::ostream& out) {
        out << "step,t";
        for (Eigen::Index l = 0; l < values.front().size(); ++l) out << ",u" << l;
        out << '\n';
        out.precision(17);
        for (std::size_t k = 0; k < values.size(); ++k) {
            out << k << ',' << grid.t(static_cast<int>(k));
            for (Eigen::Index l = 0; l < values[k].size(); ++l) out << ',' << values[k][l];
            out << '\n';
        }
    });
}

SimulationOptions sim_options(const ExperimentConfig& cfg, const Context& c) {
    SimulationOptions o;
    o.seed = cfg.master_seed();
    o.exec = c.exec;
    return o;
}

void cmd_simulate(Context& c) {
    const auto& cfg = c.cfg;
    const ControlPath u = base_control(cfg, cfg.N);
    const StatePath path =
        simulate(*cfg.model, cfg.space, cfg.grid, u, cfg.N, cfg.sampler, sim_options(cfg, c));
    const double J = cost(*cfg.model, path, u, c.exec);
    c.files.write("path.csv", [&](std::ostream& out) { write_path_csv(path, out); });
    c.files.write("moments.csv", [&](std::ostream& out) {
        out << "step,t,m";
        for (int k = 0; k < path.dim(); ++k) out << ",mean" << k;
        out << ",second_moment\n";
        out.precision(17);
        const auto moments = path_moments(path);
        for (std::size_t k = 0; k < moments.size(); ++k) {
            out << k << ',' << moments[k].t << ',' << moments[k].m;
            for (Eigen::Index i = 0; i < moments[k].mean.size(); ++i) out << ',' << moments[k].mean[i];
            out << ',' << moments[k].second_moment << '\n';
        }
    });
    c.results["cost"] = J;
    c.results["final_m"] = path.m.back();
    c.checks.check("cost_finite", std::isfinite(J), "J = " + num(J));
}

void cmd_rates(Context& c) {
    const auto& cfg = c.cfg;
    RateConfig rc;
    rc.N = cfg.N;
    rc.seeds = cfg.seeds;
    rc.offset = cfg.offset;
    rc.pert = cfg.pert;
    rc.sampler = cfg.sampler;
    rc.exec = c.exec;
    rc.bootstrap_replicates = cfg.rates.bootstrap_replicates;
    rc.ci_level = cfg.rates.ci_level;
    rc.bootstrap_seed = cfg.master_seed();
    RateReport rep;
    try {
        rep = remainder_rates(*cfg.model, cfg.space, cfg.grid, base_control(cfg, cfg.N), cfg.eps, rc);
    } catch (const DomainError& e) {
        throw ConfigError("spike.eps", e.what());
    }
    c.files.write("rates.csv", [&](std::ostream& out) {
        out << "eps";
        for (const auto& s : rep.series) out << ',' << s.name;
        out << '\n';
        out.precision(17);
        for (std::size_t i = 0; i < rep.eps.size(); ++i) {
            out << rep.eps[i];
            for (const auto& s : rep.series) out << ',' << s.values[i];
            out << '\n';
        }
    });
    c.files.write("slopes.csv", [&](std::ostream& out) {
        out << "series,slope,ci_low,ci_high\n";
        out.precision(17);
        for (const auto& s : rep.series) out << s.name << ',' << s.slope << ',' << s.ci.low << ',' << s.ci.high << '\n';
    });
    json slopes = json::object();
    for (const auto& s : rep.series) slopes[s.name] = {{"slope", s.slope}, {"ci_low", s.ci.low}, {"ci_high", s.ci.high}};
    c.results["slopes"] = slopes;
    for (const auto& [name, band] : cfg.rates.bands) {
        const double slope = rep.get(name).slope;
        c.checks.check("slope_" + name, slope >= band.first && slope <= band.second,
                       num(slope) + " in [" + num(band.first) + ", " + num(band.second) + "]");
    }
    const RateSeries& zeta = rep.get("zeta");
    c.checks.check("slope_zeta", zeta.slope > cfg.rates.zeta_min, num(zeta.slope) + " > " + num(cfg.rates.zeta_min));
    c.checks.check("slope_zeta_ci", zeta.ci.low > cfg.rates.zeta_min,
                   "CI [" + num(zeta.ci.low) + ", " + num(zeta.ci.high) + "] above " + num(cfg.rates.zeta_min));
}

void add_duality(Context& c, const TranspositionReport& rep, const std::string& label) {
    for (const DualityCheck& d : rep.checks) {
        const std::string name = label + "_" + d.name;
        // Variation instances are reported only: their spike window spans few steps, so the
        // quadrature error there is of the size of the terms.
        if (d.name.find("variation") != std::string::npos) {
            c.results["reported"][name] = d.relative;
            continue;
        }
        c.checks.check(name, d.relative < c.cfg.adjoint_check.max_relative,
                       "relative residual " + num(d.relative) + " < " + num(c.cfg.adjoint_check.max_relative));
    }
}

void cmd_adjoint_check(Context& c) {
    const auto& cfg = c.cfg;
    const auto& ac = cfg.adjoint_check;
    const ControlPath u = base_control(cfg, cfg.N);
    const StatePath base =
        simulate(*cfg.model, cfg.space, cfg.grid, u, cfg.N, cfg.sampler, sim_options(cfg, c));
    const FirstAdjointPath first = solve_first_adjoint_auto(*cfg.model, cfg.space, base, u, c.adjoint);
    if (first.method == FirstAdjointMethod::picard_regression && !first.converged)
        c.checks.warn("Picard iteration stopped at the iteration cap without meeting its tolerance");
    const SecondAdjointPath second = solve_second_adjoint_auto(*cfg.model, cfg.space, base, u, first, c.adjoint);
    for (const auto& w : second.warnings) c.checks.warn(w);
    c.results["first_method"] = to_string(first.method);
    c.results["second_method"] = to_string(second.method);
    c.files.write("adjoint.csv", [&](std::ostream& out) { write_adjoint_csv(first, cfg.grid, out); });

    const ControlPath spike =
        make_spike_control(u, cfg.pert, cfg.eps.front(), cfg.offset, cfg.grid, cfg.model->control_set());
    VariationOptions vo;
    vo.second_order = false;
    vo.record_coefficients = true;
    vo.exec = c.exec;
    const VariationPath var = solve_variations(*cfg.model, cfg.space, base, u, {&spike}, vo).front();
    const TranspositionReport r1 = verify_transposition_first(cfg.space, base, first, ac.test_sources, ac.source_seed,
                                                              &var, ac.source_scale, c.exec);
    const SecondTrajectory instance = variation_as_second_test(var, second);
    const TranspositionReport r2 = verify_transposition_second(cfg.space, base, second, ac.test_pairs, ac.source_seed,
                                                               &instance, ac.source_scale, c.exec);
    c.files.write("transposition_first.json", [&](std::ostream& out) { r1.write_json(out); });
    c.files.write("transposition_second.json", [&](std::ostream& out) { r2.write_json(out); });
    add_duality(c, r1, "first");
    add_duality(c, r2, "second");

    if (lq_parameters(*cfg.model) && u.is_common()) {
        const FirstAdjointPath exact =
            solve_first_adjoint(*cfg.model, cfg.space, base, u, FirstAdjointMethod::lq_closed_form, c.adjoint);
        const FirstAdjointPath picard =
            solve_first_adjoint(*cfg.model, cfg.space, base, u, FirstAdjointMethod::picard_regression, c.adjoint);
        const AdjointComparison cmp = compare_adjoints(picard, exact);
        c.results["picard_vs_closed_form"] = {{"p_relative_rmse", cmp.p_relative_rmse},
                                              {"q_relative_rmse", cmp.q_relative_rmse},
                                              {"iterations", picard.iterations}};
        c.checks.check("picard_p_rmse", cmp.p_relative_rmse < ac.max_rmse, num(cmp.p_relative_rmse) + " < " + num(ac.max_rmse));
        c.checks.check("picard_q_rmse", cmp.q_relative_rmse < ac.max_rmse, num(cmp.q_relative_rmse) + " < " + num(ac.max_rmse));
    }

    const ContractionReport probe =
        picard_contraction_probe(*cfg.model, cfg.space, base, u, ac.horizons, 3, c.adjoint);
    c.files.write("contraction.csv", [&](std::ostream& out) {
        out << "horizon,start_step,factor,iteration,distance\n";
        out.precision(17);
        for (const auto& s : probe.splits)
            for (std::size_t l = 0; l < s.distances.size(); ++l)
                out << s.horizon << ',' << s.start_step << ',' << s.factor << ',' << l + 1 << ',' << s.distances[l] << '\n';
    });
    json factors = json::array();
    for (const auto& s : probe.splits) factors.push_back({{"horizon", s.horizon}, {"factor", s.factor}});
    c.results["contraction"] = factors;
    const double smallest = probe.splits.front().factor;
    c.checks.check("contraction_smallest_horizon", smallest < ac.max_factor, num(smallest) + " < " + num(ac.max_factor));
    c.checks.check("contraction_nondecreasing", probe.nondecreasing, "factor nondecreasing in the horizon");
}

std::vector<Control> optimised_control(Context& c, int N) {
    const auto& cfg = c.cfg;
    ImproveOptions io;
    io.iterations = cfg.optimize.iterations;
    io.relaxation = cfg.optimize.relaxation;
    io.N = N;
    io.seed = cfg.master_seed();
    io.sampler = cfg.sampler;
    io.golden_iterations = cfg.optimize.golden_iterations;
    io.tolerance = cfg.optimize.tolerance;
    io.adjoint = c.adjoint;
    const ImproveResult res = improve_control(*cfg.model, cfg.space, cfg.grid, base_control(cfg, N), io);
    c.results["optimize"] = {{"initial_cost", res.initial_cost}, {"cost", res.cost}, {"iterations", res.iterations},
                             {"converged", res.converged}};
    c.files.write("costs.csv", [&](std::ostream& out) {
        out << "iterate,cost\n";
        out.precision(17);
        for (std::size_t i = 0; i < res.costs.size(); ++i) out << i << ',' << res.costs[i] << '\n';
    });
    c.checks.check("cost_not_increased", res.cost <= res.initial_cost,
                   num(res.cost) + " <= " + num(res.initial_cost));
    if (!res.converged) c.checks.warn("improve_control stopped at the iteration cap");
    return res.control.common_values();
}

void cmd_optimize(Context& c) {
    const auto values = optimised_control(c, c.cfg.N);
    write_control_csv(c.files, "control.csv", c.cfg.grid, values);
}

void cmd_smp_check(Context& c) {
    const auto& cfg = c.cfg;
    std::vector<Control> values(static_cast<std::size_t>(cfg.grid.M()), cfg.ubar);
    if (cfg.smp.optimize_first) values = optimised_control(c, cfg.N);
    write_control_csv(c.files, "control.csv", cfg.grid, values);
    SMPCheckConfig sc;
    sc.N = cfg.smp.N;
    sc.seed = cfg.master_seed();
    sc.sampler = cfg.sampler;
    sc.se_multiplier = cfg.smp.se_multiplier;
    sc.adjoint = c.adjoint;
    const auto u_grid = control_grid(cfg.model->control_set(), cfg.smp.grid_points);
    const SMPCheckReport rep =
        smp_check(*cfg.model, cfg.space, cfg.grid, ControlPath::common(values, sc.N), u_grid, sc);
    c.files.write("smp_gap.csv", [&](std::ostream& out) { rep.gap.write_csv(out); });
    c.results["smp"] = {{"min_mean_gap", rep.min_mean_gap},
                        {"tol", rep.tol},
                        {"standard_error", rep.standard_error},
                        {"dt_bias", rep.dt_bias},
                        {"fraction_below_tol", rep.fraction_below_tol},
                        {"argmin_step", rep.gap.argmin_step}};
    c.checks.check("smp_min_gap", rep.passed, "min mean gap " + num(rep.min_mean_gap) + " >= -" + num(rep.tol));
}

void cmd_expand(Context& c) {
    const auto& cfg = c.cfg;
    ExpansionConfig ec;
    ec.N = cfg.expand.N;
    ec.seed = cfg.master_seed();
    ec.offset = cfg.offset;
    ec.sampler = cfg.sampler;
    ec.antithetic = cfg.expand.antithetic;
    ec.adjoint = c.adjoint;
    const ControlPath u = base_control(cfg, ec.N);
    const ExpansionReport rep = cost_expansion_check(*cfg.model, cfg.space, cfg.grid, u, cfg.pert, cfg.eps, ec);
    c.files.write("expansion.csv", [&](std::ostream& out) {
        out << "eps,delta_cost,predicted,residual,ratio\n";
        out.precision(17);
        for (const auto& p : rep.points)
            out << p.eps << ',' << p.delta_cost << ',' << p.predicted << ',' << p.residual << ',' << p.ratio << '\n';
    });
    json ratios = json::array();
    for (const auto& p : rep.points) ratios.push_back(p.ratio);
    c.results["ratios"] = ratios;
    c.checks.check("ratio_decreasing", rep.decreasing, "|R(eps)/eps| strictly decreasing as eps shrinks");

    const ControlPath self = make_spike_control(u, cfg.ubar, cfg.eps.front(), cfg.offset, cfg.grid, cfg.model->control_set());
    const ExpansionPoint s = expansion_point(*cfg.model, cfg.space, cfg.grid, u, self, ec);
    c.checks.check("self_gap_exact", s.residual == 0.0, "residual " + num(s.residual));
    const ControlPath none = make_spike_control_steps(u, cfg.pert, {}, cfg.grid, cfg.model->control_set());
    const ExpansionPoint z = expansion_point(*cfg.model, cfg.space, cfg.grid, u, none, ec);
    c.checks.check("zero_spike_exact", z.residual == 0.0, "residual " + num(z.residual));
}

void cmd_lions_check(Context& c) {
    const auto& cfg = c.cfg;
    const int n = cfg.space.n_state();
    const int size = cfg.lions.ensemble_size;
    const ParticleEnsemble mu(cfg.sampler.sample(size, cfg.master_seed()));
    RngStream stream(cfg.master_seed(), StreamPurpose::user, 1);
    Eigen::MatrixXd y(n, size);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = stream.normal();
    const ParticleEnsemble direction(y);
    const double t = 0.5 * cfg.grid.T();

    std::vector<SweepReport> lifts_;
    for (Coef which : {Coef::a, Coef::b, Coef::f, Coef::h}) {
        SweepReport r = check_lions_lift(*cfg.model, which, t, cfg.sampler.mean, mu, cfg.ubar, direction,
                                         default_fd_steps(), cfg.lions.criteria);
        r.label = std::string("lift_") + to_string(which);
        lifts_.push_back(r);
    }
    const std::vector<SweepReport>& lifts = lifts_;
    const std::vector<SweepReport> fd = fd_check_family(*cfg.model, cfg.lions.fd_samples, cfg.master_seed(), cfg.lions.fd_radius,
                                    default_fd_steps(), cfg.lions.criteria);
    c.files.write("lions.csv", [&](std::ostream& out) {
        out << "check,step,relative_error\n";
        out.precision(17);
        for (const auto& r : lifts)
            for (std::size_t i = 0; i < r.steps.size(); ++i) out << r.label << ',' << r.steps[i] << ',' << r.errors[i] << '\n';
    });
    c.files.write("fd_checks.csv", [&](std::ostream& out) {
        out << "check,best_error,observed_order,resolved_points,exact,passed\n";
        out.precision(17);
        for (const std::vector<SweepReport>* group : std::array{&lifts, &fd})
            for (const auto& r : *group)
                out << r.label << ',' << r.best_error << ',' << r.observed_order << ',' << r.resolved_points << ','
                    << r.exact << ',' << r.passed << '\n';
    });
    c.results["lift_checks"] = lifts.size();
    c.results["fd_checks"] = fd.size();
    for (const std::vector<SweepReport>* group : std::array{&lifts, &fd})
        for (const auto& r : *group)
            c.checks.check(r.label, r.passed,
                           "best error " + num(r.best_error) + ", order " +
                               (r.exact ? std::string("exact") : num(r.observed_order)));
}

const std::map<std::string, std::function<void(Context&)>>& table() {
    static const std::map<std::string, std::function<void(Context&)>> t{
        {"simulate", cmd_simulate},   {"rates", cmd_rates},   {"adjoint-check", cmd_adjoint_check},
        {"smp-check", cmd_smp_check}, {"expand", cmd_expand}, {"optimize", cmd_optimize},
        {"lions-check", cmd_lions_check}};
    return t;
}

std::string summary_text(const std::string& subcommand, const ExperimentConfig& cfg, const Assertions& checks,
                         const json& results, const std::string& error) {
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s << "mvlab " << subcommand << " (family " << cfg.family << ", n " << cfg.space.n_state() << ", d "
      << cfg.space.n_noise() << ", M " << cfg.grid.M() << ", N " << cfg.N << ")\n";
    for (const auto& r : checks.records()) s << (r.passed ? "  PASS " : "  FAIL ") << r.name << ": " << r.detail << '\n';
    for (const auto& w : checks.warnings()) s << "  WARN " << w << '\n';
    if (!error.empty()) s << "  STOPPED " << error << '\n';
    s << "results " << results.dump() << '\n';
    s << (checks.all_passed() && error.empty() ? "status: all assertions passed\n" : "status: assertions failed\n");
    return s.str();
}

}  // namespace

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, fn] : table()) v.push_back(name);
        return v;
    }();
    return names;
}

int run(const std::string& subcommand, const RunOptions& options, std::ostream& log, std::ostream& err) {
    const auto it = table().find(subcommand);
    if (it == table().end()) {
        err << "error: unknown subcommand " << subcommand << '\n';
        return exit_error;
    }
    try {
        std::ifstream in(options.config);
        if (!in) throw ConfigError("--config", "cannot open " + options.config.string());
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
        }
        if (options.seed) override_seed(doc, *options.seed);
        if (options.workers) {
            if (*options.workers < 1) throw ConfigError("--workers", "must be a positive integer");
            doc["execution"]["workers"] = *options.workers;
        }
        if (options.out) doc["output"] = options.out->string();
        const ExperimentConfig cfg = parse_config(doc, options.config.parent_path());

        ArtifactWriter files(cfg.output);
        Assertions checks(options.strict);
        Context ctx{cfg, files, checks, json::object(), Execution{cfg.workers}, cfg.adjoint};
        ctx.adjoint.exec = ctx.exec;
        std::string stopped;
        try {
            const bool uses_spike = subcommand == "rates" || subcommand == "expand" || subcommand == "adjoint-check";
            for (const auto& w : cfg.warnings)
                if (uses_spike || w.rfind("spike.", 0) != 0) checks.warn(w);
            it->second(ctx);
        } catch (const StrictStop& e) {
            stopped = e.what();
        }

        // The effective configuration is written first: its hash identifies the experiment.
        const std::string config_text = cfg.effective.dump(2) + "\n";
        files.write_text("config.json", config_text);
        json assertions = json::array();
        for (const auto& r : checks.records())
            assertions.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
        const bool passed = checks.all_passed() && stopped.empty();
        const json summary{{"subcommand", subcommand}, {"passed", passed},     {"assertions", assertions},
                           {"warnings", checks.warnings()}, {"results", ctx.results}, {"stopped", stopped}};
        files.write_text("summary.json", summary.dump(2) + "\n");
        const std::string text = summary_text(subcommand, cfg, checks, ctx.results, stopped);
        files.write_text("summary.txt", text);

        std::ostringstream manifest;
        manifest << "mvlab_version " << MVLAB_VERSION << '\n';
        manifest << "subcommand " << subcommand << '\n';
        manifest << "config_sha256 " << sha256_hex(config_text) << '\n';
        manifest << "seeds";
        for (auto s : cfg.seeds) manifest << ' ' << s;
        manifest << '\n';
        manifest << "workers " << cfg.workers << '\n';
        manifest << "strict " << (options.strict ? "true" : "false") << '\n';
        for (const auto& e : files.entries()) manifest << "file " << e.name << ' ' << e.bytes << ' ' << e.sha256 << '\n';
        std::ofstream(files.dir() / "manifest.txt", std::ios::binary | std::ios::trunc) << manifest.str();

        log << text;
        return passed ? exit_ok : exit_assertion_failed;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
    } catch (const SimulationFault& e) {
        err << "simulation fault: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return exit_error;
}

}  // namespace mvlab::cli
