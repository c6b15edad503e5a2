#include <algorithm>
#include <cmath>
#include <ostream>

#include "mvlab/adjoint.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/regression.hpp"

namespace mvlab {

const char* to_string(FirstAdjointMethod method) {
    switch (method) {
        case FirstAdjointMethod::picard_regression: return "picard_regression";
        case FirstAdjointMethod::lq_closed_form: return "lq_closed_form";
    }
    return "unknown";
}

HSMatrix FirstAdjointPath::q_matrix(int k, int i, int n, int d) const {
    return Eigen::Map<const Eigen::MatrixXd>(q[static_cast<std::size_t>(k)].col(i).data(), n, d);
}

namespace {

struct Context {
    const CoefficientModel& model;
    const GalerkinSpace& space;
    const StatePath& base;
    const ControlPath& ubar;
    const AdjointOptions& options;
    int n, d, N, M;
    double dt;
    Eigen::ArrayXd decay;

    Context(const CoefficientModel& mdl, const GalerkinSpace& sp, const StatePath& b, const ControlPath& u,
            const AdjointOptions& opt)
        : model(mdl), space(sp), base(b), ubar(u), options(opt), n(sp.n_state()), d(sp.n_noise()),
          N(b.particles()), M(b.grid.M()), dt(b.grid.dt()), decay(sp.semigroup_factors(b.grid.dt()).array()) {
        if (!b.noise) throw StructuralError("adjoint needs the noise record of the base path");
        if (u.steps() != M || u.particles() != N) throw StructuralError("ubar does not match the base path");
        if (mdl.n_state() != n || mdl.n_noise() != d) throw StructuralError("model and space dimensions differ");
    }
};

void allocate(const Context& c, FirstAdjointPath& out) {
    out.dt = c.dt;
    out.p.assign(static_cast<std::size_t>(c.M) + 1, Eigen::MatrixXd::Zero(c.n, c.N));
    out.p_pred.assign(static_cast<std::size_t>(c.M), Eigen::MatrixXd::Zero(c.n, c.N));
    out.q.assign(static_cast<std::size_t>(c.M), Eigen::MatrixXd::Zero(c.n * c.d, c.N));
    out.driver.assign(static_cast<std::size_t>(c.M), Eigen::MatrixXd::Zero(c.n, c.N));
    out.mean_field.assign(static_cast<std::size_t>(c.M), Eigen::VectorXd::Zero(c.n));
}

void terminal(const Context& c, FirstAdjointPath& out) {
    const auto M = static_cast<std::size_t>(c.M);
    const double m = c.base.m[M];
    const Control none;
    std::vector<double> hm(static_cast<std::size_t>(c.N));
    parallel_for(static_cast<std::size_t>(c.N), c.options.exec, [&](std::size_t begin, std::size_t end) {
        Partials ph;
        for (std::size_t i = begin; i < end; ++i) {
            c.model.partials(Coef::h, c.base.grid.T(), c.base.x[M].col(static_cast<Eigen::Index>(i)), m, none, 1, ph);
            out.p[M].col(static_cast<Eigen::Index>(i)) = -ph.dx.row(0).transpose();
            hm[i] = ph.dm[0];
        }
    });
    double mean_hm = 0.0;
    for (double v : hm) mean_hm += v;
    mean_hm /= c.N;
    out.p[M].colwise() -= mean_hm * c.model.psi();
}

/// Given p_pred[k] and q[k], fills driver[k] and p[k] using the frozen mean-field vector, and
/// returns the mean-field vector implied by (p_pred[k], q[k]).
Eigen::VectorXd finish_step(const Context& c, int k, const Eigen::VectorXd& frozen_mf, FirstAdjointPath& out) {
    const auto ks = static_cast<std::size_t>(k);
    const double t = c.base.grid.t(k);
    const double m = c.base.m[ks];
    const auto& w = c.space.hs_weights();
    std::vector<double> contrib(static_cast<std::size_t>(c.N));
    parallel_for(static_cast<std::size_t>(c.N), c.options.exec, [&](std::size_t begin, std::size_t end) {
        Partials pa, pb, pf;
        Eigen::VectorXd g(c.n);
        for (std::size_t ii = begin; ii < end; ++ii) {
            const auto i = static_cast<Eigen::Index>(ii);
            const auto x = c.base.x[ks].col(i);
            const Control u = c.ubar.at(k, static_cast<int>(i));
            c.model.partials(Coef::a, t, x, m, u, 1, pa);
            c.model.partials(Coef::b, t, x, m, u, 1, pb);
            c.model.partials(Coef::f, t, x, m, u, 1, pf);
            const auto ph = out.p_pred[ks].col(i);
            const auto qi = out.q[ks].col(i);
            g.noalias() = pa.dx.transpose() * ph;
            double s = pa.dm.dot(ph) - pf.dm[0];
            for (int j = 0; j < c.d; ++j) {
                g.noalias() += w[j] * pb.dx.middleRows(c.n * j, c.n).transpose() * qi.segment(c.n * j, c.n);
                s += w[j] * pb.dm.segment(c.n * j, c.n).dot(qi.segment(c.n * j, c.n));
            }
            g -= pf.dx.row(0).transpose();
            g += frozen_mf;
            out.driver[ks].col(i) = g;
            out.p[ks].col(i) = ph + c.dt * g;
            contrib[ii] = s;
        }
    });
    double mean = 0.0;
    for (double v : contrib) mean += v;
    return (mean / c.N) * c.model.psi();
}

/// One backward sweep over [k_start, M) with regression estimates of p_pred and q.
void regression_sweep(const Context& c, const std::vector<Eigen::VectorXd>& frozen, int k_start, FirstAdjointPath& out,
                      std::vector<Eigen::VectorXd>& next) {
    const auto& w = c.space.hs_weights();
    for (int k = c.M - 1; k >= k_start; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const Eigen::MatrixXd target = c.decay.matrix().asDiagonal() * out.p[ks + 1];
        const ConditionalExpectation reg(c.base.x[ks], c.options.regression_degree, c.options.ridge);
        out.p_pred[ks] = reg.project(target);
        const Eigen::MatrixXd resid = target - out.p_pred[ks];
        const Eigen::MatrixXd& dw = c.base.noise->dw[ks];
        Eigen::MatrixXd qt(c.n * c.d, c.N);
        for (int j = 0; j < c.d; ++j) {
            const Eigen::RowVectorXd scale = dw.row(j) / (w[j] * c.dt);
            qt.middleRows(c.n * j, c.n) = resid.array().rowwise() * scale.array();
        }
        out.q[ks] = reg.project(qt);
        out.mean_field[ks] = frozen[ks];
        next[ks] = finish_step(c, k, frozen[ks], out);
    }
}

double path_size(const FirstAdjointPath& a, double dt, int first_step) {
    FirstAdjointPath zero;
    zero.p.resize(a.p.size());
    zero.q.resize(a.q.size());
    for (std::size_t k = 0; k < a.p.size(); ++k) zero.p[k] = Eigen::MatrixXd::Zero(a.p[k].rows(), a.p[k].cols());
    for (std::size_t k = 0; k < a.q.size(); ++k) zero.q[k] = Eigen::MatrixXd::Zero(a.q[k].rows(), a.q[k].cols());
    return adjoint_distance(a, zero, dt, first_step);
}

struct PicardRun {
    FirstAdjointPath path;
    std::vector<double> distances;
    bool converged = false;
    double failing_ratio = 0.0;
    int failing_iteration = -1;
};

/// Jacobi iteration on the mean-field term: every sweep uses the term implied by the previous
/// iterate, starting from zero. `max_sweeps` counts iterates after the initial one.
PicardRun picard(const Context& c, int k_start, int max_sweeps, bool stop_on_tolerance) {
    PicardRun run;
    std::vector<Eigen::VectorXd> frozen(static_cast<std::size_t>(c.M), Eigen::VectorXd::Zero(c.n));
    std::vector<Eigen::VectorXd> next = frozen;
    FirstAdjointPath prev;
    allocate(c, prev);
    terminal(c, prev);
    regression_sweep(c, frozen, k_start, prev, next);
    int streak = 0;
    for (int l = 1; l <= max_sweeps; ++l) {
        frozen = next;
        FirstAdjointPath cur = prev;
        regression_sweep(c, frozen, k_start, cur, next);
        const double dist = adjoint_distance(cur, prev, c.dt, k_start);
        run.distances.push_back(dist);
        const double size = path_size(cur, c.dt, k_start);
        prev = std::move(cur);
        if (dist <= c.options.tolerance * (1.0 + size)) {
            run.converged = true;
            if (stop_on_tolerance) break;
        }
        if (run.distances.size() >= 2) {
            const double before = run.distances[run.distances.size() - 2];
            const double ratio = before > 0.0 ? dist / before : 0.0;
            streak = ratio >= 1.0 ? streak + 1 : 0;
            if (streak >= c.options.divergence_window && run.failing_iteration < 0) {
                run.failing_ratio = ratio;
                run.failing_iteration = l;
                break;
            }
        }
    }
    run.path = std::move(prev);
    return run;
}

FirstAdjointPath closed_form(const Context& c) {
    const LinearQuadraticParams* lq = lq_parameters(c.model);
    if (!lq) throw UnsupportedError("lq_closed_form needs the linear_quadratic family");
    if (!c.ubar.is_common()) throw UnsupportedError("lq_closed_form needs a control common to all particles");
    FirstAdjointPath out;
    out.method = FirstAdjointMethod::lq_closed_form;
    allocate(c, out);
    terminal(c, out);
    const int n = c.n;
    const int nd = std::min(c.n, c.d);
    const auto& w = c.space.hs_weights();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd A1t = I + c.dt * lq->A1.transpose();
    const auto Sd = c.decay.matrix().asDiagonal();

    out.gamma.assign(static_cast<std::size_t>(c.M) + 1, Eigen::MatrixXd::Zero(n, n));
    out.gamma_affine.assign(static_cast<std::size_t>(c.M) + 1, Eigen::VectorXd::Zero(n));
    out.gamma.back() = lq->H;
    out.gamma_affine.back() = lq->c + lq->hbar * c.base.m.back() * c.model.psi();

    for (int k = c.M - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const Control u = c.ubar.at(k, 0);
        const double m = c.base.m[ks];
        const Eigen::MatrixXd G = Sd * out.gamma[ks + 1] * Sd;
        const Eigen::MatrixXd P1 = G * (I + c.dt * lq->A1);
        const Eigen::VectorXd p1 =
            G * ((lq->abar * m * c.model.psi() + lq->B * u) * c.dt) + Sd * out.gamma_affine[ks + 1];
        Eigen::MatrixXd cols = lq->S0;
        for (int l = 0; l < u.size(); ++l) cols += u[l] * lq->R[static_cast<std::size_t>(l)];
        for (int j = 0; j < nd; ++j) cols(j, j) += lq->w_m * m;

        const Eigen::MatrixXd& x = c.base.x[ks];
        out.p_pred[ks] = -(P1 * x);
        out.p_pred[ks].colwise() -= p1;
        for (int j = 0; j < c.d; ++j) {
            Eigen::MatrixXd beta = cols.col(j).replicate(1, c.N);
            if (j < nd) beta.row(j) += lq->sigma_x * x.row(j);
            out.q[ks].middleRows(n * j, n) = -(G * beta);
        }
        const Eigen::VectorXd mf = finish_step(c, k, Eigen::VectorXd::Zero(n), out);
        // The mean-field term of step k depends only on step-k quantities, so the exact value
        // can be applied in the same sweep.
        out.mean_field[ks] = mf;
        out.driver[ks].colwise() += mf;
        out.p[ks].colwise() += c.dt * mf;

        Eigen::VectorXd diagG = Eigen::VectorXd::Zero(n), diagC = Eigen::VectorXd::Zero(n);
        for (int l = 0; l < nd; ++l) {
            diagG[l] = w[l] * G(l, l);
            diagC[l] = w[l] * (G * cols.col(l))[l];
        }
        out.gamma[ks] = A1t * P1 + c.dt * lq->sigma_x * lq->sigma_x * Eigen::MatrixXd(diagG.asDiagonal()) +
                        c.dt * lq->Q;
        out.gamma_affine[ks] = A1t * p1 + c.dt * lq->sigma_x * diagC - c.dt * mf;
    }
    out.converged = true;
    return out;
}

}  // namespace

double adjoint_distance(const FirstAdjointPath& a, const FirstAdjointPath& b, double dt, int first_step) {
    if (a.p.size() != b.p.size() || a.q.size() != b.q.size()) throw StructuralError("adjoint paths differ in length");
    double sup = 0.0;
    for (std::size_t k = static_cast<std::size_t>(first_step); k < a.p.size(); ++k) {
        const double msq = (a.p[k] - b.p[k]).colwise().squaredNorm().mean();
        sup = std::max(sup, std::sqrt(msq));
    }
    double integral = 0.0;
    for (std::size_t k = static_cast<std::size_t>(first_step); k < a.q.size(); ++k)
        integral += (a.q[k] - b.q[k]).colwise().squaredNorm().mean() * dt;
    return sup + std::sqrt(integral);
}

AdjointComparison compare_adjoints(const FirstAdjointPath& approx, const FirstAdjointPath& reference) {
    if (approx.p.size() != reference.p.size()) throw StructuralError("adjoint paths differ in length");
    double dp = 0.0, rp = 0.0, dq = 0.0, rq = 0.0;
    for (std::size_t k = 0; k < approx.p.size(); ++k) {
        dp += (approx.p[k] - reference.p[k]).squaredNorm();
        rp += reference.p[k].squaredNorm();
    }
    for (std::size_t k = 0; k < approx.q.size(); ++k) {
        dq += (approx.q[k] - reference.q[k]).squaredNorm();
        rq += reference.q[k].squaredNorm();
    }
    AdjointComparison out;
    out.p_relative_rmse = rp > 0.0 ? std::sqrt(dp / rp) : std::sqrt(dp);
    out.q_relative_rmse = rq > 0.0 ? std::sqrt(dq / rq) : std::sqrt(dq);
    return out;
}

FirstAdjointPath solve_first_adjoint(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                     const ControlPath& ubar, FirstAdjointMethod method,
                                     const AdjointOptions& options) {
    const Context c(model, space, base, ubar, options);
    if (method == FirstAdjointMethod::lq_closed_form) return closed_form(c);
    PicardRun run = picard(c, 0, options.max_iterations, true);
    if (run.failing_iteration >= 0) throw PicardDivergence(run.failing_ratio, run.failing_iteration);
    run.path.method = FirstAdjointMethod::picard_regression;
    run.path.iterations = static_cast<int>(run.distances.size());
    run.path.distances = std::move(run.distances);
    run.path.converged = run.converged;
    return std::move(run.path);
}

FirstAdjointPath solve_first_adjoint_auto(const CoefficientModel& model, const GalerkinSpace& space,
                                          const StatePath& base, const ControlPath& ubar,
                                          const AdjointOptions& options) {
    const bool closed = lq_parameters(model) != nullptr && ubar.is_common();
    return solve_first_adjoint(model, space, base, ubar,
                               closed ? FirstAdjointMethod::lq_closed_form : FirstAdjointMethod::picard_regression,
                               options);
}

ContractionReport picard_contraction_probe(const CoefficientModel& model, const GalerkinSpace& space,
                                           const StatePath& base, const ControlPath& ubar,
                                           std::vector<double> horizons, int probe_iterations,
                                           const AdjointOptions& options) {
    if (horizons.size() < 2) throw DomainError("contraction probe needs at least two horizons");
    if (probe_iterations < 2) throw DomainError("contraction probe needs at least two iterations");
    std::sort(horizons.begin(), horizons.end());
    const Context c(model, space, base, ubar, options);
    ContractionReport report;
    for (double L : horizons) {
        if (!(L > 0.0) || L > base.grid.T() + 1e-12) throw DomainError("probe horizon must lie in (0, T]");
        ContractionSplit split;
        split.horizon = L;
        split.start_step = std::max(0, c.M - base.grid.steps_for(L));
        const PicardRun run = picard(c, split.start_step, probe_iterations, false);
        split.distances = run.distances;
        const double size = path_size(run.path, c.dt, split.start_step);
        const double floor = 1e-13 * (1.0 + size);
        if (split.distances.empty() || split.distances.front() <= floor) {
            split.factor = 0.0;
        } else {
            for (std::size_t l = 1; l < split.distances.size(); ++l) {
                if (split.distances[l - 1] <= floor) break;
                split.factor = std::max(split.factor, split.distances[l] / split.distances[l - 1]);
            }
        }
        split.diverged = split.factor >= 1.0 || run.failing_iteration >= 0;
        report.splits.push_back(std::move(split));
    }
    report.smallest_factor = report.splits.front().factor;
    report.nondecreasing = true;
    for (std::size_t s = 1; s < report.splits.size(); ++s)
        if (report.splits[s].factor + 1e-12 < report.splits[s - 1].factor) report.nondecreasing = false;
    return report;
}

void write_adjoint_csv(const FirstAdjointPath& adjoint, const TimeGrid& grid, std::ostream& out) {
    const auto n = adjoint.p.front().rows();
    const auto nq = adjoint.q.empty() ? 0 : adjoint.q.front().rows();
    out << "step,t,particle";
    for (Eigen::Index k = 0; k < n; ++k) out << ",p" << k;
    for (Eigen::Index k = 0; k < nq; ++k) out << ",q" << k;
    out << '\n';
    out.precision(17);
    for (std::size_t k = 0; k < adjoint.p.size(); ++k) {
        for (Eigen::Index i = 0; i < adjoint.p[k].cols(); ++i) {
            out << k << ',' << grid.t(static_cast<int>(k)) << ',' << i;
            for (Eigen::Index r = 0; r < n; ++r) out << ',' << adjoint.p[k](r, i);
            for (Eigen::Index r = 0; r < nq; ++r) {
                out << ',';
                if (k < adjoint.q.size()) out << adjoint.q[k](r, i);
            }
            out << '\n';
        }
    }
}

}  // namespace mvlab
