#include "mvlab/derivative_checks.hpp"

#include <cmath>
#include <limits>

#include "mvlab/errors.hpp"

namespace mvlab {

const char* to_string(PartialSlot slot) {
    switch (slot) {
        case PartialSlot::dx: return "dx";
        case PartialSlot::dxx: return "dxx";
        case PartialSlot::dm: return "dm";
        case PartialSlot::dmx: return "dmx";
        case PartialSlot::dmm: return "dmm";
    }
    return "?";
}

std::vector<double> default_fd_steps() { return {1e-2, 1e-3, 1e-4, 1e-5}; }

namespace {

constexpr double kMachine = std::numeric_limits<double>::epsilon();
// A step counts towards the order fit only if its error exceeds this multiple of the
// estimated rounding error of the difference quotient.
constexpr double kFloorFactor = 20.0;

/// Finishes a sweep given per-step errors and per-step rounding floors.
void summarise(SweepReport& r, const std::vector<double>& floors, const SweepCriteria& criteria) {
    r.best_error = std::numeric_limits<double>::infinity();
    for (double e : r.errors) r.best_error = std::min(r.best_error, e);
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
        if (r.errors[i] > kFloorFactor * floors[i]) {
            lx.push_back(std::log(r.steps[i]));
            ly.push_back(std::log(r.errors[i]));
        }
    }
    r.resolved_points = static_cast<int>(lx.size());
    r.exact = lx.empty();
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= lx.size();
        my /= lx.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        r.observed_order = sxy / sxx;
    } else {
        r.observed_order = std::numeric_limits<double>::quiet_NaN();
    }
    const bool order_ok =
        r.exact || (r.resolved_points >= 2 && r.observed_order >= criteria.order_low && r.observed_order <= criteria.order_high);
    r.passed = r.best_error < criteria.tolerance && order_ok;
}

/// Flattened closed-form partial and, for second-order slots, the first-order partial it is
/// differenced from.
Eigen::VectorXd slot_value(const Partials& p, PartialSlot slot, int n) {
    switch (slot) {
        case PartialSlot::dx: return Eigen::Map<const Eigen::VectorXd>(p.dx.data(), p.dx.size());
        case PartialSlot::dm: return p.dm;
        case PartialSlot::dmm: return p.dmm;
        case PartialSlot::dmx: return Eigen::Map<const Eigen::VectorXd>(p.dmx.data(), p.dmx.size());
        case PartialSlot::dxx: {
            Eigen::VectorXd out(static_cast<Eigen::Index>(p.dxx.size()) * n * n);
            for (std::size_t o = 0; o < p.dxx.size(); ++o)
                out.segment(static_cast<Eigen::Index>(o) * n * n, n * n) =
                    Eigen::Map<const Eigen::VectorXd>(p.dxx[o].data(), n * n);
            return out;
        }
    }
    return {};
}

double relative_error(const Eigen::VectorXd& approx, const Eigen::VectorXd& exact) {
    const double scale = std::max(exact.lpNorm<Eigen::Infinity>(), 1e-6);
    return (approx - exact).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace

SweepReport fd_check(const CoefficientModel& model, Coef which, PartialSlot slot, double t, const StateVector& x,
                     double m, const Control& u, const std::vector<double>& steps, const SweepCriteria& criteria) {
    if (steps.empty()) throw DomainError("fd_check needs at least one step");
    const int n = model.n_state();
    const int out = model.out_dim(which);
    Partials base, plus, minus;
    model.partials(which, t, x, m, u, 2, base);
    const Eigen::VectorXd exact = slot_value(base, slot, n);

    SweepReport r;
    r.label = std::string(to_string(which)) + "." + to_string(slot);
    r.steps = steps;
    std::vector<double> floors;
    for (double h : steps) {
        Eigen::VectorXd approx(exact.size());
        double magnitude = 0.0;
        auto diff = [&](const StateVector& xp, double mp, const StateVector& xm, double mm, int order) {
            model.partials(which, t, xp, mp, u, order, plus);
            model.partials(which, t, xm, mm, u, order, minus);
        };
        switch (slot) {
            case PartialSlot::dx:
                for (int j = 0; j < n; ++j) {
                    StateVector xp = x, xm = x;
                    xp[j] += h;
                    xm[j] -= h;
                    diff(xp, m, xm, m, 0);
                    for (int o = 0; o < out; ++o) approx[o + out * j] = (plus.value[o] - minus.value[o]) / (2 * h);
                }
                magnitude = base.value.lpNorm<Eigen::Infinity>();
                break;
            case PartialSlot::dm:
                diff(x, m + h, x, m - h, 0);
                approx = (plus.value - minus.value) / (2 * h);
                magnitude = base.value.lpNorm<Eigen::Infinity>();
                break;
            case PartialSlot::dxx:
                for (int j = 0; j < n; ++j) {
                    StateVector xp = x, xm = x;
                    xp[j] += h;
                    xm[j] -= h;
                    diff(xp, m, xm, m, 1);
                    for (int o = 0; o < out; ++o)
                        for (int i = 0; i < n; ++i)
                            approx[o * n * n + i + n * j] = (plus.dx(o, i) - minus.dx(o, i)) / (2 * h);
                }
                magnitude = base.dx.lpNorm<Eigen::Infinity>();
                break;
            case PartialSlot::dmx:
                // d/dm of dx, laid out like dmx (out x n, column-major).
                diff(x, m + h, x, m - h, 1);
                {
                    const Eigen::MatrixXd d = (plus.dx - minus.dx) / (2 * h);
                    approx = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
                }
                magnitude = base.dx.lpNorm<Eigen::Infinity>();
                break;
            case PartialSlot::dmm:
                diff(x, m + h, x, m - h, 1);
                approx = (plus.dm - minus.dm) / (2 * h);
                magnitude = base.dm.lpNorm<Eigen::Infinity>();
                break;
        }
        r.errors.push_back(relative_error(approx, exact));
        const double scale = std::max(exact.lpNorm<Eigen::Infinity>(), 1e-6);
        floors.push_back(kMachine * (magnitude + 1.0) / (h * scale));
    }
    summarise(r, floors, criteria);
    return r;
}

Control random_control(const ControlSet& set, RngStream& stream) {
    if (set.kind() == ControlSet::Kind::box) {
        Control u(set.dim());
        for (int c = 0; c < set.dim(); ++c) u[c] = set.lower()[c] + stream.uniform() * (set.upper()[c] - set.lower()[c]);
        return u;
    }
    const auto count = set.points().size();
    return set.points()[static_cast<std::size_t>(stream() % count)];
}

std::vector<SweepReport> fd_check_family(const CoefficientModel& model, int samples, std::uint64_t seed, double radius,
                                         const std::vector<double>& steps, const SweepCriteria& criteria) {
    std::vector<SweepReport> out;
    RngStream stream(seed, StreamPurpose::probe, 0xFD);
    const int n = model.n_state();
    std::vector<StateVector> xs;
    std::vector<double> ms, ts;
    std::vector<Control> us;
    for (int s = 0; s < samples; ++s) {
        StateVector x(n);
        for (int k = 0; k < n; ++k) x[k] = radius * (2 * stream.uniform() - 1);
        xs.push_back(x);
        ms.push_back(radius * (2 * stream.uniform() - 1));
        ts.push_back(stream.uniform());
        us.push_back(random_control(model.control_set(), stream));
    }
    for (Coef which : {Coef::a, Coef::b, Coef::f, Coef::h}) {
        for (PartialSlot slot : {PartialSlot::dx, PartialSlot::dxx, PartialSlot::dm, PartialSlot::dmx, PartialSlot::dmm}) {
            SweepReport agg;
            agg.label = std::string(to_string(which)) + "." + to_string(slot);
            agg.steps = steps;
            agg.errors.assign(steps.size(), 0.0);
            agg.passed = true;
            agg.exact = true;
            double order_min = std::numeric_limits<double>::infinity();
            double order_max = -std::numeric_limits<double>::infinity();
            for (int s = 0; s < samples; ++s) {
                const SweepReport r = fd_check(model, which, slot, ts[s], xs[s], ms[s], us[s], steps, criteria);
                for (std::size_t i = 0; i < steps.size(); ++i) agg.errors[i] = std::max(agg.errors[i], r.errors[i]);
                agg.passed = agg.passed && r.passed;
                agg.exact = agg.exact && r.exact;
                agg.best_error = std::max(agg.best_error, r.best_error);
                agg.resolved_points = std::max(agg.resolved_points, r.resolved_points);
                if (r.resolved_points >= 2) {
                    order_min = std::min(order_min, r.observed_order);
                    order_max = std::max(order_max, r.observed_order);
                }
            }
            // Report the worst order (furthest from 2) among the resolved samples.
            if (std::isfinite(order_min))
                agg.observed_order = std::abs(order_min - 2.0) > std::abs(order_max - 2.0) ? order_min : order_max;
            else
                agg.observed_order = std::numeric_limits<double>::quiet_NaN();
            out.push_back(std::move(agg));
        }
    }
    return out;
}

SweepReport check_lions_lift(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                             const ParticleEnsemble& mu, const Control& u, const ParticleEnsemble& direction,
                             const std::vector<double>& eps_list, const SweepCriteria& criteria) {
    if (direction.size() != mu.size() || direction.dim() != mu.dim())
        throw StructuralError("direction ensemble must match the measure ensemble");
    if (eps_list.empty()) throw DomainError("check_lions_lift needs at least one eps");
    const int out = model.out_dim(which);
    const int N = mu.size();

    // Right-hand side: (1/N) sum_i <d_mu phi(mu)(x_i), y_i>, one entry per output component.
    Eigen::VectorXd reference = Eigen::VectorXd::Zero(out);
    for (int i = 0; i < N; ++i) {
        const StateVector xi = mu.particle(i);
        const LionsDerivative d = deriv_mu(model, which, MeasureKind::mu, t, x, mu, u, xi);
        reference += d.first * direction.particle(i);
    }
    reference /= static_cast<double>(N);

    SweepReport r;
    r.label = std::string("lift.") + to_string(which);
    r.steps = eps_list;
    std::vector<double> floors;
    const double value_scale = eval(model, which, t, x, mu, u).lpNorm<Eigen::Infinity>();
    const double scale = std::max(reference.lpNorm<Eigen::Infinity>(), 1e-6);
    for (double eps : eps_list) {
        const ParticleEnsemble up(mu.particles() + eps * direction.particles(), mu.copy_tag());
        const ParticleEnsemble down(mu.particles() - eps * direction.particles(), mu.copy_tag());
        const Eigen::VectorXd quotient =
            (eval(model, which, t, x, up, u) - eval(model, which, t, x, down, u)) / (2 * eps);
        if (reference.lpNorm<Eigen::Infinity>() == 0.0 && quotient.lpNorm<Eigen::Infinity>() == 0.0)
            r.errors.push_back(0.0);
        else
            r.errors.push_back((quotient - reference).lpNorm<Eigen::Infinity>() / scale);
        floors.push_back(kMachine * (value_scale + 1.0) / (eps * scale));
    }
    summarise(r, floors, criteria);
    return r;
}

LipschitzReport probe_lipschitz(const CoefficientModel& model, const ProbeSettings& settings) {
    LipschitzReport rep;
    rep.bound = settings.bound;
    RngStream stream(settings.seed, StreamPurpose::probe, 0x11B);
    const int n = model.n_state();
    Partials p1, p2;
    auto flat = [](const Partials& p) {
        Eigen::VectorXd v(p.value.size() + p.dx.size() + p.dm.size());
        v << p.value, Eigen::Map<const Eigen::VectorXd>(p.dx.data(), p.dx.size()), p.dm;
        return v;
    };
    for (int s = 0; s < settings.pairs; ++s) {
        StateVector x1(n), x2(n);
        for (int k = 0; k < n; ++k) {
            x1[k] = settings.radius * (2 * stream.uniform() - 1);
            x2[k] = settings.radius * (2 * stream.uniform() - 1);
        }
        const double m1 = settings.radius * (2 * stream.uniform() - 1);
        const double m2 = settings.radius * (2 * stream.uniform() - 1);
        const Control u1 = random_control(model.control_set(), stream);
        const Control u2 = random_control(model.control_set(), stream);
        const double t1 = stream.uniform();
        for (Coef which : {Coef::a, Coef::b, Coef::f, Coef::h}) {
            // Time enters piecewise-constantly in some families; probe at a common time.
            model.partials(which, t1, x1, m1, u1, 1, p1);
            model.partials(which, t1, x2, m2, u2, 1, p2);
            const double dist = std::sqrt((x1 - x2).squaredNorm() + (m1 - m2) * (m1 - m2) + (u1 - u2).squaredNorm());
            if (dist <= 0.0) continue;
            const double ratio = (flat(p1) - flat(p2)).norm() / dist;
            if (!std::isfinite(ratio) || ratio > rep.max_ratio) {
                rep.max_ratio = std::isfinite(ratio) ? ratio : std::numeric_limits<double>::infinity();
                rep.worst = which;
            }
        }
    }
    rep.passed = rep.max_ratio <= settings.bound;
    return rep;
}

}  // namespace mvlab
