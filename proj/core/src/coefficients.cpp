#include "mvlab/coefficients.hpp"

#include <string>

#include "mvlab/errors.hpp"

namespace mvlab {

const char* to_string(Coef which) {
    switch (which) {
        case Coef::a: return "a";
        case Coef::b: return "b";
        case Coef::f: return "f";
        case Coef::h: return "h";
    }
    return "?";
}

const char* to_string(Family family) {
    switch (family) {
        case Family::scalar_interaction: return "scalar_interaction";
        case Family::linear_quadratic: return "linear_quadratic";
        case Family::custom_table: return "custom_table";
    }
    return "?";
}

const char* to_string(MeasureKind kind) {
    switch (kind) {
        case MeasureKind::mu: return "mu";
        case MeasureKind::y_mu: return "y_mu";
        case MeasureKind::mu_x: return "mu_x";
        case MeasureKind::mu_mu: return "mu_mu";
    }
    return "?";
}

void Partials::prepare(int out, int n, int order) {
    value.setZero(out);
    if (order >= 1) {
        dx.setZero(out, n);
        dm.setZero(out);
    }
    if (order >= 2) {
        dxx.resize(static_cast<std::size_t>(out));
        for (auto& m : dxx) m.setZero(n, n);
        dmx.setZero(out, n);
        dmm.setZero(out);
    }
}

CoefficientModel::CoefficientModel(Family family, int n_state, int n_noise, Eigen::VectorXd psi,
                                   ControlSet control_set)
    : family_(family), n_state_(n_state), n_noise_(n_noise), psi_(std::move(psi)),
      control_set_(std::move(control_set)) {
    if (n_state_ < 1 || n_noise_ < 1) throw StructuralError("model dimensions must be >= 1");
    if (psi_.size() != n_state_) throw StructuralError("psi must have n_state coordinates");
    if (!psi_.allFinite()) throw DomainError("psi must be finite");
}

int CoefficientModel::out_dim(Coef which) const {
    switch (which) {
        case Coef::a: return n_state_;
        case Coef::b: return n_state_ * n_noise_;
        case Coef::f:
        case Coef::h: return 1;
    }
    return 0;
}

void CoefficientModel::partials(Coef which, double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m,
                                const Control& u, int order, Partials& out) const {
    out.prepare(out_dim(which), n_state_, order);
    compute(which, t, x, m, u, order, out);
}

HSMatrix CoefficientModel::diffusion(double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m,
                                     const Control& u) const {
    Partials p;
    partials(Coef::b, t, x, m, u, 0, p);
    return as_hs(p.value, n_state_, n_noise_);
}

Eigen::VectorXd CoefficientModel::drift(double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m,
                                        const Control& u) const {
    Partials p;
    partials(Coef::a, t, x, m, u, 0, p);
    return p.value;
}

double CoefficientModel::running_cost(double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m,
                                      const Control& u) const {
    Partials p;
    partials(Coef::f, t, x, m, u, 0, p);
    return p.value[0];
}

double CoefficientModel::terminal_cost(const Eigen::Ref<const Eigen::VectorXd>& x, double m) const {
    Partials p;
    partials(Coef::h, 0.0, x, m, Control(), 0, p);
    return p.value[0];
}

bool CoefficientModel::diffusion_control_free() const {
    const auto candidates = control_set_.enumerate(3);
    Partials ref, cur;
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(n_state_, 0.3);
    for (double t : {0.0, 0.5}) {
        partials(Coef::b, t, x, 0.2, candidates.front(), 1, ref);
        for (const auto& u : candidates) {
            partials(Coef::b, t, x, 0.2, u, 1, cur);
            if (cur.value != ref.value || cur.dx != ref.dx || cur.dm != ref.dm) return false;
        }
    }
    return true;
}

namespace {

void validate(const CoefficientModel& model, Coef which, const StateVector& x, const ParticleEnsemble& mu,
              const Control& u) {
    if (x.size() != model.n_state()) throw StructuralError("x has wrong dimension");
    if (mu.dim() != model.n_state()) throw StructuralError("ensemble has wrong dimension");
    if (!x.allFinite()) throw DomainError("x contains NaN or infinite entries");
    if (which != Coef::h) {
        if (u.size() != model.control_dim()) throw StructuralError("control has wrong dimension");
        if (!u.allFinite()) throw DomainError("control contains NaN or infinite entries");
        if (!model.control_set().contains(u, 1e-12)) throw DomainError("control is not in U");
    }
}

Partials evaluate(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                  const ParticleEnsemble& mu, const Control& u, int order) {
    validate(model, which, x, mu, u);
    Partials p;
    model.partials(which, t, x, empirical_mean_statistic(mu, model.psi()), u, order, p);
    return p;
}

}  // namespace

Eigen::VectorXd eval(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                     const ParticleEnsemble& mu, const Control& u) {
    return evaluate(model, which, t, x, mu, u, 0).value;
}

Eigen::MatrixXd deriv_x(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                        const ParticleEnsemble& mu, const Control& u) {
    return evaluate(model, which, t, x, mu, u, 1).dx;
}

std::vector<Eigen::MatrixXd> deriv_xx(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                                      const ParticleEnsemble& mu, const Control& u) {
    return evaluate(model, which, t, x, mu, u, 2).dxx;
}

LionsDerivative deriv_mu(const CoefficientModel& model, Coef which, MeasureKind kind, double t,
                         const StateVector& x, const ParticleEnsemble& mu, const Control& u, const StateVector& y,
                         const StateVector& y2) {
    if (y.size() != model.n_state()) throw StructuralError("y has wrong dimension");
    if (kind == MeasureKind::mu_mu && y2.size() != model.n_state())
        throw StructuralError("mu_mu derivative needs y2 of state dimension");
    const Partials p = evaluate(model, which, t, x, mu, u, 2);
    const Eigen::VectorXd& psi = model.psi();
    const int n = model.n_state();
    const int out = model.out_dim(which);
    LionsDerivative d;
    d.kind = kind;
    // Scalar interaction: the derivative in the measure does not depend on the evaluation
    // points y, y2, so they only enter through the dimension checks above.
    switch (kind) {
        case MeasureKind::mu:
            d.first = p.dm * psi.transpose();
            break;
        case MeasureKind::y_mu:
            d.second.assign(static_cast<std::size_t>(out), Eigen::MatrixXd::Zero(n, n));
            break;
        case MeasureKind::mu_x:
            for (int o = 0; o < out; ++o) d.second.push_back(psi * p.dmx.row(o));
            break;
        case MeasureKind::mu_mu:
            for (int o = 0; o < out; ++o) d.second.push_back(p.dmm[o] * psi * psi.transpose());
            break;
    }
    return d;
}

}  // namespace mvlab
