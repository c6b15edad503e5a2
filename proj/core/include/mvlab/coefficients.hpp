#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlab/control.hpp"
#include "mvlab/galerkin.hpp"
#include "mvlab/meanfield.hpp"

namespace mvlab {

/// Which coefficient of the control problem: drift a, diffusion b, running cost f, terminal cost h.
enum class Coef { a, b, f, h };
enum class Family { scalar_interaction, linear_quadratic, custom_table };
/// Lions derivative kinds: d_mu phi(y), d_y d_mu phi(y), d_mu d_x phi(y), d_mu^2 phi(y1, y2).
enum class MeasureKind { mu, y_mu, mu_x, mu_mu };

const char* to_string(Coef which);
const char* to_string(Family family);
const char* to_string(MeasureKind kind);

/// Partial derivatives of a coefficient written as phi(t, x, m, u), where m = m(mu) is the
/// scalar interaction statistic. Vector and matrix valued coefficients are flattened: a has
/// n outputs, b has n*d outputs with index k + n*j (column-major), f and h have one.
struct Partials {
    Eigen::VectorXd value;             // out
    Eigen::MatrixXd dx;                // out x n
    std::vector<Eigen::MatrixXd> dxx;  // out matrices, each n x n
    Eigen::VectorXd dm;                // out
    Eigen::MatrixXd dmx;               // out x n
    Eigen::VectorXd dmm;               // out

    void prepare(int out, int n, int order);
};

/// Coefficients (a, b, f, h) whose measure argument enters only through
/// m(mu) = (1/N) sum_i <psi, x_i>. Every Lions derivative is then a closed-form expression
/// in the m-partials, which is how deriv_mu is implemented for all families.
class CoefficientModel {
public:
    CoefficientModel(Family family, int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set);
    virtual ~CoefficientModel() = default;

    Family family() const noexcept { return family_; }
    int n_state() const noexcept { return n_state_; }
    int n_noise() const noexcept { return n_noise_; }
    int control_dim() const noexcept { return control_set_.dim(); }
    const Eigen::VectorXd& psi() const noexcept { return psi_; }
    const ControlSet& control_set() const noexcept { return control_set_; }
    int out_dim(Coef which) const;

    /// Hot-path evaluation without validation. order 0 fills value, 1 adds dx and dm,
    /// 2 adds dxx, dmx and dmm. For h the control and time are ignored.
    void partials(Coef which, double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m, const Control& u,
                  int order, Partials& out) const;

    /// Diffusion value as an n x d matrix.
    HSMatrix diffusion(double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m, const Control& u) const;
    Eigen::VectorXd drift(double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m, const Control& u) const;
    double running_cost(double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m, const Control& u) const;
    double terminal_cost(const Eigen::Ref<const Eigen::VectorXd>& x, double m) const;

    /// True when b does not depend on u (probed on the control set's candidate points).
    bool diffusion_control_free() const;

protected:
    virtual void compute(Coef which, double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m,
                         const Control& u, int order, Partials& out) const = 0;

private:
    Family family_;
    int n_state_;
    int n_noise_;
    Eigen::VectorXd psi_;
    ControlSet control_set_;
};

using ModelPtr = std::shared_ptr<const CoefficientModel>;

/// Flattened b-vector viewed as an n x d matrix.
inline Eigen::Map<const Eigen::MatrixXd> as_hs(const Eigen::VectorXd& flat, int n, int d) {
    return Eigen::Map<const Eigen::MatrixXd>(flat.data(), n, d);
}

/// Validated evaluation at a measure given by an ensemble. Throws DomainError when u is not
/// admissible or an input is not finite, StructuralError on dimension mismatch.
Eigen::VectorXd eval(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                     const ParticleEnsemble& mu, const Control& u);
/// First Frechet derivative in x: out x n.
Eigen::MatrixXd deriv_x(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                        const ParticleEnsemble& mu, const Control& u);
/// Second Frechet derivative in x: one symmetric n x n matrix per output component.
std::vector<Eigen::MatrixXd> deriv_xx(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                                      const ParticleEnsemble& mu, const Control& u);

struct LionsDerivative {
    MeasureKind kind = MeasureKind::mu;
    /// kind == mu: out x n matrix whose row o is d_mu phi_o(mu)(y).
    Eigen::MatrixXd first;
    /// Other kinds: one n x n matrix per output component.
    std::vector<Eigen::MatrixXd> second;
};

/// Closed-form Lions derivative at (t, x, mu, u) evaluated at y (and y2 for mu_mu).
LionsDerivative deriv_mu(const CoefficientModel& model, Coef which, MeasureKind kind, double t, const StateVector& x,
                         const ParticleEnsemble& mu, const Control& u, const StateVector& y,
                         const StateVector& y2 = StateVector());

// ---------------------------------------------------------------------------------------------
// Families

/// Bounded tanh-saturated family used as the nonlinear benchmark. With tau = tanh:
///   a_k  = -kappa tau(x_k) + alpha tau(m) psi_k + alpha_x tau(m) tau(x_k) + (B u)_k
///   b_kj = S0_kj + sum_l u_l R_l(k, j) + [k == j] ((v + rho u_0) sin x_k + w tau(m))
///   f    = c_x sum_k logcosh x_k + r_u |u|^2 / 2 + c_m logcosh m + c_xm tau(m) sum_k tau(x_k)
///   h    = c_h sum_k logcosh(x_k - x*_k) + c_hm logcosh(m - m*)
struct ScalarInteractionParams {
    double kappa = 1.0;
    double alpha = 0.5;
    double alpha_x = 0.3;
    Eigen::MatrixXd B;               // n x c, zero if empty
    Eigen::MatrixXd S0;              // n x d, zero if empty
    std::vector<Eigen::MatrixXd> R;  // c matrices n x d, zero if empty
    double v = 0.2;
    double rho = 0.0;
    double w = 0.1;
    double c_x = 1.0;
    double r_u = 0.1;
    double c_m = 0.5;
    double c_xm = 0.2;
    double c_h = 1.0;
    double c_hm = 0.5;
    Eigen::VectorXd x_target;  // zero if empty
    double m_target = 0.0;
};

/// Linear-quadratic mean-field family with an analytic adjoint:
///   a = A1 x + abar m psi + B u
///   b = S0 + sum_l u_l R_l + sigma_x E diag(x) + w_m m E,   E_kj = [k == j]
///   f = x'Qx/2 + qbar m^2/2 + r |u|^2/2,   h = x'Hx/2 + hbar m^2/2 + <c, x>
struct LinearQuadraticParams {
    Eigen::MatrixXd A1;  // n x n, zero if empty
    double abar = 0.0;
    Eigen::MatrixXd B;               // n x c
    Eigen::MatrixXd S0;              // n x d
    std::vector<Eigen::MatrixXd> R;  // c matrices n x d
    double sigma_x = 0.0;
    double w_m = 0.0;
    Eigen::MatrixXd Q;  // n x n
    double qbar = 0.0;
    double r = 0.0;
    Eigen::MatrixXd H;  // n x n
    double hbar = 0.0;
    Eigen::VectorXd c;  // n
};

/// Piecewise-constant multipliers for the custom_table family, read from CSV with header
/// t,drift_scale,noise_scale,control_scale. The value at time t is the row with the largest
/// knot not exceeding t.
struct TableSchedule {
    std::vector<double> t;
    std::vector<double> drift_scale;
    std::vector<double> noise_scale;
    std::vector<double> control_scale;

    static TableSchedule from_csv(std::istream& in);
    static TableSchedule from_csv_file(const std::string& path);
    /// (drift, noise, control) multipliers at time t.
    Eigen::Vector3d at(double t) const;
};

/// Randomised Lipschitz probe applied when a family is built.
struct ProbeSettings {
    bool enabled = true;
    double bound = 1e3;
    double radius = 3.0;
    int pairs = 1000;
    std::uint64_t seed = 0x11;
};

ModelPtr make_scalar_interaction(int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set,
                                 ScalarInteractionParams params, const ProbeSettings& probe = {});
ModelPtr make_linear_quadratic(int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set,
                               LinearQuadraticParams params, const ProbeSettings& probe = {});
ModelPtr make_custom_table(int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set,
                           LinearQuadraticParams params, TableSchedule schedule, const ProbeSettings& probe = {});

/// Parameters of the LQ family, or nullptr for other families.
const LinearQuadraticParams* lq_parameters(const CoefficientModel& model);

}  // namespace mvlab
