#include <cmath>
#include <fstream>
#include <sstream>

#include "mvlab/coefficients.hpp"
#include "mvlab/derivative_checks.hpp"
#include "mvlab/errors.hpp"

namespace mvlab {

namespace {

double logcosh(double x) {
    const double ax = std::abs(x);
    return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

double sech2(double x) {
    const double th = std::tanh(x);
    return 1.0 - th * th;
}

Eigen::MatrixXd or_zero(Eigen::MatrixXd m, int rows, int cols, const char* what) {
    if (m.size() == 0) return Eigen::MatrixXd::Zero(rows, cols);
    if (m.rows() != rows || m.cols() != cols)
        throw StructuralError(std::string(what) + " must be " + std::to_string(rows) + "x" + std::to_string(cols));
    if (!m.allFinite()) throw DomainError(std::string(what) + " must be finite");
    return m;
}

std::vector<Eigen::MatrixXd> or_zero(std::vector<Eigen::MatrixXd> list, int count, int rows, int cols,
                                     const char* what) {
    if (list.empty()) return std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(count), Eigen::MatrixXd::Zero(rows, cols));
    if (static_cast<int>(list.size()) != count)
        throw StructuralError(std::string(what) + " needs one matrix per control coordinate");
    for (auto& m : list) m = or_zero(std::move(m), rows, cols, what);
    return list;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

class ScalarInteractionModel final : public CoefficientModel {
public:
    ScalarInteractionModel(int n, int d, Eigen::VectorXd psi, ControlSet set, ScalarInteractionParams p)
        : CoefficientModel(Family::scalar_interaction, n, d, std::move(psi), std::move(set)), p_(std::move(p)) {
        const int c = control_dim();
        p_.B = or_zero(std::move(p_.B), n, c, "B");
        p_.S0 = or_zero(std::move(p_.S0), n, d, "S0");
        p_.R = or_zero(std::move(p_.R), c, n, d, "R");
        if (p_.x_target.size() == 0) p_.x_target = Eigen::VectorXd::Zero(n);
        if (p_.x_target.size() != n) throw StructuralError("x_target must have n_state coordinates");
        for (double v : {p_.kappa, p_.alpha, p_.alpha_x, p_.v, p_.rho, p_.w, p_.c_x, p_.r_u, p_.c_m, p_.c_xm, p_.c_h,
                         p_.c_hm, p_.m_target})
            require_finite(v, "scalar_interaction parameter");
    }

protected:
    void compute(Coef which, double, const Eigen::Ref<const Eigen::VectorXd>& x, double m, const Control& u,
                 int order, Partials& out) const override {
        const int n = n_state();
        const double tm = std::tanh(m);
        const double sm = 1.0 - tm * tm;
        const double sm_m = -2.0 * tm * sm;
        const auto& psi = this->psi();
        switch (which) {
            case Coef::a: {
                const double gain = -p_.kappa + p_.alpha_x * tm;
                out.value = p_.B * u;
                for (int k = 0; k < n; ++k) {
                    const double tk = std::tanh(x[k]);
                    const double sk = 1.0 - tk * tk;
                    out.value[k] += gain * tk + p_.alpha * tm * psi[k];
                    if (order >= 1) {
                        out.dx(k, k) = gain * sk;
                        out.dm[k] = p_.alpha * sm * psi[k] + p_.alpha_x * sm * tk;
                    }
                    if (order >= 2) {
                        out.dxx[k](k, k) = gain * (-2.0 * tk * sk);
                        out.dmx(k, k) = p_.alpha_x * sm * sk;
                        out.dmm[k] = (p_.alpha * psi[k] + p_.alpha_x * tk) * sm_m;
                    }
                }
                break;
            }
            case Coef::b: {
                Eigen::Map<Eigen::MatrixXd> b(out.value.data(), n, n_noise());
                b = p_.S0;
                for (int l = 0; l < control_dim(); ++l) b += u[l] * p_.R[l];
                const double amp = p_.v + p_.rho * u[0];
                for (int k = 0; k < std::min(n, n_noise()); ++k) {
                    const int idx = k + n * k;
                    b(k, k) += amp * std::sin(x[k]) + p_.w * tm;
                    if (order >= 1) {
                        out.dx(idx, k) = amp * std::cos(x[k]);
                        out.dm[idx] = p_.w * sm;
                    }
                    if (order >= 2) {
                        out.dxx[idx](k, k) = -amp * std::sin(x[k]);
                        out.dmm[idx] = p_.w * sm_m;
                    }
                }
                break;
            }
            case Coef::f: {
                double sum_tau = 0.0, val = 0.0;
                for (int k = 0; k < n; ++k) {
                    sum_tau += std::tanh(x[k]);
                    val += p_.c_x * logcosh(x[k]);
                }
                val += 0.5 * p_.r_u * u.squaredNorm() + p_.c_m * logcosh(m) + p_.c_xm * tm * sum_tau;
                out.value[0] = val;
                if (order >= 1) {
                    for (int k = 0; k < n; ++k) {
                        const double tk = std::tanh(x[k]);
                        const double sk = 1.0 - tk * tk;
                        out.dx(0, k) = p_.c_x * tk + p_.c_xm * tm * sk;
                        if (order >= 2) {
                            out.dxx[0](k, k) = p_.c_x * sk + p_.c_xm * tm * (-2.0 * tk * sk);
                            out.dmx(0, k) = p_.c_xm * sm * sk;
                        }
                    }
                    out.dm[0] = p_.c_m * tm + p_.c_xm * sm * sum_tau;
                    if (order >= 2) out.dmm[0] = p_.c_m * sm + p_.c_xm * sm_m * sum_tau;
                }
                break;
            }
            case Coef::h: {
                double val = p_.c_hm * logcosh(m - p_.m_target);
                for (int k = 0; k < n; ++k) {
                    const double e = x[k] - p_.x_target[k];
                    val += p_.c_h * logcosh(e);
                    if (order >= 1) out.dx(0, k) = p_.c_h * std::tanh(e);
                    if (order >= 2) out.dxx[0](k, k) = p_.c_h * sech2(e);
                }
                out.value[0] = val;
                if (order >= 1) out.dm[0] = p_.c_hm * std::tanh(m - p_.m_target);
                if (order >= 2) out.dmm[0] = p_.c_hm * sech2(m - p_.m_target);
                break;
            }
        }
    }

private:
    ScalarInteractionParams p_;
};

class LinearQuadraticModel : public CoefficientModel {
public:
    LinearQuadraticModel(Family family, int n, int d, Eigen::VectorXd psi, ControlSet set, LinearQuadraticParams p)
        : CoefficientModel(family, n, d, std::move(psi), std::move(set)), p_(std::move(p)) {
        const int c = control_dim();
        p_.A1 = or_zero(std::move(p_.A1), n, n, "A1");
        p_.B = or_zero(std::move(p_.B), n, c, "B");
        p_.S0 = or_zero(std::move(p_.S0), n, d, "S0");
        p_.R = or_zero(std::move(p_.R), c, n, d, "R");
        p_.Q = or_zero(std::move(p_.Q), n, n, "Q");
        p_.H = or_zero(std::move(p_.H), n, n, "H");
        if (p_.c.size() == 0) p_.c = Eigen::VectorXd::Zero(n);
        if (p_.c.size() != n) throw StructuralError("c must have n_state coordinates");
        // Only the symmetric parts of Q and H matter in the quadratic forms.
        p_.Q = 0.5 * (p_.Q + p_.Q.transpose()).eval();
        p_.H = 0.5 * (p_.H + p_.H.transpose()).eval();
        for (double v : {p_.abar, p_.sigma_x, p_.w_m, p_.qbar, p_.r, p_.hbar}) require_finite(v, "LQ parameter");
    }

    const LinearQuadraticParams& params() const noexcept { return p_; }

protected:
    virtual Eigen::Vector3d scales(double) const { return Eigen::Vector3d::Ones(); }

    void compute(Coef which, double t, const Eigen::Ref<const Eigen::VectorXd>& x, double m, const Control& u,
                 int order, Partials& out) const override {
        const int n = n_state();
        switch (which) {
            case Coef::a: {
                const Eigen::Vector3d s = scales(t);
                out.value = s[0] * (p_.A1 * x + p_.abar * m * psi()) + s[2] * (p_.B * u);
                if (order >= 1) {
                    out.dx = s[0] * p_.A1;
                    out.dm = s[0] * p_.abar * psi();
                }
                break;
            }
            case Coef::b: {
                const Eigen::Vector3d s = scales(t);
                Eigen::Map<Eigen::MatrixXd> b(out.value.data(), n, n_noise());
                b = s[1] * p_.S0;
                for (int l = 0; l < control_dim(); ++l) b += s[2] * u[l] * p_.R[l];
                for (int k = 0; k < std::min(n, n_noise()); ++k) {
                    b(k, k) += s[1] * (p_.sigma_x * x[k] + p_.w_m * m);
                    if (order >= 1) {
                        out.dx(k + n * k, k) = s[1] * p_.sigma_x;
                        out.dm[k + n * k] = s[1] * p_.w_m;
                    }
                }
                break;
            }
            case Coef::f:
                out.value[0] = 0.5 * x.dot(p_.Q * x) + 0.5 * p_.qbar * m * m + 0.5 * p_.r * u.squaredNorm();
                if (order >= 1) {
                    out.dx.row(0) = (p_.Q * x).transpose();
                    out.dm[0] = p_.qbar * m;
                }
                if (order >= 2) {
                    out.dxx[0] = p_.Q;
                    out.dmm[0] = p_.qbar;
                }
                break;
            case Coef::h:
                out.value[0] = 0.5 * x.dot(p_.H * x) + 0.5 * p_.hbar * m * m + p_.c.dot(x);
                if (order >= 1) {
                    out.dx.row(0) = (p_.H * x + p_.c).transpose();
                    out.dm[0] = p_.hbar * m;
                }
                if (order >= 2) {
                    out.dxx[0] = p_.H;
                    out.dmm[0] = p_.hbar;
                }
                break;
        }
    }

private:
    LinearQuadraticParams p_;
};

class CustomTableModel final : public LinearQuadraticModel {
public:
    CustomTableModel(int n, int d, Eigen::VectorXd psi, ControlSet set, LinearQuadraticParams p,
                     TableSchedule schedule)
        : LinearQuadraticModel(Family::custom_table, n, d, std::move(psi), std::move(set), std::move(p)),
          schedule_(std::move(schedule)) {}

protected:
    Eigen::Vector3d scales(double t) const override { return schedule_.at(t); }

private:
    TableSchedule schedule_;
};

ModelPtr finish(ModelPtr model, const ProbeSettings& probe) {
    if (probe.enabled) {
        const LipschitzReport report = probe_lipschitz(*model, probe);
        if (!report.passed)
            throw DomainError(std::string("Lipschitz probe failed for coefficient ") + to_string(report.worst) +
                              ": ratio " + std::to_string(report.max_ratio) + " exceeds bound " +
                              std::to_string(probe.bound));
    }
    return model;
}

}  // namespace

TableSchedule TableSchedule::from_csv(std::istream& in) {
    TableSchedule s;
    std::string line;
    if (!std::getline(in, line)) throw StructuralError("schedule CSV is empty");
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double vals[4];
        for (int c = 0; c < 4; ++c) {
            if (!std::getline(ss, cell, ',')) throw StructuralError("schedule row " + std::to_string(row) + " needs 4 columns");
            try {
                vals[c] = std::stod(cell);
            } catch (const std::exception&) {
                throw DomainError("schedule row " + std::to_string(row) + " has a non-numeric cell");
            }
            require_finite(vals[c], "schedule entry");
        }
        if (!s.t.empty() && vals[0] <= s.t.back()) throw DomainError("schedule knots must be increasing");
        s.t.push_back(vals[0]);
        s.drift_scale.push_back(vals[1]);
        s.noise_scale.push_back(vals[2]);
        s.control_scale.push_back(vals[3]);
    }
    if (s.t.empty()) throw StructuralError("schedule has no rows");
    return s;
}

TableSchedule TableSchedule::from_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open schedule file " + path);
    return from_csv(in);
}

Eigen::Vector3d TableSchedule::at(double time) const {
    std::size_t idx = 0;
    while (idx + 1 < t.size() && t[idx + 1] <= time) ++idx;
    return {drift_scale[idx], noise_scale[idx], control_scale[idx]};
}

ModelPtr make_scalar_interaction(int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set,
                                 ScalarInteractionParams params, const ProbeSettings& probe) {
    return finish(std::make_shared<ScalarInteractionModel>(n_state, n_noise, std::move(psi), std::move(control_set),
                                                           std::move(params)),
                  probe);
}

ModelPtr make_linear_quadratic(int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set,
                               LinearQuadraticParams params, const ProbeSettings& probe) {
    return finish(std::make_shared<LinearQuadraticModel>(Family::linear_quadratic, n_state, n_noise, std::move(psi),
                                                         std::move(control_set), std::move(params)),
                  probe);
}

ModelPtr make_custom_table(int n_state, int n_noise, Eigen::VectorXd psi, ControlSet control_set,
                           LinearQuadraticParams params, TableSchedule schedule, const ProbeSettings& probe) {
    if (schedule.t.empty()) throw StructuralError("custom_table needs a nonempty schedule");
    return finish(std::make_shared<CustomTableModel>(n_state, n_noise, std::move(psi), std::move(control_set),
                                                     std::move(params), std::move(schedule)),
                  probe);
}

const LinearQuadraticParams* lq_parameters(const CoefficientModel& model) {
    if (model.family() != Family::linear_quadratic) return nullptr;
    return &static_cast<const LinearQuadraticModel&>(model).params();
}

}  // namespace mvlab
