#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvlab::testing {

double scalar_lq_exact_cost(const ScalarLq& p, double lambda, double T, const std::vector<double>& u) {
    const int M = static_cast<int>(u.size());
    const double dt = T / M;
    const double S = std::exp(lambda * dt);
    double mu = p.mean0;
    double var = p.sd0 * p.sd0;
    double J = 0.0;
    for (int k = 0; k < M; ++k) {
        const double m = mu;  // psi = 1
        J += dt * (0.5 * p.Q * (var + mu * mu) + 0.5 * p.qbar * m * m + 0.5 * p.r * u[k] * u[k]);
        // b = S0 + u R + sigma_x x + w_m m; its mean and variance given the current law.
        const double b_mean = p.S0 + u[k] * p.R + p.sigma_x * mu + p.w_m * m;
        const double b_sq = b_mean * b_mean + p.sigma_x * p.sigma_x * var;
        const double next_mu = S * (mu + (p.A * mu + p.abar * m + p.B * u[k]) * dt);
        const double g = 1.0 + p.A * dt;
        var = S * S * (g * g * var + dt * b_sq);
        mu = next_mu;
    }
    return J + 0.5 * p.H * (var + mu * mu) + 0.5 * p.hbar * mu * mu + p.c * mu;
}

ExhaustiveResult scalar_lq_exhaustive(const ScalarLq& p, double lambda, double T, int M, int points) {
    std::vector<double> values(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) values[static_cast<std::size_t>(i)] = p.lower + (p.upper - p.lower) * i / (points - 1);
    std::vector<int> idx(static_cast<std::size_t>(M), 0);
    std::vector<double> u(static_cast<std::size_t>(M));
    ExhaustiveResult best;
    best.cost = std::numeric_limits<double>::infinity();
    while (true) {
        for (int k = 0; k < M; ++k) u[static_cast<std::size_t>(k)] = values[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
        const double J = scalar_lq_exact_cost(p, lambda, T, u);
        if (J < best.cost) {
            best.cost = J;
            best.control = u;
        }
        int k = 0;
        while (k < M && ++idx[static_cast<std::size_t>(k)] == points) idx[static_cast<std::size_t>(k++)] = 0;
        if (k == M) break;
    }
    return best;
}

double brute_force_w2(const ParticleEnsemble& mu, const ParticleEnsemble& nu) {
    std::vector<int> perm(static_cast<std::size_t>(mu.size()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (int i = 0; i < mu.size(); ++i) s += (mu.particle(i) - nu.particle(perm[static_cast<std::size_t>(i)])).squaredNorm();
        best = std::min(best, s / mu.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best);
}

namespace {
double lc(double v) { return std::log(std::cosh(v)); }
}  // namespace

Eigen::VectorXd FrozenTanh::a(const Eigen::VectorXd& x, double m, const Control& u) const {
    const long n = x.size();
    Eigen::VectorXd out(n);
    for (long k = 0; k < n; ++k) {
        out[k] = -p.kappa * std::tanh(x[k]) + p.alpha * std::tanh(m) * psi[k] +
                 p.alpha_x * std::tanh(m) * std::tanh(x[k]);
        for (long l = 0; l < u.size(); ++l) out[k] += p.B(k, l) * u[l];
    }
    return out;
}

Eigen::MatrixXd FrozenTanh::b(const Eigen::VectorXd& x, double m, const Control& u) const {
    const long n = x.size();
    Eigen::MatrixXd out(n, d);
    for (long k = 0; k < n; ++k) {
        for (long j = 0; j < d; ++j) {
            double v = p.S0(k, j);
            for (long l = 0; l < u.size(); ++l) v += u[l] * p.R[static_cast<std::size_t>(l)](k, j);
            if (k == j) v += (p.v + p.rho * u[0]) * std::sin(x[k]) + p.w * std::tanh(m);
            out(k, j) = v;
        }
    }
    return out;
}

double FrozenTanh::f(const Eigen::VectorXd& x, double m, const Control& u) const {
    double v = p.r_u * u.squaredNorm() / 2 + p.c_m * lc(m);
    for (long k = 0; k < x.size(); ++k) v += p.c_x * lc(x[k]) + p.c_xm * std::tanh(m) * std::tanh(x[k]);
    return v;
}

double FrozenTanh::h(const Eigen::VectorXd& x, double m) const {
    double v = p.c_hm * lc(m - p.m_target);
    for (long k = 0; k < x.size(); ++k) v += p.c_h * lc(x[k] - p.x_target[k]);
    return v;
}

Eigen::VectorXd FrozenLq::a(const Eigen::VectorXd& x, double m, const Control& u) const {
    return p.A1 * x + p.abar * m * psi + p.B * u;
}

Eigen::MatrixXd FrozenLq::b(const Eigen::VectorXd& x, double m, const Control& u) const {
    Eigen::MatrixXd out = p.S0;
    for (long l = 0; l < u.size(); ++l) out += u[l] * p.R[static_cast<std::size_t>(l)];
    for (long k = 0; k < std::min<long>(x.size(), d); ++k) out(k, k) += p.sigma_x * x[k] + p.w_m * m;
    return out;
}

double FrozenLq::f(const Eigen::VectorXd& x, double m, const Control& u) const {
    return 0.5 * x.dot(p.Q * x) + 0.5 * p.qbar * m * m + 0.5 * p.r * u.squaredNorm();
}

double FrozenLq::h(const Eigen::VectorXd& x, double m) const {
    return 0.5 * x.dot(p.H * x) + 0.5 * p.hbar * m * m + p.c.dot(x);
}

Eigen::VectorXd rk4(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& F, Eigen::VectorXd y,
                    double T, int steps) {
    const double h = T / steps;
    for (int s = 0; s < steps; ++s) {
        const double t = s * h;
        const Eigen::VectorXd k1 = F(t, y);
        const Eigen::VectorXd k2 = F(t + h / 2, y + h / 2 * k1);
        const Eigen::VectorXd k3 = F(t + h / 2, y + h / 2 * k2);
        const Eigen::VectorXd k4 = F(t + h, y + h * k3);
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
}

}  // namespace mvlab::testing
