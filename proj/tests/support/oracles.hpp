#pragma once

#include <functional>
#include <vector>

#include "benchmark_models.hpp"

namespace mvlab::testing {

/// Exact cost of a common open-loop control for the scalar LQ problem in the mean-field limit,
/// propagated through the exponential-Euler scheme by its mean and variance recursion.
double scalar_lq_exact_cost(const ScalarLq& p, double lambda, double T, const std::vector<double>& u);

struct ExhaustiveResult {
    std::vector<double> control;
    double cost = 0.0;
};

/// Minimises scalar_lq_exact_cost over every control taking `points` evenly spaced values of
/// [lower, upper] at each of the M steps.
ExhaustiveResult scalar_lq_exhaustive(const ScalarLq& p, double lambda, double T, int M, int points);

/// W2 by enumerating all couplings (permutations); only for tiny ensembles.
double brute_force_w2(const ParticleEnsemble& mu, const ParticleEnsemble& nu);

/// Straight re-implementation of the tanh-interaction coefficient values.
struct FrozenTanh {
    ScalarInteractionParams p;
    Eigen::VectorXd psi;
    int d = 0;

    Eigen::VectorXd a(const Eigen::VectorXd& x, double m, const Control& u) const;
    Eigen::MatrixXd b(const Eigen::VectorXd& x, double m, const Control& u) const;
    double f(const Eigen::VectorXd& x, double m, const Control& u) const;
    double h(const Eigen::VectorXd& x, double m) const;
};

/// Straight re-implementation of the LQ coefficient values.
struct FrozenLq {
    LinearQuadraticParams p;
    Eigen::VectorXd psi;
    int d = 0;

    Eigen::VectorXd a(const Eigen::VectorXd& x, double m, const Control& u) const;
    Eigen::MatrixXd b(const Eigen::VectorXd& x, double m, const Control& u) const;
    double f(const Eigen::VectorXd& x, double m, const Control& u) const;
    double h(const Eigen::VectorXd& x, double m) const;
};

/// Classical RK4 for y' = F(t, y) on [0, T] with `steps` steps; returns y(T).
Eigen::VectorXd rk4(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& F, Eigen::VectorXd y0,
                    double T, int steps);

}  // namespace mvlab::testing
