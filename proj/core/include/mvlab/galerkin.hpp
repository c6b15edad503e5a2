#pragma once

#include <Eigen/Dense>

#include "mvlab/rng.hpp"

namespace mvlab {

/// Coefficients of an H-valued quantity in the retained eigenbasis.
using StateVector = Eigen::VectorXd;
/// Hilbert-Schmidt operator from the truncated noise space into H: n_state x n_noise.
using HSMatrix = Eigen::MatrixXd;

/// Spectral truncation of the state space H, the noise space, the generator A and S(t).
///
/// A is diagonal and non-positive in the retained basis, so S(t) acts coordinatewise by
/// exp(lambda_k t) and A* = A. The cylindrical Wiener process is truncated to n_noise scalar
/// Brownian motions with variances hs_weights_j per unit time; the Hilbert-Schmidt inner
/// product is weighted accordingly.
class GalerkinSpace {
public:
    GalerkinSpace(Eigen::VectorXd eigenvalues, Eigen::VectorXd hs_weights);

    /// Canonical Dirichlet Laplacian on (0, 1): lambda_k = -viscosity * (pi k)^2.
    static GalerkinSpace dirichlet_laplacian(int n_state, int n_noise, double viscosity);

    int n_state() const noexcept { return static_cast<int>(eigenvalues_.size()); }
    int n_noise() const noexcept { return static_cast<int>(hs_weights_.size()); }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
    const Eigen::VectorXd& hs_weights() const noexcept { return hs_weights_; }

    /// Diagonal of S(t).
    Eigen::VectorXd semigroup_factors(double t) const;

    /// Hilbert-Schmidt inner product sum_{k,j} w_j B1_kj B2_kj.
    double hs_inner(const Eigen::Ref<const HSMatrix>& b1, const Eigen::Ref<const HSMatrix>& b2) const;

    void require_state(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) const;
    void require_hs(const Eigen::Ref<const Eigen::MatrixXd>& b, const char* what) const;

    bool operator==(const GalerkinSpace& other) const;

private:
    Eigen::VectorXd eigenvalues_;
    Eigen::VectorXd hs_weights_;
};

/// S(t) v.
StateVector semigroup_apply(const GalerkinSpace& space, double t, const StateVector& v);

/// Independent increments with variance hs_weights_j * dt.
Eigen::VectorXd sample_noise_increment(const GalerkinSpace& space, double dt, RngStream& stream);

}  // namespace mvlab
