#include "mvlab/galerkin.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mvlab/errors.hpp"

namespace mvlab {

GalerkinSpace::GalerkinSpace(Eigen::VectorXd eigenvalues, Eigen::VectorXd hs_weights)
    : eigenvalues_(std::move(eigenvalues)), hs_weights_(std::move(hs_weights)) {
    if (eigenvalues_.size() < 1) throw StructuralError("n_state must be >= 1");
    if (hs_weights_.size() < 1) throw StructuralError("n_noise must be >= 1");
    for (Eigen::Index k = 0; k < eigenvalues_.size(); ++k) {
        if (!std::isfinite(eigenvalues_[k])) throw DomainError("eigenvalues must be finite");
        if (eigenvalues_[k] > 0.0) throw DomainError("eigenvalues must be <= 0 (contraction semigroup)");
        if (k > 0 && eigenvalues_[k] > eigenvalues_[k - 1])
            throw DomainError("eigenvalues must be sorted non-increasing");
    }
    for (Eigen::Index j = 0; j < hs_weights_.size(); ++j) {
        if (!(hs_weights_[j] > 0.0) || !std::isfinite(hs_weights_[j]))
            throw DomainError("hs_weights must be positive and finite");
    }
}

GalerkinSpace GalerkinSpace::dirichlet_laplacian(int n_state, int n_noise, double viscosity) {
    if (n_state < 1 || n_noise < 1) throw StructuralError("dimensions must be >= 1");
    Eigen::VectorXd lambda(n_state);
    for (int k = 0; k < n_state; ++k) {
        const double wave = std::numbers::pi * (k + 1);
        lambda[k] = -viscosity * wave * wave;
    }
    return GalerkinSpace(std::move(lambda), Eigen::VectorXd::Ones(n_noise));
}

Eigen::VectorXd GalerkinSpace::semigroup_factors(double t) const {
    if (!(t >= 0.0)) throw DomainError("semigroup time must be >= 0");
    return (eigenvalues_ * t).array().exp().matrix();
}

double GalerkinSpace::hs_inner(const Eigen::Ref<const HSMatrix>& b1, const Eigen::Ref<const HSMatrix>& b2) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < b1.cols(); ++j) s += hs_weights_[j] * b1.col(j).dot(b2.col(j));
    return s;
}

void GalerkinSpace::require_state(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) const {
    if (v.size() != n_state())
        throw StructuralError(std::string(what) + ": expected " + std::to_string(n_state()) +
                              " coordinates, got " + std::to_string(v.size()));
}

void GalerkinSpace::require_hs(const Eigen::Ref<const Eigen::MatrixXd>& b, const char* what) const {
    if (b.rows() != n_state() || b.cols() != n_noise())
        throw StructuralError(std::string(what) + ": expected " + std::to_string(n_state()) + "x" +
                              std::to_string(n_noise()) + " Hilbert-Schmidt matrix");
}

bool GalerkinSpace::operator==(const GalerkinSpace& other) const {
    return eigenvalues_ == other.eigenvalues_ && hs_weights_ == other.hs_weights_;
}

StateVector semigroup_apply(const GalerkinSpace& space, double t, const StateVector& v) {
    space.require_state(v, "semigroup_apply");
    return space.semigroup_factors(t).cwiseProduct(v);
}

Eigen::VectorXd sample_noise_increment(const GalerkinSpace& space, double dt, RngStream& stream) {
    if (!(dt > 0.0)) throw DomainError("noise increment needs dt > 0");
    Eigen::VectorXd dw(space.n_noise());
    for (int j = 0; j < space.n_noise(); ++j) dw[j] = std::sqrt(space.hs_weights()[j] * dt) * stream.normal();
    return dw;
}

}  // namespace mvlab
