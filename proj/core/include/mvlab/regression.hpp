#pragma once

#include <Eigen/Dense>

namespace mvlab {

/// Least-squares projection onto polynomials of total degree <= 2 (or 1) in standardised
/// state coordinates: the Monte-Carlo surrogate for E[ . | x_k].
///
/// Coordinates with (numerically) zero spread are dropped, so a deterministic ensemble
/// reduces to the constant basis. The normal equations carry a ridge term `ridge` on the
/// non-constant features.
class ConditionalExpectation {
public:
    ConditionalExpectation(const Eigen::MatrixXd& x, int degree = 2, double ridge = 1e-8);

    int basis_size() const noexcept { return static_cast<int>(design_.cols()); }

    /// targets: r x N (one row per scalar target, one column per particle); returns the
    /// fitted values with the same shape.
    Eigen::MatrixXd project(const Eigen::MatrixXd& targets) const;

private:
    Eigen::MatrixXd design_;  // N x p
    Eigen::LDLT<Eigen::MatrixXd> normal_;
};

}  // namespace mvlab
