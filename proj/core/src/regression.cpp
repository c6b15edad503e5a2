#include "mvlab/regression.hpp"

#include <cmath>
#include <vector>

#include "mvlab/errors.hpp"

namespace mvlab {

ConditionalExpectation::ConditionalExpectation(const Eigen::MatrixXd& x, int degree, double ridge) {
    if (degree < 0 || degree > 2) throw DomainError("regression degree must be 0, 1 or 2");
    const auto N = x.cols();
    if (N < 1) throw StructuralError("regression needs at least one sample");

    std::vector<Eigen::VectorXd> coords;
    if (degree >= 1) {
        for (Eigen::Index k = 0; k < x.rows(); ++k) {
            const double mu = x.row(k).mean();
            const double sd = std::sqrt((x.row(k).array() - mu).square().mean());
            if (!(sd > 1e-12 * (1.0 + std::abs(mu)))) continue;
            coords.push_back(((x.row(k).array() - mu) / sd).matrix().transpose());
        }
    }
    const auto c = static_cast<Eigen::Index>(coords.size());
    const Eigen::Index p = 1 + (degree >= 1 ? c : 0) + (degree >= 2 ? c * (c + 1) / 2 : 0);
    design_.resize(N, p);
    design_.col(0).setOnes();
    Eigen::Index col = 1;
    if (degree >= 1)
        for (const auto& z : coords) design_.col(col++) = z;
    if (degree >= 2)
        for (Eigen::Index a = 0; a < c; ++a)
            for (Eigen::Index b = a; b < c; ++b) design_.col(col++) = coords[a].cwiseProduct(coords[b]);

    Eigen::MatrixXd gram = design_.transpose() * design_ / static_cast<double>(N);
    for (Eigen::Index j = 1; j < p; ++j) gram(j, j) += ridge;
    normal_.compute(gram);
    if (normal_.info() != Eigen::Success) throw DomainError("regression normal equations are singular");
}

Eigen::MatrixXd ConditionalExpectation::project(const Eigen::MatrixXd& targets) const {
    if (targets.cols() != design_.rows()) throw StructuralError("regression targets must have one column per sample");
    const Eigen::MatrixXd rhs = design_.transpose() * targets.transpose() / static_cast<double>(design_.rows());
    const Eigen::MatrixXd coef = normal_.solve(rhs);  // p x r
    return (design_ * coef).transpose();
}

}  // namespace mvlab
