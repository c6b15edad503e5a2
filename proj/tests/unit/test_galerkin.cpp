#include <cmath>

#include <gtest/gtest.h>

#include "mvlab/errors.hpp"
#include "mvlab/galerkin.hpp"

namespace mvlab {
namespace {

GalerkinSpace two_mode() { return GalerkinSpace(Eigen::Vector2d(-1.0, -4.0), Eigen::VectorXd::Ones(2)); }

TEST(GalerkinTrivial, ZeroTimeIsIdentity) {
    const StateVector v = Eigen::Vector2d(1.0, 2.0);
    EXPECT_EQ(semigroup_apply(two_mode(), 0.0, v), v);
}

TEST(GalerkinTrivial, DiagonalExponential) {
    const StateVector out = semigroup_apply(two_mode(), 1.0, Eigen::Vector2d(1.0, 1.0));
    EXPECT_DOUBLE_EQ(out[0], std::exp(-1.0));
    EXPECT_DOUBLE_EQ(out[1], std::exp(-4.0));
}

TEST(GalerkinTrivial, SemigroupLaw) {
    const GalerkinSpace space(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Ones(1));
    const StateVector v = Eigen::VectorXd::Ones(1);
    const StateVector twice = semigroup_apply(space, 0.5, semigroup_apply(space, 0.5, v));
    EXPECT_NEAR(twice[0], semigroup_apply(space, 1.0, v)[0], 1e-15);
}

TEST(GalerkinTrivial, NoiseIncrementIsReproducible) {
    const GalerkinSpace space = two_mode();
    RngStream s1(42, StreamPurpose::noise, 3, 5);
    RngStream s2(42, StreamPurpose::noise, 3, 5);
    EXPECT_EQ(sample_noise_increment(space, 1.0, s1), sample_noise_increment(space, 1.0, s2));
}

TEST(Galerkin, NoiseIncrementMoments) {
    const GalerkinSpace space(Eigen::Vector2d(-1.0, -2.0), Eigen::Vector2d(1.0, 0.25));
    const double dt = 0.5;
    const int draws = 1000000;
    RngStream stream(7, StreamPurpose::user);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
    for (int i = 0; i < draws; ++i) {
        const Eigen::VectorXd dw = sample_noise_increment(space, dt, stream);
        sum += dw;
        sq += dw.cwiseProduct(dw);
    }
    for (int j = 0; j < 2; ++j) {
        const double var = space.hs_weights()[j] * dt;
        EXPECT_LT(std::abs(sum[j] / draws), 4.0 * std::sqrt(var / draws));
        EXPECT_NEAR(sq[j] / draws / var, 1.0, 0.01);
    }
}

TEST(Galerkin, DirichletLaplacianEigenvalues) {
    const auto space = GalerkinSpace::dirichlet_laplacian(3, 2, 0.1);
    for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(space.eigenvalues()[k], -0.1 * std::pow(M_PI * (k + 1), 2));
    EXPECT_EQ(space.n_noise(), 2);
}

TEST(Galerkin, WeightedHilbertSchmidtInner) {
    const GalerkinSpace space(Eigen::Vector2d(-1.0, -2.0), Eigen::Vector2d(2.0, 0.5));
    Eigen::MatrixXd b1(2, 2), b2(2, 2);
    b1 << 1, 2, 3, 4;
    b2 << 5, 6, 7, 8;
    EXPECT_DOUBLE_EQ(space.hs_inner(b1, b2), 2.0 * (5 + 21) + 0.5 * (12 + 32));
}

TEST(Galerkin, RejectsInvalidInput) {
    EXPECT_THROW(GalerkinSpace(Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Ones(1)), DomainError);
    EXPECT_THROW(GalerkinSpace(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, -1.0)), DomainError);
    EXPECT_THROW(semigroup_apply(two_mode(), -1.0, Eigen::Vector2d(1, 1)), DomainError);
    EXPECT_THROW(semigroup_apply(two_mode(), 1.0, Eigen::Vector3d(1, 1, 1)), StructuralError);
    RngStream s(1, StreamPurpose::user);
    EXPECT_THROW(sample_noise_increment(two_mode(), 0.0, s), DomainError);
}

}  // namespace
}  // namespace mvlab
