#include <cmath>

#include <gtest/gtest.h>

#include "mvlab/errors.hpp"
#include "mvlab/meanfield.hpp"
#include "support/oracles.hpp"

namespace mvlab {
namespace {

Eigen::MatrixXd random_particles(int n, int N, std::uint64_t seed) {
    RngStream s(seed, StreamPurpose::user);
    Eigen::MatrixXd x(n, N);
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < n; ++k) x(k, i) = s.normal();
    return x;
}

TEST(MeanfieldTrivial, ZeroEnsembleHasZeroStatistic) {
    const ParticleEnsemble mu(Eigen::MatrixXd::Zero(2, 5));
    EXPECT_EQ(empirical_mean_statistic(mu, Eigen::Vector2d(1.0, 1.0)), 0.0);
}

TEST(MeanfieldTrivial, ArithmeticMean) {
    Eigen::MatrixXd x(2, 2);
    x << 1, 3, 0, 0;
    EXPECT_EQ(empirical_mean_statistic(ParticleEnsemble(x), Eigen::Vector2d(1.0, 0.0)), 2.0);
}

TEST(Meanfield, StatisticMatchesNaiveLoop) {
    const Eigen::MatrixXd x = random_particles(3, 101, 5);
    const Eigen::Vector3d psi(0.3, -1.2, 2.0);
    double naive = 0.0;
    for (int i = 0; i < 101; ++i)
        for (int k = 0; k < 3; ++k) naive += psi[k] * x(k, i);
    EXPECT_NEAR(empirical_mean_statistic(ParticleEnsemble(x), psi), naive / 101, 1e-15);
}

TEST(MeanfieldTrivial, W2OfIdenticalEnsemblesIsZero) {
    const ParticleEnsemble mu(random_particles(2, 7, 1));
    EXPECT_EQ(wasserstein2(mu, mu).value, 0.0);
}

TEST(MeanfieldTrivial, W2BetweenDiracs) {
    const ParticleEnsemble a(Eigen::Vector2d(1.0, 2.0));
    const ParticleEnsemble b(Eigen::Vector2d(4.0, 6.0));
    EXPECT_DOUBLE_EQ(wasserstein2(a, b).value, 5.0);
}

TEST(Meanfield, W2OneDimensionalCouplings) {
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 0, 1;
    b << 1, 2;
    EXPECT_DOUBLE_EQ(wasserstein2(ParticleEnsemble(a), ParticleEnsemble(b)).value, 1.0);
    EXPECT_DOUBLE_EQ(testing::brute_force_w2(ParticleEnsemble(a), ParticleEnsemble(b)), 1.0);
}

TEST(Meanfield, W2AssignmentMatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ParticleEnsemble mu(random_particles(2, 6, 10 + seed));
        const ParticleEnsemble nu(random_particles(2, 6, 20 + seed));
        const W2Result r = wasserstein2(mu, nu);
        EXPECT_EQ(r.method, W2Method::exact_assignment);
        EXPECT_NEAR(r.value, testing::brute_force_w2(mu, nu), 1e-12);
    }
}

TEST(Meanfield, SlicedW2IsBelowExact) {
    const ParticleEnsemble mu(random_particles(2, 40, 3));
    const ParticleEnsemble nu(random_particles(2, 40, 4));
    const double exact = wasserstein2(mu, nu).value;
    const W2Result sliced = wasserstein2(mu, nu, 10, 400, 9);
    EXPECT_EQ(sliced.method, W2Method::sliced);
    EXPECT_LE(sliced.value, exact + 1e-12);
    EXPECT_GT(sliced.value, 0.3 * exact);
}

TEST(Meanfield, W2RejectsUnequalSizes) {
    EXPECT_THROW(wasserstein2(ParticleEnsemble(Eigen::MatrixXd::Zero(1, 2)), ParticleEnsemble(Eigen::MatrixXd::Zero(1, 3))),
                 UnsupportedError);
}

TEST(MeanfieldTrivial, SingleParticleCopy) {
    const ParticleEnsemble mu(Eigen::Vector2d(1.5, -2.0));
    RngStream s(1, StreamPurpose::permutation);
    const ParticleEnsemble copy = spawn_independent_copy(mu, CopyTag::tilde, s);
    EXPECT_EQ(copy.particles(), mu.particles());
    EXPECT_EQ(copy.copy_tag(), CopyTag::tilde);
}

TEST(MeanfieldTrivial, CopyPreservesMultiset) {
    const ParticleEnsemble mu(random_particles(2, 50, 8));
    RngStream s(2, StreamPurpose::permutation);
    const ParticleEnsemble copy = spawn_independent_copy(mu, CopyTag::hat, s);
    auto sorted = [](const Eigen::MatrixXd& x) {
        std::vector<std::pair<double, double>> v;
        for (int i = 0; i < x.cols(); ++i) v.emplace_back(x(0, i), x(1, i));
        std::sort(v.begin(), v.end());
        return v;
    };
    EXPECT_EQ(sorted(copy.particles()), sorted(mu.particles()));
}

TEST(Meanfield, CopyRequiresNewTag) {
    const ParticleEnsemble mu(Eigen::MatrixXd::Zero(1, 3));
    RngStream s(2, StreamPurpose::permutation);
    EXPECT_THROW(spawn_independent_copy(mu, CopyTag::base, s), DomainError);
}

// Under a uniformly random permutation, E[(1/N) sum_i x_i x~_i] = (sample mean)^2: the
// coupling of an ensemble with an independent copy of its own empirical law.
TEST(Meanfield, CopyCorrelationMatchesSelfCoupling) {
    const int N = 20;
    const int spawns = 20000;
    Eigen::MatrixXd x = random_particles(1, N, 77);
    x.array() += 1.0;
    const ParticleEnsemble mu(x);
    const double analytic = std::pow(x.mean(), 2);
    std::vector<double> corr;
    for (int s = 0; s < spawns; ++s) {
        RngStream stream(s, StreamPurpose::permutation);
        const auto copy = spawn_independent_copy(mu, CopyTag::tilde, stream);
        corr.push_back((x.array() * copy.particles().array()).sum() / N);
    }
    double m = 0.0, v = 0.0;
    for (double c : corr) m += c;
    m /= spawns;
    for (double c : corr) v += (c - m) * (c - m);
    const double se = std::sqrt(v / (spawns - 1) / spawns);
    EXPECT_LT(std::abs(m - analytic), 5.0 * se);
}

TEST(Meanfield, EnsembleRejectsNonFinite) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 2);
    x(0, 1) = std::nan("");
    EXPECT_THROW(ParticleEnsemble{x}, DomainError);
    EXPECT_THROW(ParticleEnsemble(Eigen::MatrixXd(2, 0)), StructuralError);
}

}  // namespace
}  // namespace mvlab
