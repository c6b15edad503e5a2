#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlab/galerkin.hpp"

namespace mvlab {

/// Which probability-space copy an ensemble stands for: the base space, or the independent
/// copies used for the tilde and hat expectations.
enum class CopyTag { base, tilde, hat };

const char* to_string(CopyTag tag);

/// N equally weighted particles in the Galerkin space, stored column-wise (n_state x N).
class ParticleEnsemble {
public:
    ParticleEnsemble() = default;
    ParticleEnsemble(Eigen::MatrixXd particles, CopyTag tag = CopyTag::base);

    int size() const noexcept { return static_cast<int>(particles_.cols()); }
    int dim() const noexcept { return static_cast<int>(particles_.rows()); }
    CopyTag copy_tag() const noexcept { return tag_; }

    const Eigen::MatrixXd& particles() const noexcept { return particles_; }
    Eigen::MatrixXd& particles() noexcept { return particles_; }
    auto particle(int i) const { return particles_.col(i); }

    Eigen::VectorXd mean() const;
    double second_moment() const;

    void write_csv(std::ostream& out) const;

private:
    Eigen::MatrixXd particles_;
    CopyTag tag_ = CopyTag::base;
};

/// m(mu) = (1/N) sum_i <psi, x_i>, accumulated in index order.
double empirical_mean_statistic(const ParticleEnsemble& mu, const Eigen::Ref<const Eigen::VectorXd>& psi);

enum class W2Method { sorted_1d, exact_assignment, sliced };

const char* to_string(W2Method method);

struct W2Result {
    double value = 0.0;
    W2Method method = W2Method::sorted_1d;
};

/// Empirical 2-Wasserstein distance between equal-size ensembles. Exact in one dimension
/// and for N <= exact_limit; sliced estimate with `projections` random directions otherwise.
W2Result wasserstein2(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int exact_limit = 256,
                      int projections = 200, std::uint64_t seed = 0);

/// Minimum-cost perfect matching (Hungarian method) for a square cost matrix.
/// Returns assignment[row] = column.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Same multiset of particles under a uniformly random permutation of indices.
ParticleEnsemble spawn_independent_copy(const ParticleEnsemble& mu, CopyTag tag, RngStream& stream);

/// Uniform random permutation of 0..n-1 driven by the stream.
std::vector<int> random_permutation(int n, RngStream& stream);

}  // namespace mvlab
