#include "mvlab/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "mvlab/errors.hpp"

namespace mvlab {

const char* to_string(CopyTag tag) {
    switch (tag) {
        case CopyTag::base: return "base";
        case CopyTag::tilde: return "tilde";
        case CopyTag::hat: return "hat";
    }
    return "unknown";
}

const char* to_string(W2Method method) {
    switch (method) {
        case W2Method::sorted_1d: return "sorted_1d";
        case W2Method::exact_assignment: return "exact_assignment";
        case W2Method::sliced: return "sliced";
    }
    return "unknown";
}

ParticleEnsemble::ParticleEnsemble(Eigen::MatrixXd particles, CopyTag tag)
    : particles_(std::move(particles)), tag_(tag) {
    if (particles_.cols() < 1) throw StructuralError("ensemble needs at least one particle");
    if (!particles_.allFinite()) throw DomainError("ensemble contains non-finite coordinates");
}

Eigen::VectorXd ParticleEnsemble::mean() const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(dim());
    for (int i = 0; i < size(); ++i) s += particles_.col(i);
    return s / static_cast<double>(size());
}

double ParticleEnsemble::second_moment() const {
    double s = 0.0;
    for (int i = 0; i < size(); ++i) s += particles_.col(i).squaredNorm();
    return s / static_cast<double>(size());
}

void ParticleEnsemble::write_csv(std::ostream& out) const {
    out << "particle";
    for (int k = 0; k < dim(); ++k) out << ",x" << k;
    out << '\n';
    out.precision(17);
    for (int i = 0; i < size(); ++i) {
        out << i;
        for (int k = 0; k < dim(); ++k) out << ',' << particles_(k, i);
        out << '\n';
    }
}

double empirical_mean_statistic(const ParticleEnsemble& mu, const Eigen::Ref<const Eigen::VectorXd>& psi) {
    if (psi.size() != mu.dim()) throw StructuralError("empirical_mean_statistic: psi dimension mismatch");
    double s = 0.0;
    const auto& x = mu.particles();
    for (int i = 0; i < mu.size(); ++i) s += psi.dot(x.col(i));
    return s / static_cast<double>(mu.size());
}

namespace {

double sorted_w2_squared(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

std::vector<double> project(const ParticleEnsemble& mu, const Eigen::VectorXd& dir) {
    std::vector<double> out(static_cast<std::size_t>(mu.size()));
    for (int i = 0; i < mu.size(); ++i) out[static_cast<std::size_t>(i)] = dir.dot(mu.particle(i));
    return out;
}

}  // namespace

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw StructuralError("assignment needs a square cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials formulation, 1-based with a virtual column 0.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int row = 1; row <= n; ++row) {
        match[0] = row;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return assignment;
}

W2Result wasserstein2(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int exact_limit, int projections,
                      std::uint64_t seed) {
    if (mu.size() != nu.size())
        throw UnsupportedError("wasserstein2 needs equal particle counts; resample before comparing");
    if (mu.dim() != nu.dim()) throw StructuralError("wasserstein2: dimension mismatch");
    const int n = mu.size();
    if (mu.dim() == 1) {
        std::vector<double> a(mu.particles().data(), mu.particles().data() + n);
        std::vector<double> b(nu.particles().data(), nu.particles().data() + n);
        return {std::sqrt(sorted_w2_squared(std::move(a), std::move(b))), W2Method::sorted_1d};
    }
    if (n <= exact_limit) {
        Eigen::MatrixXd cost(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) cost(i, j) = (mu.particle(i) - nu.particle(j)).squaredNorm();
        const auto assignment = solve_assignment(cost);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += cost(i, assignment[static_cast<std::size_t>(i)]);
        return {std::sqrt(s / n), W2Method::exact_assignment};
    }
    RngStream stream(seed, StreamPurpose::probe, 0x57u);
    double s = 0.0;
    for (int p = 0; p < projections; ++p) {
        Eigen::VectorXd dir(mu.dim());
        for (int k = 0; k < mu.dim(); ++k) dir[k] = stream.normal();
        dir.normalize();
        s += sorted_w2_squared(project(mu, dir), project(nu, dir));
    }
    return {std::sqrt(s / projections), W2Method::sliced};
}

std::vector<int> random_permutation(int n, RngStream& stream) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    // Fisher-Yates with the stream's own bits; independent of the standard library's distributions.
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(stream() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    return perm;
}

ParticleEnsemble spawn_independent_copy(const ParticleEnsemble& mu, CopyTag tag, RngStream& stream) {
    if (tag == mu.copy_tag()) throw DomainError("independent copy must carry a different copy tag");
    const auto perm = random_permutation(mu.size(), stream);
    Eigen::MatrixXd out(mu.dim(), mu.size());
    for (int i = 0; i < mu.size(); ++i) out.col(i) = mu.particle(perm[static_cast<std::size_t>(i)]);
    return ParticleEnsemble(std::move(out), tag);
}

}  // namespace mvlab
