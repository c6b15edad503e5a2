#pragma once

#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlab/forward.hpp"
#include "mvlab/variation.hpp"

namespace mvlab {

// ---------------------------------------------------------------------------------------------
// First-order adjoint

enum class FirstAdjointMethod { picard_regression, lq_closed_form };
const char* to_string(FirstAdjointMethod method);

struct AdjointOptions {
    int max_iterations = 40;
    /// Stop once the surrogate distance between successive iterates falls below
    /// tolerance * (1 + size of the current iterate).
    double tolerance = 1e-9;
    int regression_degree = 2;
    double ridge = 1e-8;
    /// Consecutive non-contracting iterates that trigger PicardDivergence.
    int divergence_window = 3;
    Execution exec{};
};

/// Discrete adjoint pair along a base path. Step k regresses S(dt) p_{k+1} on the state x_k:
///   p_pred[k] = E[S p_{k+1} | x_k],   q[k]_{.j} = E[(S p_{k+1} - p_pred[k]) dW_j | x_k] / (w_j dt),
///   p[k] = p_pred[k] + dt * driver[k],
/// and the driver collects a_x' p_pred + b_x' q - f_x plus the mean-field term
/// psi * mean(<a_m, p_pred> + <b_m, q>_w - f_m).
struct FirstAdjointPath {
    FirstAdjointMethod method = FirstAdjointMethod::picard_regression;
    double dt = 0.0;
    std::vector<Eigen::MatrixXd> p;           // M+1 blocks, n x N
    std::vector<Eigen::MatrixXd> p_pred;      // M blocks, n x N
    std::vector<Eigen::MatrixXd> q;           // M blocks, (n d) x N with row k + n j
    std::vector<Eigen::MatrixXd> driver;      // M blocks, n x N
    std::vector<Eigen::VectorXd> mean_field;  // M vectors, n
    /// lq_closed_form only: p[k] = -(gamma[k] x + gamma_affine[k]).
    std::vector<Eigen::MatrixXd> gamma;
    std::vector<Eigen::VectorXd> gamma_affine;
    int iterations = 0;
    std::vector<double> distances;  // surrogate distance between iterates l and l-1
    bool converged = false;

    int steps() const { return static_cast<int>(p_pred.size()); }
    /// q[k] for particle i as an n x d matrix.
    HSMatrix q_matrix(int k, int i, int n, int d) const;
};

FirstAdjointPath solve_first_adjoint(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                     const ControlPath& ubar, FirstAdjointMethod method,
                                     const AdjointOptions& options = {});

/// The closed form when it applies (LQ family, common controls), the Picard solver otherwise.
FirstAdjointPath solve_first_adjoint_auto(const CoefficientModel& model, const GalerkinSpace& space,
                                          const StatePath& base, const ControlPath& ubar,
                                          const AdjointOptions& options = {});

/// max_k sqrt(mean |dp_k|^2) + sqrt(sum_k mean |dq_k|^2 dt) between two adjoint paths, over
/// steps [first_step, M].
double adjoint_distance(const FirstAdjointPath& a, const FirstAdjointPath& b, double dt, int first_step = 0);

/// Relative RMSE of `approx` against `reference` for p (all steps) and q.
struct AdjointComparison {
    double p_relative_rmse = 0.0;
    double q_relative_rmse = 0.0;
};
AdjointComparison compare_adjoints(const FirstAdjointPath& approx, const FirstAdjointPath& reference);

struct ContractionSplit {
    double horizon = 0.0;  // T - T1
    int start_step = 0;
    std::vector<double> distances;
    double factor = 0.0;
    bool diverged = false;
};

struct ContractionReport {
    std::vector<ContractionSplit> splits;  // sorted by increasing horizon
    bool nondecreasing = false;
    double smallest_factor = 0.0;
};

/// Empirical contraction factor of the mean-field Picard map restricted to [T - L, T] for
/// each requested horizon L. The factor is the largest ratio d_{l+1} / d_l over the first
/// `probe_iterations` iterations (0 when the first distance already vanishes).
ContractionReport picard_contraction_probe(const CoefficientModel& model, const GalerkinSpace& space,
                                           const StatePath& base, const ControlPath& ubar,
                                           std::vector<double> horizons, int probe_iterations = 3,
                                           const AdjointOptions& options = {});

void write_adjoint_csv(const FirstAdjointPath& adjoint, const TimeGrid& grid, std::ostream& out);

// ---------------------------------------------------------------------------------------------
// Second-order adjoint

enum class SecondAdjointMethod { deterministic_lyapunov, regression };
const char* to_string(SecondAdjointMethod method);

/// Matrix-valued adjoint. Matrices are stored column-wise per particle as n^2 x cols blocks
/// (cols = 1 on the deterministic path, N otherwise):
///   P[k] = (I + J dt)' G (I + J dt)
///        + dt [ sum_j w_j (K_j' G K_j + K_j' Q_j + Q_j K_j) + H_xx ],   G = E[S P_{k+1} S | x_k],
/// with J = a_x, K_j = d_x b_{.j} + mean(b_m)_{.j} psi' and H_xx the Hessian of the Hamiltonian.
struct SecondAdjointPath {
    SecondAdjointMethod method = SecondAdjointMethod::deterministic_lyapunov;
    int n = 0;
    int d = 0;
    double dt = 0.0;
    std::vector<Eigen::MatrixXd> P;       // M+1
    std::vector<Eigen::MatrixXd> P_pred;  // M, the conditional expectation G
    std::vector<Eigen::MatrixXd> Q;       // M, (d n^2) x cols; empty on the deterministic path
    std::vector<Eigen::MatrixXd> hxx;     // M
    std::vector<Eigen::MatrixXd> J;       // M
    std::vector<Eigen::MatrixXd> K;       // M, (d n^2) x cols
    double max_asymmetry = 0.0;
    std::vector<std::string> warnings;

    bool deterministic() const noexcept { return method == SecondAdjointMethod::deterministic_lyapunov; }
    Eigen::MatrixXd matrix(const std::vector<Eigen::MatrixXd>& blocks, int k, int i) const;
    Eigen::MatrixXd block_matrix(const std::vector<Eigen::MatrixXd>& blocks, int k, int j, int i) const;
    Eigen::MatrixXd P_at(int k, int i) const { return matrix(P, k, i); }
    Eigen::MatrixXd P_pred_at(int k, int i) const { return matrix(P_pred, k, i); }
    Eigen::MatrixXd Q_at(int k, int j, int i) const;
    Eigen::MatrixXd K_at(int k, int j, int i) const { return block_matrix(K, k, j, i); }
};

SecondAdjointPath solve_second_adjoint(const CoefficientModel& model, const GalerkinSpace& space,
                                       const StatePath& base, const ControlPath& ubar, const FirstAdjointPath& first,
                                       SecondAdjointMethod method, const AdjointOptions& options = {});

/// Deterministic path when J, K and H_xx agree across particles, regression otherwise.
SecondAdjointPath solve_second_adjoint_auto(const CoefficientModel& model, const GalerkinSpace& space,
                                            const StatePath& base, const ControlPath& ubar,
                                            const FirstAdjointPath& first, const AdjointOptions& options = {});

// ---------------------------------------------------------------------------------------------
// Duality checks

/// One duality identity. `scale` is the largest magnitude among lhs, rhs and the aggregated
/// terms that make them up, so that an identity whose sides nearly cancel is not judged
/// against a vanishing denominator; relative = residual / scale.
struct DualityCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double scale = 0.0;
    double relative = 0.0;
};

struct TranspositionReport {
    std::vector<DualityCheck> checks;

    double max_relative() const;
    void write_json(std::ostream& out) const;
};

DualityCheck make_duality_check(std::string name, double lhs, double rhs, std::initializer_list<double> terms = {});

/// Forward test system X_{k+1} = S[X + (J X + alpha_k) dt + sum_j (K_j X + beta_kj) dW_j]
/// with deterministic X_0 and deterministic, smooth-in-time sources.
struct TestSystem {
    Eigen::MatrixXd J;               // n x n
    std::vector<Eigen::MatrixXd> K;  // d matrices n x n
    Eigen::VectorXd x0;
    Eigen::VectorXd alpha0, alpha1;               // alpha_k = alpha0 + alpha1 sin(2 pi t_k / T)
    Eigen::MatrixXd beta0, beta1;                 // n x d, same time profile
    Eigen::VectorXd alpha(double t, double T) const;
    Eigen::MatrixXd beta(double t, double T) const;
};

TestSystem random_test_system(int n, int d, double scale, std::uint64_t seed, int index);
/// A test system with no dynamics and no sources (every path stays at x0).
TestSystem zero_test_system(int n, int d, Eigen::VectorXd x0);

struct TestTrajectory {
    std::vector<Eigen::MatrixXd> x;          // M+1, n x N
    std::vector<Eigen::MatrixXd> drift;      // M, n x N
    std::vector<Eigen::MatrixXd> diffusion;  // M, (n d) x N
};

TestTrajectory simulate_test_system(const TestSystem& sys, const GalerkinSpace& space, const StatePath& base,
                                    const Execution& exec = {});

/// Checks E<X_M, p_M> + sum_k dt E<X_k, driver_k> = E<X_0, p_0> + sum_k dt E[<drift_k, p_k> +
/// <diffusion_k, q_k>_w] along a trajectory. The left-point quadrature leaves an O(dt) gap.
DualityCheck first_duality(const std::string& name, const FirstAdjointPath& adjoint, const GalerkinSpace& space,
                           const TestTrajectory& traj);

/// Random test systems plus, when `variation` carries recorded coefficients, the instance X = y.
TranspositionReport verify_transposition_first(const GalerkinSpace& space, const StatePath& base,
                                               const FirstAdjointPath& adjoint, int test_source_count,
                                               std::uint64_t seed, const VariationPath* variation = nullptr,
                                               double scale = 0.5, const Execution& exec = {});

/// Second-order test pair: phi_{k+1} = S[phi + (J phi + u_k) dt + sum_j (K_j phi + v_kj) dW_j]
/// with J, K taken from the adjoint path.
struct SecondTestSource {
    Eigen::VectorXd xi;
    Eigen::VectorXd u0, u1;  // u_k = u0 + u1 cos(2 pi t_k / T)
    Eigen::MatrixXd v0, v1;  // n x d
};

SecondTestSource random_second_source(int n, int d, double scale, std::uint64_t seed, int index);

struct SecondTrajectory {
    std::vector<Eigen::MatrixXd> phi;  // M+1, n x N
    std::vector<Eigen::MatrixXd> u;    // M, n x N
    std::vector<Eigen::MatrixXd> v;    // M, (n d) x N
};

SecondTrajectory simulate_second_test(const SecondTestSource& source, const SecondAdjointPath& P,
                                      const GalerkinSpace& space, const StatePath& base, const Execution& exec = {});

/// The bilinear identity for the pair (phi1, phi2).
DualityCheck second_duality(const std::string& name, const SecondAdjointPath& P, const GalerkinSpace& space,
                            const SecondTrajectory& a, const SecondTrajectory& b);

/// Expresses a first variation with recorded coefficients as a second-order test trajectory:
/// u = y_drift - J y and v_j = y_diffusion_j - K_j y, which are the mean-field and spike terms
/// of its equation.
SecondTrajectory variation_as_second_test(const VariationPath& variation, const SecondAdjointPath& P);

TranspositionReport verify_transposition_second(const GalerkinSpace& space, const StatePath& base,
                                                const SecondAdjointPath& P, int test_pairs, std::uint64_t seed,
                                                const SecondTrajectory* variation_instance = nullptr,
                                                double scale = 0.5, const Execution& exec = {});

/// Residual of an identity over a dt sweep under joint refinement: the grid with M steps uses
/// N * (M / M_finest)^particle_exponent particles, all sharing the Brownian paths of the finest
/// grid. Each grid is replicated over independent seeds; `relative` is the root mean square of
/// the signed residual divided by the mean scale.
struct DtSweepReport {
    std::vector<int> steps;
    std::vector<int> particles;
    std::vector<double> dt;
    std::vector<double> relative;
    double order = 0.0;
};

struct DtSweepConfig {
    std::vector<int> steps{8, 16, 32, 64};
    int N = 16384;  // particles on the finest grid
    double particle_exponent = 2.0;
    int replications = 8;
    std::uint64_t seed = 1;
    InitialSampler sampler;
    double scale = 0.5;
    int source_index = 0;
    AdjointOptions adjoint;
};

/// First identity on one random test system.
DtSweepReport transposition_first_dt_sweep(const CoefficientModel& model, const GalerkinSpace& space, double T,
                                           const Control& u, const DtSweepConfig& config);
/// Second identity on one random pair of sources.
DtSweepReport transposition_second_dt_sweep(const CoefficientModel& model, const GalerkinSpace& space, double T,
                                            const Control& u, const DtSweepConfig& config);

}  // namespace mvlab
