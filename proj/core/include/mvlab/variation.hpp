#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvlab/forward.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

/// First and (optionally) second variational processes y, z on the grid of a base path.
/// When requested, the drift and diffusion applied to y at each step are recorded so that
/// duality identities can be evaluated along y.
struct VariationPath {
    std::vector<Eigen::MatrixXd> y;            // M+1 blocks, n x N
    std::vector<Eigen::MatrixXd> z;            // M+1 blocks or empty
    std::vector<Eigen::MatrixXd> y_drift;      // M blocks, n x N (optional)
    std::vector<Eigen::MatrixXd> y_diffusion;  // M blocks, (n d) x N (optional)

    bool has_z() const noexcept { return !z.empty(); }
};

struct VariationOptions {
    bool second_order = true;
    bool record_coefficients = false;
    /// Multiplies the spike sources delta a, delta b (and their derivatives) for linearity checks.
    double source_scale = 1.0;
    Execution exec{};
};

/// Solves y (and z) for several spike controls sharing one base path in a single sweep.
std::vector<VariationPath> solve_variations(const CoefficientModel& model, const GalerkinSpace& space,
                                            const StatePath& base, const ControlPath& ubar,
                                            const std::vector<const ControlPath*>& spikes,
                                            const VariationOptions& options = {});

VariationPath solve_first_variation(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                    const ControlPath& ubar, const ControlPath& spike, const Execution& exec = {});

/// Adds z to a first-variation path computed on the same base and spike.
VariationPath solve_second_variation(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                     const VariationPath& first, const ControlPath& ubar, const ControlPath& spike,
                                     const Execution& exec = {});

// ---------------------------------------------------------------------------------------------
// Rate estimates

struct RateConfig {
    int N = 4096;
    std::vector<std::uint64_t> seeds{1};
    double offset = 0.25;
    Control pert;
    InitialSampler sampler;
    Execution exec{};
    int bootstrap_replicates = 2000;
    double ci_level = 0.9;
    std::uint64_t bootstrap_seed = 7;
};

struct RateSeries {
    std::string name;
    std::vector<double> values;                  // seed average per eps
    std::vector<std::vector<double>> per_seed;  // [seed][eps]
    double slope = 0.0;
    Interval ci;
};

/// E sup_k of |xi|^2, |y|^2, |z|^2, |eta|^2, |zeta|^2 over an eps sweep with common random
/// numbers, where xi = X^eps - Xbar, eta = xi - y, zeta = xi - y - z.
struct RateReport {
    std::vector<double> eps;  // grid measure of each spike window
    std::vector<RateSeries> series;

    const RateSeries& get(const std::string& name) const;
};

RateReport remainder_rates(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                           const ControlPath& ubar, const std::vector<double>& eps_list, const RateConfig& config);

// ---------------------------------------------------------------------------------------------
// Smoothing estimate

/// Bounded test process phi(s, wbar, w) with values rows x n. `outer` > 1 samples an outer
/// probability space (the wbar argument); ordinary processes use outer = 1.
struct TestProcess {
    std::string name;
    int rows = 1;
    int outer = 1;
    std::function<void(int step, int outer_index, int particle, const StateVector& xbar, double m, Eigen::MatrixXd& phi)>
        eval;
};

TestProcess constant_test_process(std::string name, Eigen::MatrixXd phi);
/// phi_k = diag(tanh(xbar_k)) * (1 + t_k): adapted to the base path.
TestProcess path_dependent_test_process(std::string name, const TimeGrid& grid);
/// phi(wbar, w) = diag(cos(theta(wbar) + xbar)) with theta drawn on an independent space.
TestProcess independent_space_test_process(std::string name, int outer, int n_state, std::uint64_t seed);

/// sum_k |E_N[phi_k y_k]|^2 dt, averaged over the outer samples. With `debiased`, each
/// squared mean is replaced by the unbiased pair estimator (sum_i v_i)^2 - sum_i v_i^2 over N(N-1).
double smoothing_estimate(const StatePath& base, const VariationPath& first, const TestProcess& phi,
                          bool debiased = true, const Execution& exec = {});

struct SmoothingReport {
    std::string name;
    std::vector<double> eps;
    std::vector<double> values;
    std::vector<double> ratios;  // values / eps
    bool decreasing = false;
};

std::vector<SmoothingReport> smoothing_sweep(const CoefficientModel& model, const GalerkinSpace& space,
                                             const TimeGrid& grid, const ControlPath& ubar,
                                             const std::vector<double>& eps_list,
                                             const std::vector<TestProcess>& processes, const RateConfig& config,
                                             bool debiased = true);

}  // namespace mvlab
