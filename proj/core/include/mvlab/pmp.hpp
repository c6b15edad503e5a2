#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "mvlab/adjoint.hpp"

namespace mvlab {

/// <p, a> + <q, b>_HS - f, with the Hilbert-Schmidt pairing weighted by the noise variances.
double hamiltonian(const CoefficientModel& model, const GalerkinSpace& space, double t, const StateVector& x,
                   double m, const Control& u, const StateVector& p, const HSMatrix& q);
/// Validated form at a measure given by an ensemble; throws DomainError when u is not in U.
double hamiltonian(const CoefficientModel& model, const GalerkinSpace& space, double t, const StateVector& x,
                   const ParticleEnsemble& mu, const Control& u, const StateVector& p, const HSMatrix& q);

/// Candidate controls for gap evaluation: the points of a finite set, or an evenly spaced grid
/// with about `points` nodes for a box.
std::vector<Control> control_grid(const ControlSet& set, int points);

/// g_k(u) = H(ubar) - H(u) - 1/2 sum_j w_j <P db_j, db_j> per particle, with db = b(ubar) - b(u)
/// and (p, q, P) taken as the conditional expectations at step k.
struct SMPGapReport {
    std::vector<double> times;
    std::vector<Control> controls;
    std::vector<Eigen::MatrixXd> gaps;  // per step: controls x N
    Eigen::MatrixXd mean_gap;           // steps x controls
    Eigen::MatrixXd standard_error;     // steps x controls
    double min_mean_gap = 0.0;
    int argmin_step = 0;
    int argmin_control = 0;
    double min_pointwise_gap = 0.0;
    /// Per step, the grid control with the smallest particle-mean gap.
    std::vector<int> argmin_per_step;

    /// Share of (particle, step, control) triples with gap below -tol.
    double fraction_below(double tol) const;
    void write_csv(std::ostream& out) const;
};

SMPGapReport smp_gap(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                     const ControlPath& ubar, const FirstAdjointPath& first, const SecondAdjointPath& second,
                     const std::vector<Control>& u_grid, const Execution& exec = {});

struct SMPCheckConfig {
    int N = 10000;
    std::uint64_t seed = 1;
    InitialSampler sampler;
    double se_multiplier = 3.0;
    AdjointOptions adjoint;
};

struct SMPCheckReport {
    SMPGapReport gap;
    double standard_error = 0.0;  // largest particle-mean standard error over the grid
    double dt_bias = 0.0;         // largest change of a mean gap under one dt-halving
    double tol = 0.0;
    double min_mean_gap = 0.0;
    double fraction_below_tol = 0.0;
    bool passed = false;  // min_mean_gap >= -tol
};

/// Maximum-principle check along ubar with tol = se_multiplier * SE + dt-bias, the bias taken
/// from a rerun on the halved grid driven by the same Brownian paths.
SMPCheckReport smp_check(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                         const ControlPath& ubar, const std::vector<Control>& u_grid, const SMPCheckConfig& config);

/// Each step of `control` split into `factor` equal steps.
ControlPath refine_control(const ControlPath& control, int factor);

struct ExpansionConfig {
    int N = 20000;
    std::uint64_t seed = 1;
    double offset = 0.25;
    InitialSampler sampler;
    /// Average with a rerun whose increments are negated inside the spike window.
    bool antithetic = true;
    AdjointOptions adjoint;
};

struct ExpansionPoint {
    double eps = 0.0;  // grid measure of the window
    double delta_cost = 0.0;
    double predicted = 0.0;  // sum over the window of mean[dH + 1/2 <P db, db>] dt
    double residual = 0.0;   // delta_cost + predicted
    double ratio = 0.0;      // residual / eps
};

struct ExpansionReport {
    std::vector<ExpansionPoint> points;
    bool decreasing = false;  // |ratio| strictly decreasing as eps shrinks
};

/// One point for an arbitrary spike control (any step set, possibly empty); the ratio is 0
/// for an empty window.
ExpansionPoint expansion_point(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                               const ControlPath& ubar, const ControlPath& spike, const ExpansionConfig& config);

ExpansionReport cost_expansion_check(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                                     const ControlPath& ubar, const Control& pert, const std::vector<double>& eps_list,
                                     const ExpansionConfig& config);

struct ImproveOptions {
    int iterations = 30;
    double relaxation = 1.0;
    int N = 2000;
    std::uint64_t seed = 1;
    InitialSampler sampler;
    int golden_iterations = 48;
    /// Stop when no control moves by more than this.
    double tolerance = 1e-7;
    AdjointOptions adjoint;
};

struct ImproveResult {
    ControlPath control;
    double cost = 0.0;
    double initial_cost = 0.0;
    std::vector<double> costs;  // cost of every evaluated iterate, starting with init
    int iterations = 0;
    bool improved = false;   // best cost below the initial cost
    bool converged = false;  // stopped on the tolerance rather than the iteration cap
};

/// Method of successive approximations: simulate, solve the first adjoint, move each control
/// towards the maximiser of the particle-mean Hamiltonian (per particle when the initial
/// control differs across particles). Box sets use a relaxed projected step, finite sets
/// switch the steps with the largest Hamiltonian gain. The relaxation halves whenever the cost
/// rises, and the best control seen is returned. All iterations share one set of Brownian paths.
ImproveResult improve_control(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                              const ControlPath& init, const ImproveOptions& options);

}  // namespace mvlab
