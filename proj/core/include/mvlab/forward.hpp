#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mvlab/coefficients.hpp"
#include "mvlab/galerkin.hpp"
#include "mvlab/parallel.hpp"

namespace mvlab {

/// Uniform grid t_k = k T / M on [0, T].
class TimeGrid {
public:
    TimeGrid(double T, int M);

    double T() const noexcept { return T_; }
    int M() const noexcept { return M_; }
    double dt() const noexcept { return T_ / M_; }
    double t(int k) const noexcept { return k * dt(); }
    /// Number of whole steps covering a duration, rounded up (with a small tolerance so that
    /// exact multiples are not bumped).
    int steps_for(double duration) const;

private:
    double T_;
    int M_;
};

/// Description of a spike set E_eps inside a control path.
struct SpikeInfo {
    std::vector<int> steps;  // sorted step indices in {0..M-1}
    double eps_requested = 0.0;
    double eps_grid = 0.0;  // steps.size() * dt
    std::vector<Control> pert;  // perturbing value per spike step
};

/// Piecewise-constant controls u(t_k) per particle. values stored as one dim x N block per step.
class ControlPath {
public:
    ControlPath() = default;
    ControlPath(int M, int N, int dim);

    static ControlPath constant(int M, int N, const Control& u);
    static ControlPath common(const std::vector<Control>& per_step, int N);

    int steps() const noexcept { return static_cast<int>(values_.size()); }
    int particles() const noexcept { return values_.empty() ? 0 : static_cast<int>(values_.front().cols()); }
    int dim() const noexcept { return values_.empty() ? 0 : static_cast<int>(values_.front().rows()); }

    auto at(int k, int i) const { return values_[static_cast<std::size_t>(k)].col(i); }
    const Eigen::MatrixXd& step(int k) const { return values_[static_cast<std::size_t>(k)]; }
    void set(int k, int i, const Control& u) { values_[static_cast<std::size_t>(k)].col(i) = u; }
    void set_step(int k, const Control& u);

    /// True when every particle uses the same value at every step.
    bool is_common() const;
    /// Per-step values of particle 0 (the common control when is_common()).
    std::vector<Control> common_values() const;

    const std::optional<SpikeInfo>& spike() const noexcept { return spike_; }
    void set_spike(SpikeInfo info) { spike_ = std::move(info); }
    /// chi_k: 1 on spike steps, 0 elsewhere.
    std::vector<char> spike_mask() const;

    /// Throws DomainError naming the first (step, particle) whose value is not in U.
    void validate(const ControlSet& set) const;

private:
    std::vector<Eigen::MatrixXd> values_;
    std::optional<SpikeInfo> spike_;
};

/// Window of `eps` (rounded up to whole steps) starting at `offset` (rounded down to the grid),
/// with every particle's control replaced by `pert`.
ControlPath make_spike_control(const ControlPath& base, const Control& pert, double eps, double offset,
                               const TimeGrid& grid, const ControlSet& set);
/// Explicit, possibly non-contiguous spike set.
ControlPath make_spike_control_steps(const ControlPath& base, const Control& pert, std::vector<int> steps,
                                     const TimeGrid& grid, const ControlSet& set);

/// Recorded Brownian increments: dw[k] is n_noise x N with variance w_j dt per entry.
struct NoiseRecord {
    std::vector<Eigen::MatrixXd> dw;
    int steps() const noexcept { return static_cast<int>(dw.size()); }
};

/// Increments for particle i at step k come from the stream (seed, noise, i, k).
std::shared_ptr<const NoiseRecord> generate_noise(const GalerkinSpace& space, const TimeGrid& grid, int N,
                                                  std::uint64_t seed, const Execution& exec = {});
/// Sums `factor` consecutive increments: the same Brownian paths on a grid with M / factor steps.
std::shared_ptr<const NoiseRecord> coarsen_noise(const NoiseRecord& fine, int factor);
/// Replaces the increments of the listed steps by their negatives (antithetic window noise).
std::shared_ptr<const NoiseRecord> flip_noise(const NoiseRecord& base, const std::vector<int>& steps);

/// Gaussian initial law with diagonal covariance in the Galerkin coordinates; deterministic
/// when stddev is zero. Particle i is drawn from the stream (seed, initial, i).
struct InitialSampler {
    StateVector mean;
    Eigen::VectorXd stddev;

    Eigen::MatrixXd sample(int N, std::uint64_t seed) const;
};

/// Optional feedback: the control used by particle i at step k given its state and m_k.
/// Must be safe to call concurrently.
using FeedbackRule = std::function<Control(int step, int particle, const StateVector& x, double m)>;

struct SimulationOptions {
    std::uint64_t seed = 0;
    Execution exec{};
    /// Reused increments (common random numbers); generated from `seed` when null.
    std::shared_ptr<const NoiseRecord> noise;
    FeedbackRule feedback;
};

/// Particle trajectories x[k] (n x N) for k = 0..M, the interaction statistics m_k, the
/// controls actually applied, and the noise that drove them.
struct StatePath {
    TimeGrid grid{1.0, 1};
    std::vector<Eigen::MatrixXd> x;
    std::vector<double> m;
    std::shared_ptr<const NoiseRecord> noise;
    ControlPath controls;

    int particles() const { return static_cast<int>(x.front().cols()); }
    int dim() const { return static_cast<int>(x.front().rows()); }
    ParticleEnsemble ensemble(int k) const { return ParticleEnsemble(x[static_cast<std::size_t>(k)]); }
};

/// Exponential Euler: x_{k+1} = S(dt)[x_k + a dt + b dW_k] with the measure frozen at step k.
StatePath simulate(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                   const ControlPath& control, int N, const InitialSampler& sampler,
                   const SimulationOptions& options = {});

/// Per-particle cost: sum_k f(t_k, x_k, m_k, u_k) dt + h(x_M, m_M).
std::vector<double> particle_costs(const CoefficientModel& model, const StatePath& path, const ControlPath& control,
                                   const Execution& exec = {});
/// J = mean of the per-particle costs (left-endpoint rule in time).
double cost(const CoefficientModel& model, const StatePath& path, const ControlPath& control,
            const Execution& exec = {});

/// One row per (step, particle): step,t,particle,x0,...
void write_path_csv(const StatePath& path, std::ostream& out);

struct StepMoments {
    double t = 0.0;
    double m = 0.0;
    Eigen::VectorXd mean;
    double second_moment = 0.0;
};
std::vector<StepMoments> path_moments(const StatePath& path);

}  // namespace mvlab
