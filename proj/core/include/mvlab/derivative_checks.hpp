#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvlab/coefficients.hpp"

namespace mvlab {

/// Which closed-form partial a finite-difference check targets. dx and dm are compared with
/// central differences of the value; dxx, dmx and dmm with central differences of the
/// closed-form first derivative.
enum class PartialSlot { dx, dxx, dm, dmx, dmm };

const char* to_string(PartialSlot slot);

/// Result of a step sweep. `errors[i]` is the relative error at `steps[i]`. The observed
/// order is a least-squares log-log slope over the steps whose error stands clear of the
/// rounding floor; when no step does, the approximation is exact up to rounding and
/// `exact` is set (order reported as NaN).
struct SweepReport {
    std::string label;
    std::vector<double> steps;
    std::vector<double> errors;
    double best_error = 0.0;
    double observed_order = 0.0;
    int resolved_points = 0;
    bool exact = false;
    bool passed = false;
};

struct SweepCriteria {
    double tolerance = 1e-4;
    double order_low = 1.8;
    double order_high = 2.2;
};

std::vector<double> default_fd_steps();

SweepReport fd_check(const CoefficientModel& model, Coef which, PartialSlot slot, double t, const StateVector& x,
                     double m, const Control& u, const std::vector<double>& steps = default_fd_steps(),
                     const SweepCriteria& criteria = {});

/// Runs every slot of every coefficient on `samples` random inputs drawn from a box of the
/// given radius, returning one aggregated report per (coefficient, slot).
std::vector<SweepReport> fd_check_family(const CoefficientModel& model, int samples, std::uint64_t seed,
                                         double radius = 2.0, const std::vector<double>& steps = default_fd_steps(),
                                         const SweepCriteria& criteria = {});

/// Lifted check of the Lions derivative: compares
/// (phi(x, mu shifted by +eps Y) - phi(x, mu shifted by -eps Y)) / (2 eps)
/// with (1/N) sum_i <d_mu phi(mu)(x_i), y_i> over eps_list.
SweepReport check_lions_lift(const CoefficientModel& model, Coef which, double t, const StateVector& x,
                             const ParticleEnsemble& mu, const Control& u, const ParticleEnsemble& direction,
                             const std::vector<double>& eps_list = default_fd_steps(),
                             const SweepCriteria& criteria = {});

struct LipschitzReport {
    double max_ratio = 0.0;
    Coef worst = Coef::a;
    double bound = 0.0;
    bool passed = true;
};

/// Randomised Lipschitz probe on values and first partials of a, b, f, h over pairs of
/// points in the box |x|, |m| <= radius with u drawn from the control set.
LipschitzReport probe_lipschitz(const CoefficientModel& model, const ProbeSettings& settings);

/// Random admissible control (uniform in a box, uniform index in a finite grid).
Control random_control(const ControlSet& set, RngStream& stream);

}  // namespace mvlab
