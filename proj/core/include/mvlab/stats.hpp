#pragma once

#include <cstdint>
#include <vector>

namespace mvlab {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Least-squares fit of log(y) against log(x). All values must be positive.
LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Percentile bootstrap for the log-log slope. `samples[s][i]` is the statistic of seed s at
/// x[i]; each replicate resamples whole seeds with replacement and fits the seed-averaged
/// curve.
Interval bootstrap_slope_interval(const std::vector<double>& x, const std::vector<std::vector<double>>& samples,
                                  int replicates, double level, std::uint64_t seed);

double mean(const std::vector<double>& v);
/// Standard error of the mean (sample standard deviation / sqrt(n)); 0 for n < 2.
double standard_error(const std::vector<double>& v);
/// Empirical quantile with linear interpolation, q in [0, 1].
double quantile(std::vector<double> v, double q);

}  // namespace mvlab
