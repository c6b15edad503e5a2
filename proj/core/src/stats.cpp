#include "mvlab/stats.hpp"

#include <algorithm>
#include <cmath>

#include "mvlab/errors.hpp"
#include "mvlab/rng.hpp"

namespace mvlab {

LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("log-log fit needs at least two paired points");
    const auto n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("log-log fit needs positive values");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0) throw DomainError("log-log fit needs distinct abscissae");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

Interval bootstrap_slope_interval(const std::vector<double>& x, const std::vector<std::vector<double>>& samples,
                                  int replicates, double level, std::uint64_t seed) {
    if (samples.empty()) throw DomainError("bootstrap needs at least one seed");
    if (replicates < 1 || !(level > 0 && level < 1)) throw DomainError("invalid bootstrap settings");
    const std::size_t S = samples.size();
    RngStream stream(seed, StreamPurpose::bootstrap, 0xB0);
    std::vector<double> slopes;
    slopes.reserve(static_cast<std::size_t>(replicates));
    std::vector<double> avg(x.size());
    for (int r = 0; r < replicates; ++r) {
        std::fill(avg.begin(), avg.end(), 0.0);
        for (std::size_t s = 0; s < S; ++s) {
            const auto& row = samples[static_cast<std::size_t>(stream() % S)];
            for (std::size_t i = 0; i < x.size(); ++i) avg[i] += row[i] / static_cast<double>(S);
        }
        slopes.push_back(loglog_fit(x, avg).slope);
    }
    const double tail = 0.5 * (1.0 - level);
    return {quantile(slopes, tail), quantile(slopes, 1.0 - tail)};
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (double e : v) s += e;
    return s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0;
    for (double e : v) ss += (e - m) * (e - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DomainError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace mvlab
