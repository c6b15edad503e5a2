#include "mvlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace mvlab {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a, std::uint64_t b) {
    std::uint64_t k = mix64(seed + kGolden);
    k = mix64(k ^ (static_cast<std::uint64_t>(purpose) * kGolden));
    k = mix64(k ^ (a + 0x632BE59BD9B4E019ULL));
    k = mix64(k ^ (b + 0x85EBCA77C2B2AE63ULL));
    key_ = k;
}

RngStream::result_type RngStream::operator()() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() {
    // 53 random mantissa bits, shifted off zero.
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

}  // namespace mvlab
