#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mvlab {

/// Purpose tags separating the independent stream families derived from one master seed.
enum class StreamPurpose : std::uint64_t {
    noise = 1,
    initial = 2,
    permutation = 3,
    test_source = 4,
    probe = 5,
    bootstrap = 6,
    user = 7,
};

/// Counter-based random stream.
///
/// A stream is identified by (master seed, purpose, a, b) where a and b are usually the
/// particle index and the time step. Every draw hashes the key with a running counter through
/// the SplitMix64 finalizer, so any stream can be re-created independently of the order in
/// which other streams were consumed. This is what makes simulations bit-identical for any
/// worker count.
///
/// Satisfies UniformRandomBitGenerator so it can drive std::shuffle.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform in the open interval (0, 1).
    double uniform();
    /// Standard normal via Box-Muller; caches the second variate.
    double normal();

    std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace mvlab
