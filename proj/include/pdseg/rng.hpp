#pragma once

#include <cstdint>
#include <string_view>

#include "pdseg/grid.hpp"

namespace pdseg {

/// Counter-based generator built on the SplitMix64 finalizer: the n-th output
/// of a stream is mix64(key + n * golden_gamma). Child streams get a fresh key
/// hashed from (parent key, label, index), so streams never share state and
/// can be created in any order.
///
/// Normal variates use the Marsaglia polar method, implemented here so
/// experiments do not depend on a platform's std::normal_distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent stream for (this stream's key, label, index).
    Rng derive(std::string_view label, std::uint64_t index = 0) const;

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);
    double normal();

    std::uint64_t key() const { return key_; }

private:
    Rng(std::uint64_t key, bool /*raw*/) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// H x W grid of i.i.d. standard normal draws.
MaskGrid standard_normal_grid(Rng& rng, int height, int width);

}  // namespace pdseg
