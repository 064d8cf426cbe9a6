#include "pdseg/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace pdseg {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGoldenGamma)) {}

Rng Rng::derive(std::string_view label, std::uint64_t index) const {
    std::uint64_t k = mix64(key_ ^ fnv1a64(label));
    k = mix64(k + (index + 1) * kGoldenGamma);
    return Rng(k, true);
}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_int: range must be nonempty");
    }
    // Rejection keeps the result unbiased for n that do not divide 2^64.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

MaskGrid standard_normal_grid(Rng& rng, int height, int width) {
    MaskGrid g(height, width);
    for (auto& v : g.values()) v = rng.normal();
    return g;
}

}  // namespace pdseg
