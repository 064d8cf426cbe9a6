#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdseg/diffusion.hpp"

namespace pdseg {

/// Sampler self-test against the Gaussian oracle denoiser, whose exact
/// endpoint distribution is the target N(m, s^2) per pixel.
struct OracleCheckConfig {
    int total_steps = 100;  ///< cosine schedule length
    int t_prime = 30;
    int trials = 2000;
    int size = 8;  ///< grids are size x size
    double target_mean = 0.25;
    double target_std = 0.5;
    double preseg_prob = 0.9;  ///< constant pre-segmentation for the pd runs at T' = T
    SigmaRule sigma_rule = SigmaRule::BetaTilde;
    std::uint64_t seed = 0;
    double mean_tolerance = 0.05;
    double variance_tolerance = 0.15;  ///< relative
};

struct OracleCheckLine {
    std::string name;
    double measured = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;  ///< |measured - expected| <= tolerance passes
    bool pass = false;
};

struct OracleCheckReport {
    std::vector<OracleCheckLine> lines;
    bool passed() const;
    std::string format() const;
};

/// Endpoint moments over `trials` independent chains per sampler:
///  - vanilla: every pixel mean within mean_tolerance of m; pixel-averaged
///    variance within variance_tolerance of s^2; nfe = T
///  - pd at T' = T from a constant pre-segmentation: same target checks, and
///    mean / variance agree with the vanilla run
///  - reverse chain over t_prime..1 started from the exact marginal at
///    t_prime (target samples pushed through q_sample): target checks; nfe = t_prime
///  - pd at T' = 0 from p = (m + 1) / 2 returns 2p - 1 exactly with nfe = 0
OracleCheckReport run_oracle_check(const OracleCheckConfig& config);

}  // namespace pdseg
