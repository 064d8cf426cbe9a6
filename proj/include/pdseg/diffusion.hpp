#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdseg/denoiser.hpp"
#include "pdseg/grid.hpp"
#include "pdseg/noise_schedule.hpp"
#include "pdseg/rng.hpp"

namespace pdseg {

/// Reverse-step variance: beta_t, or the posterior variance
/// beta_tilde_t = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
enum class SigmaRule { Beta, BetaTilde };

std::string to_string(SigmaRule rule);
SigmaRule sigma_rule_from_string(const std::string& name);

struct SamplerConfig {
    SigmaRule sigma_rule = SigmaRule::BetaTilde;
    int t_prime = 0;
    int ensemble_size = 5;
    std::uint64_t seed = 0;
};

struct ReverseStepParams {
    MaskGrid mean;
    double variance = 0.0;
    int t = 0;
};

struct SampleResult {
    MaskGrid x0;  ///< diffusion space
    int nfe = 0;
};

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.
MaskGrid q_sample(const MaskGrid& x0, int t, const NoiseSchedule& schedule, const MaskGrid& noise);

/// One forward transition: sqrt(1 - beta_t) x_prev + sqrt(beta_t) noise.
MaskGrid q_step(const MaskGrid& x_prev, int t, const NoiseSchedule& schedule, const MaskGrid& noise);

/// Mean and variance of p(x_{t-1} | x_t) under the noise parameterization.
/// The variance is zero at t = 1 under either rule.
ReverseStepParams reverse_step_params(const MaskGrid& x_t, const MaskGrid& eps_hat, int t,
                                      const NoiseSchedule& schedule, SigmaRule rule);

/// Clean-signal estimate (x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t).
MaskGrid predict_x0(const MaskGrid& x_t, const MaskGrid& eps_hat, int t,
                    const NoiseSchedule& schedule);

/// Runs the reverse chain t = t_start..1 for every start state in lockstep.
/// Chain i draws all of its noise from rngs[i]; nfe of each result is t_start.
std::vector<SampleResult> reverse_chain(std::vector<MaskGrid> starts, int t_start,
                                        std::span<const ImageGrid* const> images,
                                        const Denoiser& denoiser, const NoiseSchedule& schedule,
                                        SigmaRule rule, std::span<Rng> rngs);

/// Vanilla sampler: x_T ~ N(0, I), then T reverse steps.
SampleResult vanilla_sample(const ImageGrid& image, const Denoiser& denoiser,
                            const NoiseSchedule& schedule, const SamplerConfig& config, Rng rng);

std::vector<SampleResult> vanilla_sample_batch(std::span<const ImageGrid* const> images,
                                               const Denoiser& denoiser,
                                               const NoiseSchedule& schedule, SigmaRule rule,
                                               std::span<Rng> rngs);

/// Pre-segmentation sampler: encodes the probability map to 2p - 1, diffuses
/// it to step t_prime in closed form and runs only t_prime reverse steps.
/// t_prime = 0 returns the encoded map with nfe = 0.
SampleResult pd_sample(const ImageGrid& image, const MaskGrid& preseg_prob,
                       const Denoiser& denoiser, const NoiseSchedule& schedule, int t_prime,
                       const SamplerConfig& config, Rng rng);

std::vector<SampleResult> pd_sample_batch(std::span<const ImageGrid* const> images,
                                          std::span<const MaskGrid* const> preseg_probs,
                                          const Denoiser& denoiser, const NoiseSchedule& schedule,
                                          int t_prime, SigmaRule rule, std::span<Rng> rngs);

/// clamp((x + 1) / 2, 0, 1)
MaskGrid decode_to_probability(const MaskGrid& x0);
/// 2p - 1
MaskGrid encode_probability(const MaskGrid& prob);

}  // namespace pdseg
