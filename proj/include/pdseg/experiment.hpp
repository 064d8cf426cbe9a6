#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdseg/denoiser.hpp"
#include "pdseg/diffusion.hpp"
#include "pdseg/ensemble.hpp"
#include "pdseg/metrics.hpp"
#include "pdseg/noise_schedule.hpp"
#include "pdseg/synth_data.hpp"

namespace pdseg {

enum class Method { Vanilla, Pd };
std::string to_string(Method method);
Method method_from_string(const std::string& name);

/// Stream for ensemble member `member` of case `case_id`. It does not depend
/// on the method, T' or ensemble size, so sweeps share random numbers across
/// grid points and an ensemble of size k is the first k members of a larger one.
Rng member_rng(std::uint64_t seed, const std::string& case_id, int member);

struct SamplingPlan {
    Method method = Method::Pd;
    int t_prime = 0;  ///< ignored for vanilla
    int members = 5;
    SigmaRule sigma_rule = SigmaRule::BetaTilde;
    std::uint64_t seed = 0;
    int jobs = 1;
};

/// Runs `plan.members` reverse chains per case and returns them as
/// [case][member]. `presegs` holds one probability map per case for the pd
/// method and is ignored for vanilla. Chains are batched in fixed chunks that
/// up to `plan.jobs` threads pull from, so results do not depend on `jobs`.
std::vector<std::vector<SampleResult>> sample_members(const std::vector<const Case*>& cases,
                                                      const std::vector<MaskGrid>& presegs,
                                                      const Denoiser& denoiser,
                                                      const NoiseSchedule& schedule,
                                                      const SamplingPlan& plan);

struct CaseOutcome {
    std::string case_id;
    EnsembleResult ensemble;
    CaseMetrics metrics;
};

/// Ensemble of the first `size` members, scored against the case's ground truth.
CaseOutcome score_members(const Case& c, const std::vector<SampleResult>& members, int size);

/// Per-case Dice of thresholded probability maps, averaged.
double mean_dice(const std::vector<MaskGrid>& probs, const std::vector<const Case*>& cases);

/// Degradation-oracle pre-segmentations at `target_dice` for every case.
std::vector<MaskGrid> oracle_presegs(const std::vector<const Case*>& cases, double target_dice,
                                     std::uint64_t seed);

/// T' values proportional to the reference grid {50, 100, 200, ..., 1000}
/// for a 1000-step schedule, rescaled to `total_steps`.
std::vector<int> default_tprime_grid(int total_steps);

/// round(0.3 T), the default truncation point.
int default_tprime(int total_steps);

}  // namespace pdseg
