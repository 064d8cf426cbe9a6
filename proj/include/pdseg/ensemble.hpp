#pragma once

#include <vector>

#include "pdseg/grid.hpp"

namespace pdseg {

struct EnsembleResult {
    std::vector<MaskGrid> members;  ///< probability space
    MaskGrid mean_prob;
    MaskGrid binary;       ///< 1 where mean_prob > 0.5 (ties are background)
    MaskGrid uncertainty;  ///< population variance of the members, in [0, 0.25]
    long total_nfe = 0;
};

/// Averages probability-space members, thresholds the mean at 0.5 and
/// records the per-pixel population variance.
EnsembleResult ensemble(std::vector<MaskGrid> members, const std::vector<int>& nfes);

/// Mean of the uncertainty map over all pixels.
double mean_uncertainty(const EnsembleResult& result);

}  // namespace pdseg
