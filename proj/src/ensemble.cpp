#include "pdseg/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pdseg {

EnsembleResult ensemble(std::vector<MaskGrid> members, const std::vector<int>& nfes) {
    if (members.empty()) {
        throw std::invalid_argument("ensemble: at least one member is required");
    }
    if (nfes.size() != members.size()) {
        throw std::invalid_argument("ensemble: one nfe count per member is required");
    }
    for (const auto& m : members) require_same_shape(m, members.front(), "ensemble");

    const int h = members.front().height();
    const int w = members.front().width();
    const double n = static_cast<double>(members.size());

    EnsembleResult r;
    r.mean_prob = MaskGrid(h, w);
    r.binary = MaskGrid(h, w);
    r.uncertainty = MaskGrid(h, w);
    // Members are summed in sorted order so the result does not depend on
    // member order down to the last bit.
    std::vector<double> vals(members.size());
    for (std::size_t p = 0; p < r.mean_prob.size(); ++p) {
        for (std::size_t k = 0; k < members.size(); ++k) vals[k] = members[k][p];
        std::sort(vals.begin(), vals.end());
        double sum = 0.0;
        for (std::size_t k = 0; k < members.size(); ++k) sum += vals[k];
        const double mean = sum / n;
        double var = 0.0;
        for (std::size_t k = 0; k < members.size(); ++k) var += (vals[k] - mean) * (vals[k] - mean);
        var /= n;
        r.mean_prob[p] = mean;
        r.binary[p] = mean > 0.5 ? 1.0 : 0.0;
        r.uncertainty[p] = var;
    }
    r.total_nfe = std::accumulate(nfes.begin(), nfes.end(), 0L);
    r.members = std::move(members);
    return r;
}

double mean_uncertainty(const EnsembleResult& result) {
    const auto u = result.uncertainty.values();
    if (u.empty()) return 0.0;
    return std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
}

}  // namespace pdseg
