#pragma once

#include <vector>

#include "pdseg/grid.hpp"

namespace pdseg {

// All metrics read masks as binary: a pixel is foreground when its value
// exceeds 0.5, so both {0, 1} and {-1, +1} encodings work.

/// 2|P & G| / (|P| + |G|); 1 when both masks are empty.
double dice(const MaskGrid& pred, const MaskGrid& gt);

/// |P & G| / |P | G|; 1 when both masks are empty.
double jaccard(const MaskGrid& pred, const MaskGrid& gt);

/// Symmetric 95th-percentile Hausdorff distance between the boundary pixel
/// sets, in pixels. Boundary pixels are foreground pixels with a background
/// 4-neighbour (outside the image counts as background). Percentiles use the
/// nearest-rank rule. Both empty: 0. Exactly one empty: the image diagonal.
double hd95(const MaskGrid& pred, const MaskGrid& gt);

/// Lesion-wise F1 over 8-connected components with any-overlap matching.
/// Both empty: 1.
double lesion_f1(const MaskGrid& pred, const MaskGrid& gt);

struct CaseMetrics {
    double dice = 0.0;
    double jaccard = 0.0;
    double hd95 = 0.0;
    double f1 = 0.0;
};

CaseMetrics evaluate(const MaskGrid& pred, const MaskGrid& gt);

struct MetricSummary {
    CaseMetrics mean;
    CaseMetrics stddev;  ///< population standard deviation over cases
};

MetricSummary summarize(const std::vector<CaseMetrics>& cases);

/// Boundary pixels as (row, col) pairs in row-major order.
std::vector<std::pair<int, int>> boundary_pixels(const MaskGrid& mask);

/// Connected-component labels (8-connectivity), 0 for background, 1..n for
/// components in row-major discovery order. Returns n.
int label_components(const MaskGrid& mask, std::vector<int>& labels);

}  // namespace pdseg
