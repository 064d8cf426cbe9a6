#include "pdseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdseg {

namespace {

bool fg(double v) { return v > 0.5; }

struct Counts {
    long inter = 0;
    long pred = 0;
    long gt = 0;
};

Counts count(const MaskGrid& pred, const MaskGrid& gt, const char* what) {
    require_same_shape(pred, gt, what);
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = fg(pred[i]);
        const bool g = fg(gt[i]);
        c.pred += p;
        c.gt += g;
        c.inter += p && g;
    }
    return c;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope of parabolas; f is overwritten
// with the squared distance transform along one line.
void squared_dt_1d(std::vector<double>& f) {
    const int n = static_cast<int>(f.size());
    std::vector<double> d(n);
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        auto intersect = [&](int p) {
            return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
        };
        double s = intersect(v[k]);
        // z[0] is -inf, so k never drops below zero.
        while (s <= z[k]) {
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) return;  // no sites on this line
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double dq = q - v[j];
        d[q] = dq * dq + f[v[j]];
    }
    f = std::move(d);
}

/// Exact Euclidean distance from every pixel to the nearest site.
std::vector<double> distance_to_sites(int h, int w, const std::vector<std::pair<int, int>>& sites) {
    std::vector<double> grid(static_cast<std::size_t>(h) * w, kInf);
    for (auto [y, x] : sites) grid[static_cast<std::size_t>(y) * w + x] = 0.0;
    std::vector<double> line;
    for (int x = 0; x < w; ++x) {
        line.assign(h, 0.0);
        for (int y = 0; y < h; ++y) line[y] = grid[static_cast<std::size_t>(y) * w + x];
        squared_dt_1d(line);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = line[y];
    }
    for (int y = 0; y < h; ++y) {
        line.assign(grid.begin() + static_cast<std::ptrdiff_t>(y) * w,
                    grid.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
        squared_dt_1d(line);
        std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
    }
    for (auto& v : grid) v = std::sqrt(v);
    return grid;
}

double nearest_rank_p95(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

double directed_p95(const std::vector<std::pair<int, int>>& from, const std::vector<double>& dist,
                    int width) {
    std::vector<double> d;
    d.reserve(from.size());
    for (auto [y, x] : from) d.push_back(dist[static_cast<std::size_t>(y) * width + x]);
    return nearest_rank_p95(std::move(d));
}

}  // namespace

double dice(const MaskGrid& pred, const MaskGrid& gt) {
    const Counts c = count(pred, gt, "dice");
    if (c.pred + c.gt == 0) return 1.0;
    return 2.0 * c.inter / static_cast<double>(c.pred + c.gt);
}

double jaccard(const MaskGrid& pred, const MaskGrid& gt) {
    const Counts c = count(pred, gt, "jaccard");
    const long uni = c.pred + c.gt - c.inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(uni);
}

std::vector<std::pair<int, int>> boundary_pixels(const MaskGrid& mask) {
    const int h = mask.height();
    const int w = mask.width();
    auto is_fg = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w && fg(mask(y, x));
    };
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!is_fg(y, x)) continue;
            if (!is_fg(y - 1, x) || !is_fg(y + 1, x) || !is_fg(y, x - 1) || !is_fg(y, x + 1)) {
                out.emplace_back(y, x);
            }
        }
    }
    return out;
}

double hd95(const MaskGrid& pred, const MaskGrid& gt) {
    require_same_shape(pred, gt, "hd95");
    const auto bp = boundary_pixels(pred);
    const auto bg = boundary_pixels(gt);
    if (bp.empty() && bg.empty()) return 0.0;
    if (bp.empty() || bg.empty()) {
        return std::hypot(static_cast<double>(pred.height()), static_cast<double>(pred.width()));
    }
    const int h = pred.height();
    const int w = pred.width();
    const auto to_gt = distance_to_sites(h, w, bg);
    const auto to_pred = distance_to_sites(h, w, bp);
    return std::max(directed_p95(bp, to_gt, w), directed_p95(bg, to_pred, w));
}

int label_components(const MaskGrid& mask, std::vector<int>& labels) {
    const int h = mask.height();
    const int w = mask.width();
    labels.assign(mask.size(), 0);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            const auto i0 = static_cast<std::size_t>(y0) * w + x0;
            if (!fg(mask[i0]) || labels[i0] != 0) continue;
            labels[i0] = ++next;
            stack.emplace_back(y0, x0);
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy;
                        const int nx = x + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        const auto j = static_cast<std::size_t>(ny) * w + nx;
                        if (fg(mask[j]) && labels[j] == 0) {
                            labels[j] = next;
                            stack.emplace_back(ny, nx);
                        }
                    }
                }
            }
        }
    }
    return next;
}

double lesion_f1(const MaskGrid& pred, const MaskGrid& gt) {
    require_same_shape(pred, gt, "lesion_f1");
    std::vector<int> lp, lg;
    const int np = label_components(pred, lp);
    const int ng = label_components(gt, lg);
    if (np == 0 && ng == 0) return 1.0;
    std::vector<char> pred_hit(np + 1, 0), gt_hit(ng + 1, 0);
    for (std::size_t i = 0; i < lp.size(); ++i) {
        if (lp[i] != 0 && lg[i] != 0) {
            pred_hit[lp[i]] = 1;
            gt_hit[lg[i]] = 1;
        }
    }
    const int tp = static_cast<int>(std::count(pred_hit.begin() + 1, pred_hit.end(), 1));
    const int detected = static_cast<int>(std::count(gt_hit.begin() + 1, gt_hit.end(), 1));
    const double precision = np == 0 ? 0.0 : static_cast<double>(tp) / np;
    const double recall = ng == 0 ? 0.0 : static_cast<double>(detected) / ng;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

CaseMetrics evaluate(const MaskGrid& pred, const MaskGrid& gt) {
    return {dice(pred, gt), jaccard(pred, gt), hd95(pred, gt), lesion_f1(pred, gt)};
}

MetricSummary summarize(const std::vector<CaseMetrics>& cases) {
    MetricSummary s;
    if (cases.empty()) return s;
    const double n = static_cast<double>(cases.size());
    for (const auto& c : cases) {
        s.mean.dice += c.dice / n;
        s.mean.jaccard += c.jaccard / n;
        s.mean.hd95 += c.hd95 / n;
        s.mean.f1 += c.f1 / n;
    }
    for (const auto& c : cases) {
        s.stddev.dice += (c.dice - s.mean.dice) * (c.dice - s.mean.dice) / n;
        s.stddev.jaccard += (c.jaccard - s.mean.jaccard) * (c.jaccard - s.mean.jaccard) / n;
        s.stddev.hd95 += (c.hd95 - s.mean.hd95) * (c.hd95 - s.mean.hd95) / n;
        s.stddev.f1 += (c.f1 - s.mean.f1) * (c.f1 - s.mean.f1) / n;
    }
    s.stddev.dice = std::sqrt(s.stddev.dice);
    s.stddev.jaccard = std::sqrt(s.stddev.jaccard);
    s.stddev.hd95 = std::sqrt(s.stddev.hd95);
    s.stddev.f1 = std::sqrt(s.stddev.f1);
    return s;
}

}  // namespace pdseg
