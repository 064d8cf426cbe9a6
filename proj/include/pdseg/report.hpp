#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pdseg/experiment.hpp"
#include "pdseg/metrics.hpp"

namespace pdseg {

// CSV layouts. Column order is fixed; a change bumps kCsvFormat, which is
// recorded in every run manifest.
inline constexpr int kCsvFormat = 1;
inline constexpr char kMetricsHeader[] =
    "case_id,method,t_prime,ensemble_size,dice,jaccard,hd95,f1,nfe";
inline constexpr char kSweepHeader[] =
    "sweep,value,method,t_prime,ensemble_size,preseg_target,dice_mean,dice_std,jaccard_mean,"
    "jaccard_std,hd95_mean,hd95_std,f1_mean,f1_std,mean_uncertainty,nfe_per_case";

/// Shortest round-trip decimal form.
std::string format_number(double v);

/// Per-case rows sorted by case id, then a "mean" row. `t_prime` is written
/// as-is (vanilla callers pass T).
std::string metrics_csv(const std::vector<CaseOutcome>& outcomes, Method method, int t_prime,
                        int ensemble_size);

struct SweepRow {
    double value = 0.0;  ///< the swept quantity
    Method method = Method::Pd;
    int t_prime = 0;
    int ensemble_size = 0;
    double preseg_target = -1.0;  ///< -1: trained pre-segmentation
    MetricSummary summary;
    double mean_uncertainty = 0.0;
    double nfe_per_case = 0.0;
};

SweepRow make_sweep_row(double value, Method method, int t_prime, int ensemble_size,
                        double preseg_target, const std::vector<CaseOutcome>& outcomes);

/// Rows are emitted in ascending order of value.
std::string sweep_csv(const std::string& sweep, std::vector<SweepRow> rows);

struct Series {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> error;  ///< optional half-height of error bars
};

/// Minimal standalone SVG line chart: axes with min/max tick labels, one
/// polyline with point markers and optional error bars.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const Series& series);

/// Writes <stem>_binary.pgm (8-bit, 0/255), <stem>_mean.pgm and
/// <stem>_uncertainty.pgm (16-bit, value * 65535 and variance / 0.25 * 65535)
/// and returns the file names written.
std::vector<std::string> export_maps(const std::filesystem::path& directory, const std::string& stem,
                                     const EnsembleResult& result);

/// Writes `contents` to `path`, creating parent directories; IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pdseg
