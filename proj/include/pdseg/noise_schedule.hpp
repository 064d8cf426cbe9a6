#pragma once

#include <string>
#include <vector>

namespace pdseg {

enum class ScheduleKind { Cosine, Linear };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Variance schedule over transitions t = 1..T.
///
/// beta(t), alpha(t) take t in 1..T; alpha_bar(t) takes t in 0..T with
/// alpha_bar(0) = 1. alpha_bar is always the running product of the stored
/// (already clipped) betas, so alpha_bar(t) == alpha_bar(t-1) * alpha(t)
/// holds bit-for-bit.
class NoiseSchedule {
public:
    /// Builds a schedule directly from betas (t = 1..T order).
    NoiseSchedule(ScheduleKind kind, std::vector<double> betas);

    int total_steps() const { return static_cast<int>(betas_.size()); }
    ScheduleKind kind() const { return kind_; }

    double beta(int t) const { return betas_.at(static_cast<std::size_t>(t) - 1); }
    double alpha(int t) const { return alphas_.at(static_cast<std::size_t>(t) - 1); }
    double alpha_bar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t)); }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

    /// Throws std::invalid_argument unless 1 <= t <= T.
    void check_step(int t, const char* what) const;

    bool operator==(const NoiseSchedule&) const = default;

private:
    ScheduleKind kind_;
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMaxBeta = 0.999;

/// Improved-DDPM cosine schedule: alpha_bar follows
/// cos^2(((t/T + s)/(1 + s)) * pi/2) normalized by its t = 0 value, betas are
/// derived from consecutive ratios and clipped to kMaxBeta.
NoiseSchedule build_cosine_schedule(int total_steps);

/// Betas linearly interpolated from beta_start to beta_end inclusive.
NoiseSchedule build_linear_schedule(int total_steps, double beta_start, double beta_end);

}  // namespace pdseg
