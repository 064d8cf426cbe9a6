#include "pdseg/noise_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pdseg {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::Linear: return "linear";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "cosine") return ScheduleKind::Cosine;
    if (name == "linear") return ScheduleKind::Linear;
    throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::vector<double> betas)
    : kind_(kind), betas_(std::move(betas)) {
    if (betas_.empty()) {
        throw std::invalid_argument("noise schedule needs at least one step");
    }
    alphas_.reserve(betas_.size());
    alpha_bars_.reserve(betas_.size() + 1);
    alpha_bars_.push_back(1.0);
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) {
            throw std::invalid_argument("beta values must lie in (0, 1)");
        }
        alphas_.push_back(1.0 - b);
        alpha_bars_.push_back(alpha_bars_.back() * alphas_.back());
    }
}

void NoiseSchedule::check_step(int t, const char* what) const {
    if (t < 1 || t > total_steps()) {
        throw std::invalid_argument(std::string(what) + ": step " + std::to_string(t) +
                                    " outside 1.." + std::to_string(total_steps()));
    }
}

NoiseSchedule build_cosine_schedule(int total_steps) {
    if (total_steps < 2) {
        throw std::invalid_argument("cosine schedule requires T >= 2");
    }
    const double T = total_steps;
    auto f = [&](int t) {
        const double c = std::cos(((t / T + kCosineOffset) / (1.0 + kCosineOffset)) *
                                  std::numbers::pi / 2.0);
        return c * c;
    };
    const double f0 = f(0);
    std::vector<double> betas(static_cast<std::size_t>(total_steps));
    double prev = 1.0;
    for (int t = 1; t <= total_steps; ++t) {
        const double cur = f(t) / f0;
        betas[t - 1] = std::min(1.0 - cur / prev, kMaxBeta);
        prev = cur;
    }
    return NoiseSchedule(ScheduleKind::Cosine, std::move(betas));
}

NoiseSchedule build_linear_schedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 1) {
        throw std::invalid_argument("linear schedule requires T >= 1");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("linear schedule requires 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(total_steps));
    for (int i = 0; i < total_steps; ++i) {
        const double frac = total_steps == 1 ? 0.0 : static_cast<double>(i) / (total_steps - 1);
        betas[i] = beta_start + frac * (beta_end - beta_start);
    }
    return NoiseSchedule(ScheduleKind::Linear, std::move(betas));
}

}  // namespace pdseg
