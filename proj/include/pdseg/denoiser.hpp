#pragma once

#include <span>
#include <vector>

#include "pdseg/grid.hpp"
#include "pdseg/noise_schedule.hpp"

namespace pdseg {

/// Noise-predicting conditional denoiser: given x_t, the conditioning image
/// and the step t, returns an estimate of the noise that produced x_t.
///
/// Samplers only see this interface, so a trained network and the closed-form
/// Gaussian oracle are interchangeable. Implementations must be deterministic
/// and safe to call concurrently.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    /// One prediction per (x_t[i], *images[i]) pair, all at step t.
    virtual std::vector<MaskGrid> predict_batch(std::span<const MaskGrid> x_t,
                                                std::span<const ImageGrid* const> images,
                                                int t) const = 0;

    MaskGrid predict(const MaskGrid& x_t, const ImageGrid& image, int t) const;
};

/// Exact noise predictor for data distributed as N(m * 1, s^2 * I),
/// independent of the image. Used to check samplers without training.
class GaussianOracleDenoiser final : public Denoiser {
public:
    GaussianOracleDenoiser(NoiseSchedule schedule, double target_mean, double target_std);

    std::vector<MaskGrid> predict_batch(std::span<const MaskGrid> x_t,
                                        std::span<const ImageGrid* const> images,
                                        int t) const override;

    /// Posterior mean E[x0 | x_t] for a single value.
    double posterior_mean(double x_t, int t) const;

    double target_mean() const { return mean_; }
    double target_std() const { return std_; }

private:
    NoiseSchedule schedule_;
    double mean_;
    double std_;
};

/// Mean squared error between `noise` and the model's prediction at
/// q_sample(x0, t, noise).
double training_loss(const MaskGrid& x0, const ImageGrid& image, int t, const MaskGrid& noise,
                     const NoiseSchedule& schedule, const Denoiser& model);

}  // namespace pdseg
