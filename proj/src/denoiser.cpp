#include "pdseg/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "pdseg/diffusion.hpp"

namespace pdseg {

MaskGrid Denoiser::predict(const MaskGrid& x_t, const ImageGrid& image, int t) const {
    const ImageGrid* images[] = {&image};
    return predict_batch({&x_t, 1}, images, t).front();
}

GaussianOracleDenoiser::GaussianOracleDenoiser(NoiseSchedule schedule, double target_mean,
                                               double target_std)
    : schedule_(std::move(schedule)), mean_(target_mean), std_(target_std) {
    if (!(target_std > 0.0)) {
        throw std::invalid_argument("oracle target std must be positive");
    }
}

double GaussianOracleDenoiser::posterior_mean(double x_t, int t) const {
    // x_t = sqrt(ab) x0 + sqrt(1 - ab) eps with x0 ~ N(m, s^2):
    // E[x0 | x_t] = m + sqrt(ab) s^2 / (ab s^2 + 1 - ab) * (x_t - sqrt(ab) m).
    const double ab = schedule_.alpha_bar(t);
    const double s2 = std_ * std_;
    const double gain = std::sqrt(ab) * s2 / (ab * s2 + 1.0 - ab);
    return mean_ + gain * (x_t - std::sqrt(ab) * mean_);
}

std::vector<MaskGrid> GaussianOracleDenoiser::predict_batch(
    std::span<const MaskGrid> x_t, std::span<const ImageGrid* const> images, int t) const {
    schedule_.check_step(t, "oracle predict");
    if (images.size() != x_t.size()) {
        throw std::invalid_argument("oracle predict: batch size mismatch");
    }
    const double ab = schedule_.alpha_bar(t);
    const double sa = std::sqrt(ab);
    const double inv_sigma = 1.0 / std::sqrt(1.0 - ab);
    std::vector<MaskGrid> out;
    out.reserve(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        require_same_shape(x_t[i], *images[i], "oracle predict");
        MaskGrid eps(x_t[i].height(), x_t[i].width());
        for (std::size_t p = 0; p < eps.size(); ++p) {
            const double x = x_t[i][p];
            eps[p] = (x - sa * posterior_mean(x, t)) * inv_sigma;
        }
        out.push_back(std::move(eps));
    }
    return out;
}

double training_loss(const MaskGrid& x0, const ImageGrid& image, int t, const MaskGrid& noise,
                     const NoiseSchedule& schedule, const Denoiser& model) {
    const MaskGrid x_t = q_sample(x0, t, schedule, noise);
    const MaskGrid eps = model.predict(x_t, image, t);
    require_same_shape(eps, noise, "training_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double d = eps[i] - noise[i];
        sum += d * d;
    }
    return sum / static_cast<double>(eps.size());
}

}  // namespace pdseg
