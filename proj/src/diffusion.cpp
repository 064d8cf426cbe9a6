#include "pdseg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdseg {

std::string to_string(SigmaRule rule) {
    return rule == SigmaRule::Beta ? "beta" : "beta_tilde";
}

SigmaRule sigma_rule_from_string(const std::string& name) {
    if (name == "beta") return SigmaRule::Beta;
    if (name == "beta_tilde") return SigmaRule::BetaTilde;
    throw std::invalid_argument("unknown sigma rule '" + name + "'");
}

namespace {

MaskGrid affine_combine(const MaskGrid& a, double ca, const MaskGrid& b, double cb) {
    MaskGrid out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
    return out;
}

void check_chain_inputs(std::size_t n, std::size_t images, std::size_t rngs) {
    if (images != n || rngs != n) {
        throw std::invalid_argument("sampler: chains, images and rng streams must have equal counts");
    }
}

}  // namespace

MaskGrid q_sample(const MaskGrid& x0, int t, const NoiseSchedule& schedule, const MaskGrid& noise) {
    schedule.check_step(t, "q_sample");
    require_same_shape(x0, noise, "q_sample");
    const double ab = schedule.alpha_bar(t);
    return affine_combine(x0, std::sqrt(ab), noise, std::sqrt(1.0 - ab));
}

MaskGrid q_step(const MaskGrid& x_prev, int t, const NoiseSchedule& schedule, const MaskGrid& noise) {
    schedule.check_step(t, "q_step");
    require_same_shape(x_prev, noise, "q_step");
    const double b = schedule.beta(t);
    return affine_combine(x_prev, std::sqrt(1.0 - b), noise, std::sqrt(b));
}

ReverseStepParams reverse_step_params(const MaskGrid& x_t, const MaskGrid& eps_hat, int t,
                                      const NoiseSchedule& schedule, SigmaRule rule) {
    schedule.check_step(t, "reverse_step_params");
    require_same_shape(x_t, eps_hat, "reverse_step_params");
    const double beta = schedule.beta(t);
    const double ab = schedule.alpha_bar(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    const double eps_coef = beta / std::sqrt(1.0 - ab);

    ReverseStepParams p;
    p.t = t;
    p.mean = affine_combine(x_t, inv_sqrt_alpha, eps_hat, -inv_sqrt_alpha * eps_coef);
    if (t == 1) {
        p.variance = 0.0;
    } else if (rule == SigmaRule::Beta) {
        p.variance = beta;
    } else {
        p.variance = beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - ab);
    }
    return p;
}

MaskGrid predict_x0(const MaskGrid& x_t, const MaskGrid& eps_hat, int t,
                    const NoiseSchedule& schedule) {
    schedule.check_step(t, "predict_x0");
    require_same_shape(x_t, eps_hat, "predict_x0");
    const double ab = schedule.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);
    return affine_combine(x_t, inv, eps_hat, -std::sqrt(1.0 - ab) * inv);
}

std::vector<SampleResult> reverse_chain(std::vector<MaskGrid> states, int t_start,
                                        std::span<const ImageGrid* const> images,
                                        const Denoiser& denoiser, const NoiseSchedule& schedule,
                                        SigmaRule rule, std::span<Rng> rngs) {
    check_chain_inputs(states.size(), images.size(), rngs.size());
    if (t_start < 0 || t_start > schedule.total_steps()) {
        throw std::invalid_argument("reverse_chain: start step outside 0..T");
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        require_same_shape(states[i], *images[i], "reverse_chain");
    }
    for (int t = t_start; t >= 1; --t) {
        const std::vector<MaskGrid> eps = denoiser.predict_batch(states, images, t);
        if (eps.size() != states.size()) {
            throw std::runtime_error("denoiser returned the wrong number of predictions");
        }
        for (std::size_t i = 0; i < states.size(); ++i) {
            ReverseStepParams p = reverse_step_params(states[i], eps[i], t, schedule, rule);
            if (p.variance > 0.0) {
                const double sd = std::sqrt(p.variance);
                for (auto& v : p.mean.values()) v += sd * rngs[i].normal();
            }
            states[i] = std::move(p.mean);
        }
    }
    std::vector<SampleResult> out;
    out.reserve(states.size());
    for (auto& s : states) out.push_back({std::move(s), t_start});
    return out;
}

std::vector<SampleResult> vanilla_sample_batch(std::span<const ImageGrid* const> images,
                                               const Denoiser& denoiser,
                                               const NoiseSchedule& schedule, SigmaRule rule,
                                               std::span<Rng> rngs) {
    check_chain_inputs(images.size(), images.size(), rngs.size());
    std::vector<MaskGrid> starts;
    starts.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        starts.push_back(standard_normal_grid(rngs[i], images[i]->height(), images[i]->width()));
    }
    return reverse_chain(std::move(starts), schedule.total_steps(), images, denoiser, schedule,
                         rule, rngs);
}

SampleResult vanilla_sample(const ImageGrid& image, const Denoiser& denoiser,
                            const NoiseSchedule& schedule, const SamplerConfig& config, Rng rng) {
    const ImageGrid* images[] = {&image};
    return vanilla_sample_batch(images, denoiser, schedule, config.sigma_rule, {&rng, 1}).front();
}

std::vector<SampleResult> pd_sample_batch(std::span<const ImageGrid* const> images,
                                          std::span<const MaskGrid* const> preseg_probs,
                                          const Denoiser& denoiser, const NoiseSchedule& schedule,
                                          int t_prime, SigmaRule rule, std::span<Rng> rngs) {
    check_chain_inputs(images.size(), preseg_probs.size(), rngs.size());
    if (t_prime < 0 || t_prime > schedule.total_steps()) {
        throw std::invalid_argument("pd_sample: t_prime " + std::to_string(t_prime) +
                                    " outside 0.." + std::to_string(schedule.total_steps()));
    }
    std::vector<MaskGrid> starts;
    starts.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const MaskGrid& p = *preseg_probs[i];
        require_same_shape(p, *images[i], "pd_sample");
        for (double v : p.values()) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw std::invalid_argument("pd_sample: pre-segmentation must lie in [0, 1]");
            }
        }
        MaskGrid encoded = encode_probability(p);
        if (t_prime > 0) {
            const MaskGrid noise = standard_normal_grid(rngs[i], p.height(), p.width());
            encoded = q_sample(encoded, t_prime, schedule, noise);
        }
        starts.push_back(std::move(encoded));
    }
    return reverse_chain(std::move(starts), t_prime, images, denoiser, schedule, rule, rngs);
}

SampleResult pd_sample(const ImageGrid& image, const MaskGrid& preseg_prob,
                       const Denoiser& denoiser, const NoiseSchedule& schedule, int t_prime,
                       const SamplerConfig& config, Rng rng) {
    const ImageGrid* images[] = {&image};
    const MaskGrid* presegs[] = {&preseg_prob};
    return pd_sample_batch(images, presegs, denoiser, schedule, t_prime, config.sigma_rule,
                           {&rng, 1})
        .front();
}

MaskGrid decode_to_probability(const MaskGrid& x0) {
    MaskGrid out(x0.height(), x0.width());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = std::clamp((x0[i] + 1.0) / 2.0, 0.0, 1.0);
    return out;
}

MaskGrid encode_probability(const MaskGrid& prob) {
    MaskGrid out(prob.height(), prob.width());
    for (std::size_t i = 0; i < prob.size(); ++i) out[i] = 2.0 * prob[i] - 1.0;
    return out;
}

}  // namespace pdseg
