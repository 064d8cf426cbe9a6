#include <doctest.h>

#include <atomic>
#include <cmath>

#include "pdseg/denoiser.hpp"
#include "pdseg/diffusion.hpp"

using namespace pdseg;

namespace {

/// Records every call so tests can count network evaluations per chain.
class CountingDenoiser final : public Denoiser {
public:
    explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}
    std::vector<MaskGrid> predict_batch(std::span<const MaskGrid> x_t,
                                        std::span<const ImageGrid* const> images,
                                        int t) const override {
        calls += 1;
        evaluations += static_cast<long>(x_t.size());
        return inner_.predict_batch(x_t, images, t);
    }
    mutable std::atomic<long> calls{0};
    mutable std::atomic<long> evaluations{0};

private:
    const Denoiser& inner_;
};

MaskGrid random_grid(Rng& rng, int h, int w, double scale) {
    MaskGrid g = standard_normal_grid(rng, h, w);
    for (auto& v : g.values()) v *= scale;
    return g;
}

}  // namespace

TEST_CASE("q_sample is the closed-form affine map") {
    const auto s = build_cosine_schedule(50);
    MaskGrid x0(1, 2, std::vector<double>{1.0, -1.0});
    MaskGrid noise(1, 2, std::vector<double>{0.5, 2.0});
    const MaskGrid xt = q_sample(x0, 20, s, noise);
    const double a = std::sqrt(s.alpha_bar(20));
    const double b = std::sqrt(1.0 - s.alpha_bar(20));
    CHECK(xt[0] == doctest::Approx(a + 0.5 * b).epsilon(1e-15));
    CHECK(xt[1] == doctest::Approx(-a + 2.0 * b).epsilon(1e-15));
    CHECK_THROWS_AS(q_sample(x0, 0, s, noise), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(x0, 51, s, noise), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(x0, 1, s, MaskGrid(2, 1)), std::invalid_argument);
}

TEST_CASE("q_sample marginal moments") {
    const auto s = build_cosine_schedule(100);
    Rng rng(11);
    const int n = 20000;
    for (int t : {1, 25, 50, 100}) {
        double sum = 0.0, sq = 0.0;
        const MaskGrid x0(1, 1, 0.6);
        for (int i = 0; i < n; ++i) {
            const double v = q_sample(x0, t, s, standard_normal_grid(rng, 1, 1))[0];
            sum += v;
            sq += v * v;
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        const double ab = s.alpha_bar(t);
        CAPTURE(t);
        CHECK(std::abs(mean - std::sqrt(ab) * 0.6) < 5.0 * std::sqrt((1.0 - ab) / n));
        CHECK(std::abs(var - (1.0 - ab)) < 5.0 * (1.0 - ab) * std::sqrt(2.0 / n));
    }
}

TEST_CASE("chained q_step matches the closed-form marginal") {
    const auto s = build_cosine_schedule(40);
    Rng rng(3);
    const int n = 10000;
    const double x0v = -0.8;
    for (int t : {1, 10, 20, 40}) {
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            MaskGrid x(1, 1, x0v);
            for (int k = 1; k <= t; ++k) x = q_step(x, k, s, standard_normal_grid(rng, 1, 1));
            sum += x[0];
            sq += x[0] * x[0];
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        const double ab = s.alpha_bar(t);
        CAPTURE(t);
        CHECK(std::abs(mean - std::sqrt(ab) * x0v) < 5.0 * std::sqrt((1.0 - ab) / n));
        CHECK(std::abs(var - (1.0 - ab)) < 5.0 * (1.0 - ab) * std::sqrt(2.0 / n));
    }
}

TEST_CASE("predict_x0 inverts q_sample with the true noise") {
    const auto s = build_cosine_schedule(1000);
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        const int t = 1 + static_cast<int>(rng.uniform_int(1000));
        const MaskGrid x0 = random_grid(rng, 3, 4, 1.0);
        const MaskGrid noise = standard_normal_grid(rng, 3, 4);
        const MaskGrid back = predict_x0(q_sample(x0, t, s, noise), noise, t, s);
        for (std::size_t p = 0; p < x0.size(); ++p) CHECK(std::abs(back[p] - x0[p]) <= 1e-9);
    }
}

TEST_CASE("reverse mean with the true noise equals the forward posterior mean") {
    const auto s = build_cosine_schedule(200);
    Rng rng(5);
    for (int t : {2, 17, 100, 200}) {
        const MaskGrid x0 = random_grid(rng, 2, 3, 1.0);
        const MaskGrid noise = standard_normal_grid(rng, 2, 3);
        const MaskGrid xt = q_sample(x0, t, s, noise);
        const auto p = reverse_step_params(xt, noise, t, s, SigmaRule::BetaTilde);
        const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1);
        const double c0 = std::sqrt(ab_prev) * s.beta(t) / (1.0 - ab);
        const double ct = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
        for (std::size_t k = 0; k < x0.size(); ++k) {
            CHECK(p.mean[k] == doctest::Approx(c0 * x0[k] + ct * xt[k]).epsilon(1e-9));
        }
        CHECK(p.variance == doctest::Approx(s.beta(t) * (1.0 - ab_prev) / (1.0 - ab)).epsilon(1e-14));
        CHECK(reverse_step_params(xt, noise, t, s, SigmaRule::Beta).variance == s.beta(t));
    }
}

TEST_CASE("reverse step at t=1 is deterministic under both rules") {
    const auto s = build_cosine_schedule(10);
    const MaskGrid x(2, 2, 0.3), e(2, 2, -0.1);
    CHECK(reverse_step_params(x, e, 1, s, SigmaRule::Beta).variance == 0.0);
    CHECK(reverse_step_params(x, e, 1, s, SigmaRule::BetaTilde).variance == 0.0);
}

TEST_CASE("sampler evaluation counts") {
    const auto s = build_cosine_schedule(60);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    const CountingDenoiser counter(oracle);
    const ImageGrid image(4, 4, 0.0);
    const MaskGrid preseg(4, 4, 0.7);
    SamplerConfig cfg;

    const auto v = vanilla_sample(image, counter, s, cfg, Rng(1));
    CHECK(v.nfe == 60);
    CHECK(counter.evaluations == 60);

    for (int tp : {0, 1, 18, 60}) {
        counter.evaluations = 0;
        const auto r = pd_sample(image, preseg, counter, s, tp, cfg, Rng(2));
        CHECK(r.nfe == tp);
        CHECK(counter.evaluations == tp);
    }
}

TEST_CASE("pd sampler at T'=0 returns the encoded pre-segmentation") {
    const auto s = build_cosine_schedule(30);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    MaskGrid p(2, 3, std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0, 0.1});
    const auto r = pd_sample(ImageGrid(2, 3), p, oracle, s, 0, {}, Rng(8));
    CHECK(r.x0 == encode_probability(p));
    const MaskGrid back = decode_to_probability(r.x0);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(back[i] == doctest::Approx(p[i]).epsilon(1e-15));
}

TEST_CASE("sampler argument validation") {
    const auto s = build_cosine_schedule(30);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    const ImageGrid image(2, 2);
    CHECK_THROWS_AS(pd_sample(image, MaskGrid(2, 2, 0.5), oracle, s, 31, {}, Rng(0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(pd_sample(image, MaskGrid(2, 2, 0.5), oracle, s, -1, {}, Rng(0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(pd_sample(image, MaskGrid(2, 2, 1.5), oracle, s, 3, {}, Rng(0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(pd_sample(image, MaskGrid(3, 2, 0.5), oracle, s, 3, {}, Rng(0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(sigma_rule_from_string("fixed"), std::invalid_argument);
    CHECK(sigma_rule_from_string(to_string(SigmaRule::Beta)) == SigmaRule::Beta);
}

TEST_CASE("samplers are deterministic given the stream") {
    const auto s = build_cosine_schedule(25);
    const GaussianOracleDenoiser oracle(s, 0.2, 0.4);
    const ImageGrid image(3, 3);
    const MaskGrid p(3, 3, 0.6);
    CHECK(vanilla_sample(image, oracle, s, {}, Rng(4)).x0 == vanilla_sample(image, oracle, s, {}, Rng(4)).x0);
    CHECK(pd_sample(image, p, oracle, s, 9, {}, Rng(4)).x0 == pd_sample(image, p, oracle, s, 9, {}, Rng(4)).x0);
    CHECK_FALSE(vanilla_sample(image, oracle, s, {}, Rng(4)).x0 ==
                vanilla_sample(image, oracle, s, {}, Rng(5)).x0);
}

TEST_CASE("batched and single-chain samplers agree") {
    const auto s = build_cosine_schedule(20);
    const GaussianOracleDenoiser oracle(s, -0.3, 0.7);
    const ImageGrid image(2, 2);
    const MaskGrid p(2, 2, 0.3);
    std::vector<Rng> rngs{Rng(1), Rng(2), Rng(3)};
    const std::vector<const ImageGrid*> images(3, &image);
    const std::vector<const MaskGrid*> presegs(3, &p);
    const auto batch = pd_sample_batch(images, presegs, oracle, s, 12, SigmaRule::BetaTilde, rngs);
    for (int i = 0; i < 3; ++i) {
        CHECK(batch[i].x0 == pd_sample(image, p, oracle, s, 12, {}, Rng(i + 1)).x0);
    }
}

// Analytic endpoint moments of the reverse chain driven by the exact
// Gaussian oracle, from tests/oracles/schedule_and_sampler.py. The chain is
// linear in the noise, so these are exact; the sampled pixel-averaged
// variance of 2000 chains x 64 pixels has standard error below 0.001.
TEST_CASE("oracle-driven vanilla chain matches analytic endpoint moments") {
    const auto s = build_cosine_schedule(100);
    const int n = 2000;
    const ImageGrid image(8, 8);
    const std::vector<const ImageGrid*> images(n, &image);

    struct Case {
        double m, sd;
        SigmaRule rule;
        double mean, var;
    };
    const Case cases[] = {
        {0.25, 0.5, SigmaRule::BetaTilde, 0.24999998482142055, 0.23274558696830225},
        {0.25, 0.5, SigmaRule::Beta, 0.24999998482142055, 0.25400816066130727},
        {0.0, 1.0, SigmaRule::BetaTilde, 0.0, 0.9546089871567445},
    };
    for (const auto& c : cases) {
        const GaussianOracleDenoiser oracle(s, c.m, c.sd);
        std::vector<Rng> rngs;
        for (int i = 0; i < n; ++i) rngs.push_back(Rng(21).derive("chain", i));
        const auto runs = vanilla_sample_batch(images, oracle, s, c.rule, rngs);
        double sum = 0.0, sq = 0.0;
        const double count = static_cast<double>(n) * 64;
        for (const auto& r : runs) {
            for (double v : r.x0.values()) {
                sum += v;
                sq += v * v;
            }
        }
        const double mean = sum / count;
        const double var = sq / count - mean * mean;
        CAPTURE(c.m);
        CAPTURE(c.sd);
        CHECK(std::abs(mean - c.mean) < 5.0 * std::sqrt(c.var / count));
        // pixels of one chain are independent, so the pooled variance
        // estimate has relative standard error sqrt(2 / count)
        CHECK(std::abs(var - c.var) < 5.0 * c.var * std::sqrt(2.0 / count));
    }
}
