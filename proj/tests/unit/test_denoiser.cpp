#include <doctest.h>

#include <cmath>

#include "pdseg/conv_denoiser.hpp"
#include "pdseg/denoiser.hpp"

using namespace pdseg;

TEST_CASE("oracle noise prediction for a standard normal target") {
    // x_t ~ N(0, 1) at every step, so E[eps | x_t] = sqrt(1 - alpha_bar) x_t.
    const auto s = build_cosine_schedule(100);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    const MaskGrid x(1, 3, std::vector<double>{-1.5, 0.0, 2.0});
    for (int t : {1, 50, 100}) {
        const MaskGrid eps = oracle.predict(x, ImageGrid(1, 3), t);
        for (int i = 0; i < 3; ++i) {
            CHECK(eps[i] == doctest::Approx(std::sqrt(1.0 - s.alpha_bar(t)) * x[i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("oracle posterior mean") {
    const auto s = build_cosine_schedule(50);
    const GaussianOracleDenoiser oracle(s, 0.4, 0.3);
    // precision-weighted form: (m / s^2 + sqrt(ab) x / (1 - ab)) / (1 / s^2 + ab / (1 - ab))
    for (int t : {1, 10, 25, 50}) {
        const double ab = s.alpha_bar(t);
        for (double x : {-2.0, 0.0, 0.9, 5.0}) {
            const double expected = (0.4 / 0.09 + std::sqrt(ab) * x / (1.0 - ab)) / (1.0 / 0.09 + ab / (1.0 - ab));
            CHECK(oracle.posterior_mean(x, t) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    // at t = T the prior mean dominates
    CHECK(oracle.posterior_mean(5.0, 50) == doctest::Approx(0.4).epsilon(1e-3));
    CHECK_THROWS_AS(GaussianOracleDenoiser(s, 0.0, 0.0), std::invalid_argument);
}

namespace {

class ScaledDenoiser final : public Denoiser {
public:
    ScaledDenoiser(const Denoiser& inner, double scale) : inner_(inner), scale_(scale) {}
    std::vector<MaskGrid> predict_batch(std::span<const MaskGrid> x_t,
                                        std::span<const ImageGrid* const> images,
                                        int t) const override {
        auto out = inner_.predict_batch(x_t, images, t);
        for (auto& g : out) {
            for (auto& v : g.values()) v *= scale_;
        }
        return out;
    }

private:
    const Denoiser& inner_;
    double scale_;
};

}  // namespace

TEST_CASE("oracle minimizes the expected training loss") {
    const auto s = build_cosine_schedule(100);
    const GaussianOracleDenoiser oracle(s, 0.25, 0.5);
    const ScaledDenoiser shrunk(oracle, 0.9), grown(oracle, 1.1);
    Rng rng(17);
    const ImageGrid image(4, 4);
    double l_oracle = 0.0, l_shrunk = 0.0, l_grown = 0.0;
    for (int i = 0; i < 3000; ++i) {
        const int t = 1 + static_cast<int>(rng.uniform_int(100));
        MaskGrid x0 = standard_normal_grid(rng, 4, 4);
        for (auto& v : x0.values()) v = 0.25 + 0.5 * v;
        const MaskGrid noise = standard_normal_grid(rng, 4, 4);
        l_oracle += training_loss(x0, image, t, noise, s, oracle);
        l_shrunk += training_loss(x0, image, t, noise, s, shrunk);
        l_grown += training_loss(x0, image, t, noise, s, grown);
    }
    CHECK(l_oracle < l_shrunk);
    CHECK(l_oracle < l_grown);
}

TEST_CASE("micro denoiser backprop matches central finite differences") {
    const auto s = build_cosine_schedule(50);
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, 4> params{};
        for (auto& p : params) p = rng.normal();
        const MicroDenoiser model(params, 50);
        const MaskGrid x0 = encode_probability(MaskGrid(5, 5, rng.uniform()));
        ImageGrid image(5, 5);
        for (auto& v : image.values()) v = rng.uniform();
        const MaskGrid noise = standard_normal_grid(rng, 5, 5);
        const int t = 1 + static_cast<int>(rng.uniform_int(50));

        std::array<double, 4> grad{};
        const double loss = model.loss_and_grad(x0, image, t, noise, s, grad);
        CHECK(loss == doctest::Approx(training_loss(x0, image, t, noise, s, model)).epsilon(1e-6));
        for (int k = 0; k < 4; ++k) {
            const double h = 1e-5;
            auto plus = params, minus = params;
            plus[k] += h;
            minus[k] -= h;
            const double fd = (training_loss(x0, image, t, noise, s, MicroDenoiser(plus, 50)) -
                               training_loss(x0, image, t, noise, s, MicroDenoiser(minus, 50))) /
                              (2.0 * h);
            CAPTURE(k);
            CHECK(std::abs(grad[k] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-3));
        }
    }
}

TEST_CASE("conv denoiser starts at zero prediction and is batch independent") {
    nn::UNetConfig cfg = default_denoiser_config();
    cfg.base_channels = 4;
    cfg.time_embedding_dim = 8;
    const auto s = build_cosine_schedule(20);
    ConvDenoiser model(cfg, s);
    Rng init(1);
    model.network().initialize(init);
    const MaskGrid x(8, 8, 0.3);
    const ImageGrid image(8, 8, 0.5);
    const MaskGrid eps0 = model.predict(x, image, 7);
    for (double v : eps0.values()) CHECK(v == 0.0);

    // give the head weights so the output depends on the input
    for (auto& p : model.network().params()) {
        if (p.name.starts_with("head.")) {
            for (auto& v : p.value) v = static_cast<float>(init.normal() * 0.1);
        }
    }
    Rng rng(3);
    std::vector<MaskGrid> xs;
    std::vector<ImageGrid> ims;
    for (int i = 0; i < 40; ++i) {
        xs.push_back(standard_normal_grid(rng, 8, 8));
        ImageGrid im(8, 8);
        for (auto& v : im.values()) v = rng.uniform();
        ims.push_back(im);
    }
    std::vector<const ImageGrid*> ptrs;
    for (const auto& im : ims) ptrs.push_back(&im);
    const auto batch = model.predict_batch(xs, ptrs, 11);
    REQUIRE(batch.size() == 40);
    // float GEMM blocking depends on the batch size, so agreement is to rounding
    for (int i : {0, 17, 39}) {
        const MaskGrid single = model.predict(xs[i], ims[i], 11);
        for (std::size_t p = 0; p < single.size(); ++p) CHECK(batch[i][p] == doctest::Approx(single[p]).epsilon(1e-5));
    }
    CHECK_FALSE(batch[0] == batch[1]);
}

TEST_CASE("conv denoiser rejects mismatched inputs") {
    nn::UNetConfig cfg = default_denoiser_config();
    cfg.base_channels = 2;
    cfg.time_embedding_dim = 4;
    const ConvDenoiser model(cfg, build_cosine_schedule(10));
    CHECK_THROWS_AS(model.predict(MaskGrid(8, 8), ImageGrid(4, 4), 1), std::invalid_argument);
    CHECK_THROWS_AS(model.predict(MaskGrid(6, 6), ImageGrid(6, 6), 1), std::invalid_argument);
    CHECK_THROWS_AS(model.predict(MaskGrid(8, 8), ImageGrid(8, 8), 11), std::invalid_argument);
}
