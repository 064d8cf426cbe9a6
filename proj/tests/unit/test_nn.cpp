#include <doctest.h>

#include <cmath>

#include "pdseg/conv_denoiser.hpp"
#include "pdseg/nn/adam.hpp"
#include "pdseg/nn/layers.hpp"
#include "pdseg/nn/unet.hpp"

using namespace pdseg;
using namespace pdseg::nn;

namespace {

Tensor<double> random_tensor(Rng& rng, int n, int h, int w, int c) {
    Tensor<double> t(n, h, w, c);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct ConvFixture {
    std::vector<Param<double>> params;
    Conv2d<double> conv;
    ConvFixture(Rng& rng, int cin, int cout, int k) {
        conv.in_channels = cin;
        conv.out_channels = cout;
        conv.kernel = k;
        conv.weight = 0;
        conv.bias = 1;
        Param<double> w{"w", {cout, k, k, cin}, std::vector<double>(static_cast<std::size_t>(cout) * k * k * cin)};
        Param<double> b{"b", {cout}, std::vector<double>(static_cast<std::size_t>(cout))};
        for (auto& v : w.value) v = rng.normal();
        for (auto& v : b.value) v = rng.normal();
        params = {w, b};
    }
};

}  // namespace

TEST_CASE("convolution matches a direct zero-padded sum") {
    Rng rng(1);
    for (int k : {1, 3}) {
        ConvFixture f(rng, 3, 4, k);
        // enough samples to span several im2col chunks
        const Tensor<double> x = random_tensor(rng, 70, 5, 6, 3);
        const Tensor<double> y = f.conv.forward(f.params, x, nullptr);
        const int pad = k / 2;
        const auto& W = f.params[0].value;
        for (int n : {0, 33, 69}) {
            for (int yy = 0; yy < 5; ++yy) {
                for (int xx = 0; xx < 6; ++xx) {
                    for (int o = 0; o < 4; ++o) {
                        double s = f.params[1].value[o];
                        for (int ky = 0; ky < k; ++ky) {
                            for (int kx = 0; kx < k; ++kx) {
                                const int sy = yy + ky - pad, sx = xx + kx - pad;
                                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 6) continue;
                                for (int i = 0; i < 3; ++i) {
                                    s += W[((o * k + ky) * k + kx) * 3 + i] * x.at(n, sy, sx, i);
                                }
                            }
                        }
                        CHECK(y.at(n, yy, xx, o) == doctest::Approx(s).epsilon(1e-12));
                    }
                }
            }
        }
    }
}

TEST_CASE("convolution backward is the adjoint of forward") {
    Rng rng(2);
    ConvFixture f(rng, 2, 3, 3);
    const Tensor<double> x = random_tensor(rng, 4, 6, 5, 2);
    typename Conv2d<double>::Cache cache;
    const Tensor<double> y = f.conv.forward(f.params, x, &cache);
    const Tensor<double> dy = random_tensor(rng, 4, 6, 5, 3);
    auto grads = zero_grads(f.params);
    const Tensor<double> dx = f.conv.backward(f.params, cache, dy, grads);
    // <conv(x) - b, dy> is linear in x: its gradient is dx
    Tensor<double> zero(4, 6, 5, 2);
    const Tensor<double> y0 = f.conv.forward(f.params, zero, nullptr);
    std::vector<double> lin(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) lin[i] = y.data[i] - y0.data[i];
    CHECK(dot(lin, dy.data) == doctest::Approx(dot(x.data, dx.data)).epsilon(1e-11));
}

TEST_CASE("pooling and upsampling backward are adjoints") {
    Rng rng(3);
    const Tensor<double> x = random_tensor(rng, 2, 4, 6, 3);
    const Tensor<double> py = random_tensor(rng, 2, 2, 3, 3);
    CHECK(dot(avg_pool2(x).data, py.data) == doctest::Approx(dot(x.data, avg_pool2_backward(py).data)).epsilon(1e-12));
    const Tensor<double> uy = random_tensor(rng, 2, 4, 6, 3);
    CHECK(dot(upsample2(py).data, uy.data) == doctest::Approx(dot(py.data, upsample2_backward(uy).data)).epsilon(1e-12));
}

TEST_CASE("concat and split are inverse") {
    Rng rng(4);
    const Tensor<double> a = random_tensor(rng, 2, 3, 3, 2), b = random_tensor(rng, 2, 3, 3, 5);
    const Tensor<double> ab = concat_channels(a, b);
    CHECK(ab.c == 7);
    Tensor<double> ra, rb;
    split_channels(ab, 2, ra, rb);
    CHECK(ra.data == a.data);
    CHECK(rb.data == b.data);
}

TEST_CASE("step embedding is bounded and distinguishes steps") {
    const auto e = step_embedding<double>({1, 2, 500}, 16);
    CHECK(e.rows() == 3);
    CHECK(e.cols() == 16);
    CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
    CHECK((e.row(0) - e.row(1)).norm() > 1e-3);
}

TEST_CASE("unet backprop matches central finite differences") {
    UNetConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 1;
    cfg.base_channels = 2;
    cfg.depth = 1;
    cfg.time_embedding_dim = 4;
    UNet<double> net(cfg);
    Rng rng(5);
    net.initialize(rng);
    for (auto& p : net.params()) {
        for (auto& v : p.value) v += 0.3 * rng.normal();  // make biases and head non-zero
    }
    const Tensor<double> x = random_tensor(rng, 2, 4, 4, 2);
    const std::vector<int> steps{3, 17};
    const Tensor<double> r = random_tensor(rng, 2, 4, 4, 1);
    auto loss = [&](const UNet<double>& m) {
        const Tensor<double> out = m.forward(x, steps, nullptr);
        return dot(out.data, r.data);
    };
    typename UNet<double>::Tape tape;
    net.forward(x, steps, &tape);
    auto grads = zero_grads(net.params());
    net.backward(tape, r, grads);

    int checked = 0;
    for (std::size_t pi = 0; pi < net.params().size(); ++pi) {
        auto& p = net.params()[pi];
        for (std::size_t k = 0; k < p.size(); k += 1 + p.size() / 4) {
            const double orig = p.value[k];
            const double h = 1e-6;
            p.value[k] = orig + h;
            const double up = loss(net);
            p.value[k] = orig - h;
            const double down = loss(net);
            p.value[k] = orig;
            const double fd = (up - down) / (2.0 * h);
            CAPTURE(p.name);
            CAPTURE(k);
            CHECK(std::abs(grads[pi][k] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-2));
            ++checked;
        }
    }
    CHECK(checked > 40);
}

TEST_CASE("denoiser loss gradient matches finite differences") {
    UNetConfig cfg = default_denoiser_config();
    cfg.base_channels = 2;
    cfg.depth = 1;
    cfg.time_embedding_dim = 4;
    UNet<double> net(cfg);
    Rng rng(6);
    net.initialize(rng);
    for (auto& p : net.params()) {
        for (auto& v : p.value) v += 0.2 * rng.normal();
    }
    const auto s = build_cosine_schedule(30);
    std::vector<MaskGrid> x0{encode_probability(MaskGrid(4, 4, 1.0)), encode_probability(MaskGrid(4, 4, 0.0))};
    ImageGrid im(4, 4);
    for (auto& v : im.values()) v = rng.uniform();
    const std::vector<const ImageGrid*> images{&im, &im};
    const std::vector<MaskGrid> noise{standard_normal_grid(rng, 4, 4), standard_normal_grid(rng, 4, 4)};
    const std::vector<int> steps{4, 25};
    auto grads = zero_grads(net.params());
    denoiser_loss_and_grad<double>(net, x0, images, steps, noise, s, &grads);
    for (std::size_t pi = 0; pi < net.params().size(); pi += 3) {
        auto& p = net.params()[pi];
        const std::size_t k = p.size() / 2;
        const double orig = p.value[k];
        const double h = 1e-6;
        p.value[k] = orig + h;
        const double up = denoiser_loss_and_grad<double>(net, x0, images, steps, noise, s, nullptr);
        p.value[k] = orig - h;
        const double down = denoiser_loss_and_grad<double>(net, x0, images, steps, noise, s, nullptr);
        p.value[k] = orig;
        const double fd = (up - down) / (2.0 * h);
        CAPTURE(p.name);
        CHECK(std::abs(grads[pi][k] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-2));
    }
}

TEST_CASE("adam first step moves each weight by the learning rate against its gradient") {
    std::vector<Param<double>> params{{"w", {3}, {1.0, -2.0, 0.5}}};
    Grads<double> g{{0.3, -4.0, 0.0}};
    AdamOptions opt;
    opt.learning_rate = 0.01;
    opt.weight_decay = 0.0;
    Adam<double> adam(opt);
    adam.step(params, g);
    CHECK(params[0].value[0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(params[0].value[1] == doctest::Approx(-1.99).epsilon(1e-6));
    CHECK(params[0].value[2] == 0.5);
    CHECK(adam.steps_taken() == 1);
}

TEST_CASE("unet rejects inputs it cannot pool") {
    UNetConfig cfg;
    cfg.base_channels = 2;
    cfg.time_embedding_dim = 4;
    const UNet<double> net(cfg);
    CHECK_THROWS_AS(net.forward(Tensor<double>(1, 6, 6, 2), {1}, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(net.forward(Tensor<double>(1, 8, 8, 3), {1}, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(net.forward(Tensor<double>(2, 8, 8, 2), {1}, nullptr), std::invalid_argument);
    UNetConfig bad = cfg;
    bad.base_channels = 0;
    CHECK_THROWS_AS(UNet<double>{bad}, std::invalid_argument);
}
