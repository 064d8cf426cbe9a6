#include "pdseg/conv_denoiser.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "pdseg/nn/adam.hpp"

namespace pdseg {

ConvDenoiser::ConvDenoiser(nn::UNetConfig config, NoiseSchedule schedule)
    : net_(config), schedule_(std::move(schedule)) {
    if (config.in_channels != 2 || config.out_channels != 1) {
        throw std::invalid_argument("conv denoiser needs 2 input channels and 1 output channel");
    }
    if (config.time_embedding_dim <= 0) {
        throw std::invalid_argument("conv denoiser needs step conditioning");
    }
}

ConvDenoiser ConvDenoiser::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "denoiser") {
        throw std::invalid_argument("checkpoint kind is '" + ckpt.kind + "', expected 'denoiser'");
    }
    if (!ckpt.schedule) throw std::invalid_argument("denoiser checkpoint carries no schedule");
    ConvDenoiser d(ckpt.config, *ckpt.schedule);
    load_params(ckpt, d.net_);
    return d;
}

Checkpoint ConvDenoiser::to_checkpoint() const {
    return Checkpoint{"denoiser", net_.config(), schedule_, net_.params()};
}

std::vector<MaskGrid> ConvDenoiser::predict_batch(std::span<const MaskGrid> x_t,
                                                  std::span<const ImageGrid* const> images,
                                                  int t) const {
    schedule_.check_step(t, "denoiser predict");
    if (images.size() != x_t.size()) {
        throw std::invalid_argument("denoiser predict: batch size mismatch");
    }
    std::vector<MaskGrid> out;
    out.reserve(x_t.size());
    for (std::size_t start = 0; start < x_t.size(); start += kMaxChunk) {
        const std::size_t n = std::min(kMaxChunk, x_t.size() - start);
        const auto input = pack_denoiser_input<float>(x_t.subspan(start, n), images.subspan(start, n));
        const std::vector<int> steps(n, t);
        const nn::Tensor<float> eps = net_.forward(input, steps, nullptr);
        const std::size_t hw = static_cast<std::size_t>(eps.h) * eps.w;
        for (std::size_t i = 0; i < n; ++i) {
            MaskGrid g(eps.h, eps.w);
            for (std::size_t p = 0; p < hw; ++p) g[p] = eps.data[i * hw + p];
            out.push_back(std::move(g));
        }
    }
    return out;
}

namespace {

struct Draw {
    MaskGrid x0;
    ImageGrid image;
    int t = 1;
    MaskGrid noise;
};

double batched_loss(const nn::UNet<float>& net, const std::vector<Draw>& draws,
                    const NoiseSchedule& schedule) {
    double weighted = 0.0;
    for (std::size_t start = 0; start < draws.size(); start += ConvDenoiser::kMaxChunk) {
        const std::size_t n = std::min(ConvDenoiser::kMaxChunk, draws.size() - start);
        std::vector<MaskGrid> x0, noise;
        std::vector<const ImageGrid*> images;
        std::vector<int> steps;
        for (std::size_t i = start; i < start + n; ++i) {
            x0.push_back(draws[i].x0);
            noise.push_back(draws[i].noise);
            images.push_back(&draws[i].image);
            steps.push_back(draws[i].t);
        }
        weighted += static_cast<double>(n) *
                    denoiser_loss_and_grad<float>(net, x0, images, steps, noise, schedule, nullptr);
    }
    return draws.empty() ? 0.0 : weighted / static_cast<double>(draws.size());
}

Draw make_draw(const Case& c, int k, int total_steps, Rng& rng) {
    Draw d;
    d.x0 = encode_binary(dihedral(c.gt, k));
    d.image = dihedral(c.image, k);
    d.t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(total_steps)));
    d.noise = standard_normal_grid(rng, c.gt.height(), c.gt.width());
    return d;
}

}  // namespace

TrainReport train_denoiser(ConvDenoiser& model, const std::vector<const Case*>& train,
                           const std::vector<const Case*>& val, const TrainOptions& options,
                           Rng rng, const EpochCallback& on_epoch) {
    if (train.empty()) throw std::invalid_argument("train_denoiser: empty training split");
    if (options.epochs < 1 || options.batch_size < 1) {
        throw std::invalid_argument("train_denoiser: epochs and batch size must be positive");
    }
    auto& net = model.network();
    const NoiseSchedule& schedule = model.schedule();
    const int T = schedule.total_steps();
    const int steps_per_epoch =
        options.steps_per_epoch > 0
            ? options.steps_per_epoch
            : static_cast<int>((train.size() + options.batch_size - 1) / options.batch_size);
    const bool square = train.front()->gt.height() == train.front()->gt.width();
    const std::uint64_t n_transforms = options.augment ? (square ? 8 : 4) : 1;

    std::vector<Draw> val_draws;
    Rng val_rng = rng.derive("val");
    for (const Case* c : val) {
        for (int k = 0; k < options.val_draws; ++k) val_draws.push_back(make_draw(*c, 0, T, val_rng));
    }

    nn::Adam<float> adam({options.learning_rate, 0.9, 0.999, 1e-8, options.weight_decay});
    TrainReport report;
    report.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<nn::Param<float>> best = net.params();

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        Rng er = rng.derive("epoch", static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<Draw> batch;
            for (int b = 0; b < options.batch_size; ++b) {
                const Case& c = *train[er.uniform_int(train.size())];
                const int k = static_cast<int>(er.uniform_int(n_transforms));
                batch.push_back(make_draw(c, k, T, er));
            }
            std::vector<MaskGrid> x0, noise;
            std::vector<const ImageGrid*> images;
            std::vector<int> steps;
            for (const auto& d : batch) {
                x0.push_back(d.x0);
                noise.push_back(d.noise);
                images.push_back(&d.image);
                steps.push_back(d.t);
            }
            nn::Grads<float> grads = nn::zero_grads(net.params());
            epoch_loss += denoiser_loss_and_grad<float>(net, x0, images, steps, noise, schedule, &grads);
            adam.step(net.params(), grads);
        }
        epoch_loss /= steps_per_epoch;
        const double val_loss = val_draws.empty() ? epoch_loss : batched_loss(net, val_draws, schedule);
        report.train_loss.push_back(epoch_loss);
        report.val_loss.push_back(val_loss);
        if (val_loss < report.best_val_loss) {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best = net.params();
        }
        if (on_epoch) on_epoch(epoch, epoch_loss, val_loss);
    }
    net.params() = std::move(best);
    return report;
}

MicroDenoiser::MicroDenoiser(std::array<double, 4> params, int total_steps)
    : params_(params), total_steps_(total_steps) {
    if (total_steps < 1) throw std::invalid_argument("micro denoiser: total_steps must be positive");
}

namespace {

// The 1x1 convolution holds (w_mask, w_image) and the bias; the step gain
// is the fourth parameter.
struct MicroLayer {
    std::vector<nn::Param<double>> params;
    nn::Conv2d<double> conv;

    explicit MicroLayer(const std::array<double, 4>& p) {
        params.push_back({"conv.weight", {1, 1, 1, 2}, {p[0], p[1]}});
        params.push_back({"conv.bias", {1}, {p[2]}});
        conv.in_channels = 2;
        conv.out_channels = 1;
        conv.kernel = 1;
        conv.weight = 0;
        conv.bias = 1;
    }
};

}  // namespace

std::vector<MaskGrid> MicroDenoiser::predict_batch(std::span<const MaskGrid> x_t,
                                                   std::span<const ImageGrid* const> images,
                                                   int t) const {
    if (images.size() != x_t.size()) {
        throw std::invalid_argument("micro denoiser: batch size mismatch");
    }
    const MicroLayer layer(params_);
    const double step_term = params_[3] * t / total_steps_;
    std::vector<MaskGrid> out;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const auto input = pack_denoiser_input<double>(x_t.subspan(i, 1), images.subspan(i, 1));
        const auto y = layer.conv.forward(layer.params, input, nullptr);
        MaskGrid g(y.h, y.w);
        for (std::size_t p = 0; p < g.size(); ++p) g[p] = y.data[p] + step_term;
        out.push_back(std::move(g));
    }
    return out;
}

double MicroDenoiser::loss_and_grad(const MaskGrid& x0, const ImageGrid& image, int t,
                                    const MaskGrid& noise, const NoiseSchedule& schedule,
                                    std::array<double, 4>& grad) const {
    const MaskGrid x_t = q_sample(x0, t, schedule, noise);
    const ImageGrid* images[] = {&image};
    const MicroLayer layer(params_);
    const auto input = pack_denoiser_input<double>({&x_t, 1}, images);
    typename nn::Conv2d<double>::Cache cache;
    const auto y = layer.conv.forward(layer.params, input, &cache);
    const double step_feature = static_cast<double>(t) / total_steps_;

    const double count = static_cast<double>(y.size());
    nn::Tensor<double> dy(y.n, y.h, y.w, y.c);
    double loss = 0.0;
    double dstep = 0.0;
    for (std::size_t p = 0; p < y.size(); ++p) {
        const double d = y.data[p] + params_[3] * step_feature - noise[p];
        loss += d * d;
        dy.data[p] = 2.0 * d / count;
        dstep += dy.data[p] * step_feature;
    }
    nn::Grads<double> g = nn::zero_grads(layer.params);
    layer.conv.backward(layer.params, cache, dy, g);
    grad = {g[0][0], g[0][1], g[1][0], dstep};
    return loss / count;
}

}  // namespace pdseg
