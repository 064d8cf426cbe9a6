#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "pdseg/checkpoint.hpp"
#include "pdseg/denoiser.hpp"
#include "pdseg/diffusion.hpp"
#include "pdseg/nn/tensor.hpp"
#include "pdseg/nn/unet.hpp"
#include "pdseg/synth_data.hpp"

namespace pdseg {

/// Denoiser defaults. The network sees the channel concatenation of the
/// noisy mask and the conditioning image.
inline nn::UNetConfig default_denoiser_config() {
    nn::UNetConfig c;
    c.in_channels = 2;
    c.out_channels = 1;
    c.base_channels = 32;
    c.depth = 2;
    c.time_embedding_dim = 64;
    return c;
}

struct TrainOptions {
    int epochs = 40;
    int batch_size = 16;
    int steps_per_epoch = 0;  ///< 0: one pass over the training split
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    bool augment = true;      ///< random flips / quarter turns
    int val_draws = 4;        ///< fixed (t, noise) draws per validation case
};

struct TrainReport {
    std::vector<double> train_loss;  ///< mean per epoch
    std::vector<double> val_loss;
    int best_epoch = -1;
    double best_val_loss = 0.0;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

class ConvDenoiser final : public Denoiser {
public:
    ConvDenoiser(nn::UNetConfig config, NoiseSchedule schedule);

    static ConvDenoiser from_checkpoint(const Checkpoint& ckpt);
    Checkpoint to_checkpoint() const;

    std::vector<MaskGrid> predict_batch(std::span<const MaskGrid> x_t,
                                        std::span<const ImageGrid* const> images,
                                        int t) const override;

    nn::UNet<float>& network() { return net_; }
    const nn::UNet<float>& network() const { return net_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    /// Largest number of grids pushed through the network at once.
    static constexpr std::size_t kMaxChunk = 32;

private:
    nn::UNet<float> net_;
    NoiseSchedule schedule_;
};

/// Packs (x_t, image) pairs as a 2-channel batch.
template <class S>
nn::Tensor<S> pack_denoiser_input(std::span<const MaskGrid> x_t,
                                  std::span<const ImageGrid* const> images) {
    const int n = static_cast<int>(x_t.size());
    const int h = x_t.front().height();
    const int w = x_t.front().width();
    nn::Tensor<S> t(n, h, w, 2);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        require_same_shape(x_t[i], x_t.front(), "denoiser batch");
        require_same_shape(x_t[i], *images[i], "denoiser input");
        S* d = t.pixel(i, 0, 0);
        for (std::size_t p = 0; p < hw; ++p, d += 2) {
            d[0] = static_cast<S>(x_t[i][p]);
            d[1] = static_cast<S>((*images[i])[p]);
        }
    }
    return t;
}

/// Noise-prediction MSE over a batch and, when `grads` is given, its
/// gradient with respect to every network parameter (accumulated).
template <class S>
double denoiser_loss_and_grad(const nn::UNet<S>& net, std::span<const MaskGrid> x0,
                              std::span<const ImageGrid* const> images, const std::vector<int>& steps,
                              std::span<const MaskGrid> noise, const NoiseSchedule& schedule,
                              nn::Grads<S>* grads) {
    std::vector<MaskGrid> x_t;
    x_t.reserve(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x_t.push_back(q_sample(x0[i], steps[i], schedule, noise[i]));
    }
    const nn::Tensor<S> input = pack_denoiser_input<S>(x_t, images);
    typename nn::UNet<S>::Tape tape;
    const nn::Tensor<S> out = net.forward(input, steps, grads ? &tape : nullptr);

    const std::size_t hw = static_cast<std::size_t>(input.h) * input.w;
    const double count = static_cast<double>(out.size());
    nn::Tensor<S> dout(out.n, out.h, out.w, out.c);
    double loss = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t k = i * hw + p;
            const double d = static_cast<double>(out.data[k]) - noise[i][p];
            loss += d * d;
            dout.data[k] = static_cast<S>(2.0 * d / count);
        }
    }
    if (grads) net.backward(tape, dout, *grads);
    return loss / count;
}

/// Trains on the ground-truth masks of `train` (encoded to {-1, +1}) with
/// uniform random steps, keeping the parameters of the epoch with the lowest
/// validation loss.
TrainReport train_denoiser(ConvDenoiser& model, const std::vector<const Case*>& train,
                           const std::vector<const Case*>& val, const TrainOptions& options,
                           Rng rng, const EpochCallback& on_epoch = {});

/// Four-parameter linear predictor
///   eps = w_mask * x_t + w_image * image + bias + w_step * t / T
/// built from the same 1x1 convolution layer as the network. Exists to
/// check backprop against finite differences of training_loss.
class MicroDenoiser final : public Denoiser {
public:
    MicroDenoiser(std::array<double, 4> params, int total_steps);

    std::vector<MaskGrid> predict_batch(std::span<const MaskGrid> x_t,
                                        std::span<const ImageGrid* const> images,
                                        int t) const override;

    /// training_loss and its analytic gradient via backprop.
    double loss_and_grad(const MaskGrid& x0, const ImageGrid& image, int t, const MaskGrid& noise,
                         const NoiseSchedule& schedule, std::array<double, 4>& grad) const;

    const std::array<double, 4>& params() const { return params_; }

private:
    std::array<double, 4> params_;
    int total_steps_;
};

/// Dihedral transform k in 0..7 (k >= 4 transposes, so only for square grids).
template <class Tag>
Grid<Tag> dihedral(const Grid<Tag>& g, int k) {
    const int h = g.height();
    const int w = g.width();
    const bool transpose = k >= 4;
    if (transpose && h != w) throw std::invalid_argument("dihedral: transpose needs a square grid");
    Grid<Tag> out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int sy = (k & 1) ? h - 1 - y : y;
            int sx = (k & 2) ? w - 1 - x : x;
            if (transpose) std::swap(sy, sx);
            out(y, x) = g(sy, sx);
        }
    }
    return out;
}

}  // namespace pdseg
