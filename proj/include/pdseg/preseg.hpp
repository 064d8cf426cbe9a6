#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdseg/checkpoint.hpp"
#include "pdseg/conv_denoiser.hpp"
#include "pdseg/grid.hpp"
#include "pdseg/nn/unet.hpp"
#include "pdseg/synth_data.hpp"

namespace pdseg {

/// Separately trained segmentation network producing a probability map
/// from the conditioning image alone.
class PresegModel {
public:
    virtual ~PresegModel() = default;
    virtual std::vector<MaskGrid> segment_batch(std::span<const ImageGrid* const> images) const = 0;
};

/// Probability map in [0, 1] with the image's dimensions.
MaskGrid segment(const ImageGrid& image, const PresegModel& model);

inline nn::UNetConfig default_preseg_config() {
    nn::UNetConfig c;
    c.in_channels = 1;
    c.out_channels = 1;
    c.base_channels = 16;
    c.depth = 2;
    c.time_embedding_dim = 0;
    return c;
}

/// Encoder-decoder with a sigmoid output, trained with pixelwise binary
/// cross-entropy.
class ConvPresegModel final : public PresegModel {
public:
    explicit ConvPresegModel(nn::UNetConfig config);

    static ConvPresegModel from_checkpoint(const Checkpoint& ckpt);
    Checkpoint to_checkpoint() const;

    std::vector<MaskGrid> segment_batch(std::span<const ImageGrid* const> images) const override;

    nn::UNet<float>& network() { return net_; }
    const nn::UNet<float>& network() const { return net_; }

private:
    nn::UNet<float> net_;
};

struct PresegTrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_dice;
    int best_epoch = -1;
    double best_val_loss = 0.0;
};

/// Mean binary cross-entropy with logits over the batch, plus gradients
/// when `grads` is non-null.
double preseg_loss_and_grad(const nn::UNet<float>& net, std::span<const ImageGrid* const> images,
                            std::span<const MaskGrid* const> targets, nn::Grads<float>* grads);

PresegTrainReport train_preseg(ConvPresegModel& model, const std::vector<const Case*>& train,
                               const std::vector<const Case*>& val, const TrainOptions& options,
                               Rng rng, const EpochCallback& on_epoch = {});

struct DegradationSpec {
    double target_dice = 1.0;
    double tolerance = 0.02;
    std::uint64_t seed = 0;
};

/// Perturbs a binary ground truth until its Dice against the original is
/// within spec.tolerance of spec.target_dice. Each round removes a
/// foreground pixel on the current boundary (erosion), adds a background
/// pixel touching it (dilation) or flips a pixel next to the ground-truth
/// boundary, choosing only moves that do not jump past the tolerance band.
/// Target 0 yields the all-zero map. Throws Unreachable if the band cannot
/// be hit within the iteration budget.
MaskGrid degrade_to_dice(const MaskGrid& ground_truth, const DegradationSpec& spec);

}  // namespace pdseg
