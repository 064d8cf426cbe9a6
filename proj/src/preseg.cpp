#include "pdseg/preseg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pdseg/errors.hpp"
#include "pdseg/metrics.hpp"
#include "pdseg/nn/adam.hpp"

namespace pdseg {

MaskGrid segment(const ImageGrid& image, const PresegModel& model) {
    const ImageGrid* images[] = {&image};
    return model.segment_batch(images).front();
}

ConvPresegModel::ConvPresegModel(nn::UNetConfig config) : net_(config) {
    if (config.in_channels != 1 || config.out_channels != 1 || config.time_embedding_dim != 0) {
        throw std::invalid_argument("pre-segmentation net needs 1 input, 1 output, no step input");
    }
}

ConvPresegModel ConvPresegModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "preseg") {
        throw std::invalid_argument("checkpoint kind is '" + ckpt.kind + "', expected 'preseg'");
    }
    ConvPresegModel m(ckpt.config);
    load_params(ckpt, m.net_);
    return m;
}

Checkpoint ConvPresegModel::to_checkpoint() const {
    return Checkpoint{"preseg", net_.config(), std::nullopt, net_.params()};
}

namespace {

nn::Tensor<float> pack_images(std::span<const ImageGrid* const> images) {
    const int h = images.front()->height();
    const int w = images.front()->width();
    nn::Tensor<float> t(static_cast<int>(images.size()), h, w, 1);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < images.size(); ++i) {
        require_same_shape(*images[i], *images.front(), "pre-segmentation batch");
        for (std::size_t p = 0; p < hw; ++p) t.data[i * hw + p] = static_cast<float>((*images[i])[p]);
    }
    return t;
}

}  // namespace

std::vector<MaskGrid> ConvPresegModel::segment_batch(std::span<const ImageGrid* const> images) const {
    std::vector<MaskGrid> out;
    out.reserve(images.size());
    constexpr std::size_t chunk = 32;
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const auto part = images.subspan(start, std::min(chunk, images.size() - start));
        const auto logits = net_.forward(pack_images(part), {}, nullptr);
        const std::size_t hw = static_cast<std::size_t>(logits.h) * logits.w;
        for (std::size_t i = 0; i < part.size(); ++i) {
            MaskGrid g(logits.h, logits.w);
            for (std::size_t p = 0; p < hw; ++p) {
                g[p] = std::clamp(static_cast<double>(nn::sigmoid(logits.data[i * hw + p])), 0.0, 1.0);
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

double preseg_loss_and_grad(const nn::UNet<float>& net, std::span<const ImageGrid* const> images,
                            std::span<const MaskGrid* const> targets, nn::Grads<float>* grads) {
    nn::UNet<float>::Tape tape;
    const auto logits = net.forward(pack_images(images), {}, grads ? &tape : nullptr);
    const std::size_t hw = static_cast<std::size_t>(logits.h) * logits.w;
    const double count = static_cast<double>(logits.size());
    nn::Tensor<float> dout(logits.n, logits.h, logits.w, logits.c);
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (std::size_t p = 0; p < hw; ++p) {
            const double z = logits.data[i * hw + p];
            const double y = (*targets[i])[p] > 0.5 ? 1.0 : 0.0;
            loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            dout.data[i * hw + p] = static_cast<float>((1.0 / (1.0 + std::exp(-z)) - y) / count);
        }
    }
    if (grads) net.backward(tape, dout, *grads);
    return loss / count;
}

PresegTrainReport train_preseg(ConvPresegModel& model, const std::vector<const Case*>& train,
                               const std::vector<const Case*>& val, const TrainOptions& options,
                               Rng rng, const EpochCallback& on_epoch) {
    if (train.empty()) throw std::invalid_argument("train_preseg: empty training split");
    if (options.epochs < 1 || options.batch_size < 1) {
        throw std::invalid_argument("train_preseg: epochs and batch size must be positive");
    }
    auto& net = model.network();
    const int steps_per_epoch =
        options.steps_per_epoch > 0
            ? options.steps_per_epoch
            : static_cast<int>((train.size() + options.batch_size - 1) / options.batch_size);
    const bool square = train.front()->gt.height() == train.front()->gt.width();
    const std::uint64_t n_transforms = options.augment ? (square ? 8 : 4) : 1;

    std::vector<const ImageGrid*> val_images;
    std::vector<const MaskGrid*> val_targets;
    for (const Case* c : val) {
        val_images.push_back(&c->image);
        val_targets.push_back(&c->gt);
    }

    nn::Adam<float> adam({options.learning_rate, 0.9, 0.999, 1e-8, options.weight_decay});
    PresegTrainReport report;
    report.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<nn::Param<float>> best = net.params();

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        Rng er = rng.derive("epoch", static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<ImageGrid> images;
            std::vector<MaskGrid> targets;
            for (int b = 0; b < options.batch_size; ++b) {
                const Case& c = *train[er.uniform_int(train.size())];
                const int k = static_cast<int>(er.uniform_int(n_transforms));
                images.push_back(dihedral(c.image, k));
                targets.push_back(dihedral(c.gt, k));
            }
            std::vector<const ImageGrid*> ip;
            std::vector<const MaskGrid*> tp;
            for (std::size_t i = 0; i < images.size(); ++i) {
                ip.push_back(&images[i]);
                tp.push_back(&targets[i]);
            }
            nn::Grads<float> grads = nn::zero_grads(net.params());
            epoch_loss += preseg_loss_and_grad(net, ip, tp, &grads);
            adam.step(net.params(), grads);
        }
        epoch_loss /= steps_per_epoch;

        double val_loss = epoch_loss;
        double val_dice = 0.0;
        if (!val.empty()) {
            val_loss = 0.0;
            constexpr std::size_t chunk = 32;
            for (std::size_t start = 0; start < val.size(); start += chunk) {
                const std::size_t n = std::min(chunk, val.size() - start);
                val_loss += static_cast<double>(n) *
                            preseg_loss_and_grad(net, std::span(val_images).subspan(start, n),
                                                 std::span(val_targets).subspan(start, n), nullptr);
            }
            val_loss /= static_cast<double>(val.size());
            const auto probs = model.segment_batch(val_images);
            for (std::size_t i = 0; i < val.size(); ++i) val_dice += dice(probs[i], val[i]->gt);
            val_dice /= static_cast<double>(val.size());
        }
        report.train_loss.push_back(epoch_loss);
        report.val_loss.push_back(val_loss);
        report.val_dice.push_back(val_dice);
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

namespace {

struct DiceState {
    long inter = 0;
    long pred = 0;
    long gt = 0;
    double value() const { return pred + gt == 0 ? 1.0 : 2.0 * inter / double(pred + gt); }
};

}  // namespace

MaskGrid degrade_to_dice(const MaskGrid& ground_truth, const DegradationSpec& spec) {
    if (!(spec.target_dice >= 0.0 && spec.target_dice <= 1.0)) {
        throw std::invalid_argument("degrade_to_dice: target must lie in [0, 1]");
    }
    if (!(spec.tolerance >= 0.0)) {
        throw std::invalid_argument("degrade_to_dice: tolerance must be nonnegative");
    }
    const int h = ground_truth.height();
    const int w = ground_truth.width();
    if (spec.target_dice == 0.0) return MaskGrid(h, w, 0.0);

    MaskGrid gt(h, w);
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = ground_truth[i] > 0.5 ? 1.0 : 0.0;
    DiceState st;
    for (double v : gt.values()) st.gt += v > 0.5;
    if (st.gt == 0) {
        throw std::invalid_argument("degrade_to_dice: ground truth has no foreground");
    }
    st.inter = st.pred = st.gt;
    MaskGrid pred = gt;
    const double lo = spec.target_dice - spec.tolerance;
    const double hi = spec.target_dice + spec.tolerance;
    auto in_band = [&](double d) { return d >= lo && d <= hi; };
    if (in_band(st.value())) return pred;

    Rng rng(spec.seed);
    auto pred_fg = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w && pred(y, x) > 0.5;
    };
    auto gt_fg = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && gt(y, x) > 0.5; };
    auto touches = [&](int y, int x, auto&& pred_fn, bool want) {
        return pred_fn(y - 1, x) == want || pred_fn(y + 1, x) == want || pred_fn(y, x - 1) == want ||
               pred_fn(y, x + 1) == want;
    };

    const long budget = 40L * h * w;
    std::vector<std::pair<int, int>> moves;
    for (long iter = 0; iter < budget; ++iter) {
        const double d = st.value();
        if (in_band(d)) return pred;
        const bool lower = d > hi;

        // Every candidate move flips one pixel; keep those whose resulting
        // Dice stays on the near side of the band or lands in it.
        moves.clear();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const bool p = pred_fg(y, x);
                const bool g = gt_fg(y, x);
                // p: erosion of a boundary pixel; !p: dilation next to the
                // prediction; either: a flip next to the ground-truth boundary.
                const bool eligible = touches(y, x, pred_fg, !p) || touches(y, x, gt_fg, !g);
                if (!eligible) continue;
                DiceState next = st;
                next.pred += p ? -1 : 1;
                if (g) next.inter += p ? -1 : 1;
                const double nd = next.value();
                const bool ok = lower ? (nd < d && nd >= lo) : (nd > d && nd <= hi);
                if (ok) moves.emplace_back(y, x);
            }
        }
        if (moves.empty()) break;
        const auto [y, x] = moves[rng.uniform_int(moves.size())];
        const bool p = pred(y, x) > 0.5;
        pred(y, x) = p ? 0.0 : 1.0;
        st.pred += p ? -1 : 1;
        if (gt(y, x) > 0.5) st.inter += p ? -1 : 1;
    }
    if (in_band(st.value())) return pred;
    throw Unreachable("degrade_to_dice: cannot reach Dice " + std::to_string(spec.target_dice) +
                      " +- " + std::to_string(spec.tolerance) + " (stopped at " +
                      std::to_string(st.value()) + ")");
}

}  // namespace pdseg
