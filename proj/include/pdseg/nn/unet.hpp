#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdseg/nn/layers.hpp"
#include "pdseg/nn/tensor.hpp"
#include "pdseg/rng.hpp"

namespace pdseg::nn {

struct UNetConfig {
    int in_channels = 2;
    int out_channels = 1;
    int base_channels = 32;
    int depth = 2;               ///< number of down/up levels
    int time_embedding_dim = 64; ///< 0 disables step conditioning

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || base_channels < 1 || depth < 0 ||
            time_embedding_dim < 0) {
            throw std::invalid_argument("unet config: sizes must be positive");
        }
    }
    bool operator==(const UNetConfig&) const = default;
};

/// Small encoder-decoder with skip connections. Every block is a 3x3
/// convolution, an optional per-channel step bias projected from a shared
/// sinusoidal embedding MLP, and SiLU. Downsampling is 2x2 average pooling,
/// upsampling is nearest neighbour followed by concatenation with the skip.
/// The output head is a 1x1 convolution with no activation.
template <class S>
class UNet {
public:
    struct Block {
        Conv2d<S> conv;
        Linear<S> step_bias;
        bool has_step = false;
    };

    struct BlockCache {
        typename Conv2d<S>::Cache conv;
        Tensor<S> pre;  ///< pre-activation
    };

    struct Tape {
        RowMatrix<S> emb, hidden_pre, hidden;
        std::vector<BlockCache> blocks;
        typename Conv2d<S>::Cache head;
        int batch = 0;
    };

    explicit UNet(UNetConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        const int C = cfg_.base_channels;
        const int E = cfg_.time_embedding_dim;
        if (E > 0) {
            step_mlp_ = make_linear("step_mlp", E, E);
        }
        auto ch = [&](int level) { return C << level; };
        blocks_.push_back(make_block("stem", cfg_.in_channels, ch(0)));
        for (int l = 0; l < cfg_.depth; ++l) {
            blocks_.push_back(make_block("enc" + std::to_string(l) + "a", ch(l), ch(l)));
            blocks_.push_back(make_block("enc" + std::to_string(l) + "b", ch(l), ch(l + 1)));
        }
        blocks_.push_back(make_block("mid", ch(cfg_.depth), ch(cfg_.depth)));
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            blocks_.push_back(make_block("dec" + std::to_string(l), ch(l + 1) + ch(l), ch(l)));
        }
        head_ = make_conv("head", ch(0), cfg_.out_channels, 1);
    }

    const UNetConfig& config() const { return cfg_; }
    std::vector<Param<S>>& params() { return params_; }
    const std::vector<Param<S>>& params() const { return params_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    /// He-normal weights, zero biases, zero output head.
    void initialize(Rng& rng) {
        for (auto& p : params_) {
            const bool is_weight = p.name.ends_with(".weight");
            const bool is_head = p.name.starts_with("head.");
            if (!is_weight || is_head) {
                std::fill(p.value.begin(), p.value.end(), S(0));
                continue;
            }
            int fan_in = 1;
            for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= p.shape[d];
            const double sd = std::sqrt(2.0 / fan_in);
            for (auto& v : p.value) v = static_cast<S>(sd * rng.normal());
        }
    }

    int min_multiple() const { return 1 << cfg_.depth; }

    Tensor<S> forward(const Tensor<S>& x, const std::vector<int>& steps, Tape* tape) const {
        if (x.c != cfg_.in_channels) throw std::invalid_argument("unet: wrong input channel count");
        if (x.h % min_multiple() != 0 || x.w % min_multiple() != 0) {
            throw std::invalid_argument("unet: spatial size must be divisible by " +
                                        std::to_string(min_multiple()));
        }
        RowMatrix<S> hidden;
        if (has_steps()) {
            if (static_cast<int>(steps.size()) != x.n) {
                throw std::invalid_argument("unet: one step per batch entry is required");
            }
            RowMatrix<S> emb = step_embedding<S>(steps, cfg_.time_embedding_dim);
            RowMatrix<S> pre = step_mlp_.forward(params_, emb);
            hidden = pre.unaryExpr([](S v) { return silu(v); });
            if (tape) {
                tape->emb = std::move(emb);
                tape->hidden_pre = std::move(pre);
                tape->hidden = hidden;
            }
        }
        if (tape) {
            tape->blocks.assign(blocks_.size(), {});
            tape->batch = x.n;
        }
        auto run = [&](std::size_t b, const Tensor<S>& in) {
            return block_forward(b, in, hidden, tape ? &tape->blocks[b] : nullptr);
        };

        std::size_t b = 0;
        Tensor<S> h = run(b++, x);
        std::vector<Tensor<S>> skips;
        for (int l = 0; l < cfg_.depth; ++l) {
            h = run(b++, h);
            skips.push_back(h);
            h = run(b++, avg_pool2(h));
        }
        h = run(b++, h);
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            h = run(b++, concat_channels(upsample2(h), skips[static_cast<std::size_t>(l)]));
        }
        return head_.forward(params_, h, tape ? &tape->head : nullptr);
    }

    void backward(const Tape& tape, const Tensor<S>& dout, Grads<S>& grads) const {
        RowMatrix<S> dhidden;
        if (has_steps()) dhidden = RowMatrix<S>::Zero(tape.batch, cfg_.time_embedding_dim);

        Tensor<S> dh = head_.backward(params_, tape.head, dout, grads);
        std::size_t b = blocks_.size();
        std::vector<Tensor<S>> dskips(static_cast<std::size_t>(cfg_.depth));
        for (int l = 0; l < cfg_.depth; ++l) {
            --b;
            Tensor<S> dcat = block_backward(b, tape, dh, dhidden, grads);
            Tensor<S> dup;
            split_channels(dcat, blocks_[b].conv.in_channels - (cfg_.base_channels << l), dup,
                           dskips[static_cast<std::size_t>(l)]);
            dh = upsample2_backward(dup);
        }
        dh = block_backward(--b, tape, dh, dhidden, grads);  // mid
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            dh = avg_pool2_backward(block_backward(--b, tape, dh, dhidden, grads));
            const Tensor<S>& ds = dskips[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] += ds.data[i];
            dh = block_backward(--b, tape, dh, dhidden, grads);
        }
        block_backward(--b, tape, dh, dhidden, grads);  // stem; input gradient unused

        if (has_steps()) {
            RowMatrix<S> dpre = dhidden.cwiseProduct(
                tape.hidden_pre.unaryExpr([](S v) { return silu_grad(v); }));
            step_mlp_.backward(params_, tape.emb, dpre, grads);
        }
    }

    template <class T>
    UNet<T> cast() const {
        UNet<T> out(cfg_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& dst = out.params()[i].value;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(params_[i].value[k]);
        }
        return out;
    }

private:
    bool has_steps() const { return cfg_.time_embedding_dim > 0; }

    std::size_t add_param(std::string name, std::vector<int> shape) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        params_.push_back({std::move(name), std::move(shape), std::vector<S>(count, S(0))});
        return params_.size() - 1;
    }

    Conv2d<S> make_conv(const std::string& name, int cin, int cout, int k) {
        Conv2d<S> c;
        c.in_channels = cin;
        c.out_channels = cout;
        c.kernel = k;
        c.weight = add_param(name + ".weight", {cout, k, k, cin});
        c.bias = add_param(name + ".bias", {cout});
        return c;
    }

    Linear<S> make_linear(const std::string& name, int in, int out) {
        Linear<S> l;
        l.in_features = in;
        l.out_features = out;
        l.weight = add_param(name + ".weight", {out, in});
        l.bias = add_param(name + ".bias", {out});
        return l;
    }

    Block make_block(const std::string& name, int cin, int cout) {
        Block b;
        b.conv = make_conv(name + ".conv", cin, cout, 3);
        if (has_steps()) {
            b.step_bias = make_linear(name + ".step", cfg_.time_embedding_dim, cout);
            b.has_step = true;
        }
        return b;
    }

    Tensor<S> block_forward(std::size_t index, const Tensor<S>& x, const RowMatrix<S>& hidden,
                            BlockCache* cache) const {
        const Block& blk = blocks_[index];
        Tensor<S> y = blk.conv.forward(params_, x, cache ? &cache->conv : nullptr);
        if (blk.has_step) {
            const RowMatrix<S> bias = blk.step_bias.forward(params_, hidden);
            const auto per_sample = static_cast<Eigen::Index>(y.h) * y.w;
            for (int n = 0; n < y.n; ++n) {
                MatrixMap<S>(y.pixel(n, 0, 0), per_sample, y.c).rowwise() += bias.row(n);
            }
        }
        if (cache) cache->pre = y;
        silu_inplace(y.data);
        return y;
    }

    Tensor<S> block_backward(std::size_t index, const Tape& tape, const Tensor<S>& dy,
                             RowMatrix<S>& dhidden, Grads<S>& grads) const {
        const Block& blk = blocks_[index];
        const BlockCache& cache = tape.blocks[index];
        Tensor<S> dpre = dy;
        silu_backward_inplace(dpre.data, cache.pre.data);
        if (blk.has_step) {
            RowMatrix<S> dbias(dpre.n, dpre.c);
            const auto per_sample = static_cast<Eigen::Index>(dpre.h) * dpre.w;
            for (int n = 0; n < dpre.n; ++n) {
                dbias.row(n) = ConstMatrixMap<S>(dpre.pixel(n, 0, 0), per_sample, dpre.c).colwise().sum();
            }
            dhidden += blk.step_bias.backward(params_, tape.hidden, dbias, grads);
        }
        return blk.conv.backward(params_, cache.conv, dpre, grads);
    }

    UNetConfig cfg_;
    std::vector<Param<S>> params_;
    Linear<S> step_mlp_;
    std::vector<Block> blocks_;
    Conv2d<S> head_;
};

}  // namespace pdseg::nn
