#pragma once

#include <cmath>
#include <vector>

#include "pdseg/nn/tensor.hpp"

namespace pdseg::nn {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-5;  ///< L2 term folded into the gradient
};

/// Adam with coupled L2 weight decay (grad += decay * param).
template <class S>
class Adam {
public:
    explicit Adam(AdamOptions options) : opt_(options) {}

    void step(std::vector<Param<S>>& params, const Grads<S>& grads) {
        if (m_.empty()) {
            m_ = zero_grads(params);
            v_ = zero_grads(params);
        }
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, t_);
        const double c2 = 1.0 - std::pow(opt_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].value;
            auto& m = m_[i];
            auto& v = v_[i];
            const auto& g = grads[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double gk = static_cast<double>(g[k]) + opt_.weight_decay * p[k];
                m[k] = static_cast<S>(opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk);
                v[k] = static_cast<S>(opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk);
                const double mh = m[k] / c1;
                const double vh = v[k] / c2;
                p[k] = static_cast<S>(p[k] - opt_.learning_rate * mh / (std::sqrt(vh) + opt_.epsilon));
            }
        }
    }

    long steps_taken() const { return t_; }

private:
    AdamOptions opt_;
    long t_ = 0;
    Grads<S> m_;
    Grads<S> v_;
};

}  // namespace pdseg::nn
