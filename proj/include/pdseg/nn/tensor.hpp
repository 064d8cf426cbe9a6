#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdseg::nn {

/// Activations are stored channels-last (N, H, W, C): viewed as an
/// (N*H*W) x C row-major matrix, a convolution over the whole batch becomes a
/// single im2col product with the pixel count as the long dimension.
template <class S>
struct Tensor {
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<S> data;

    Tensor() = default;
    Tensor(int batch, int height, int width, int channels)
        : n(batch), h(height), w(width), c(channels),
          data(static_cast<std::size_t>(batch) * height * width * channels, S(0)) {}

    std::size_t pixels() const { return static_cast<std::size_t>(n) * h * w; }
    std::size_t size() const { return data.size(); }
    std::size_t index(int ni, int y, int x, int ci) const {
        return ((static_cast<std::size_t>(ni) * h + y) * w + x) * c + ci;
    }
    S& at(int ni, int y, int x, int ci) { return data[index(ni, y, x, ci)]; }
    S at(int ni, int y, int x, int ci) const { return data[index(ni, y, x, ci)]; }
    S* pixel(int ni, int y, int x) { return data.data() + index(ni, y, x, 0); }
    const S* pixel(int ni, int y, int x) const { return data.data() + index(ni, y, x, 0); }
};

template <class S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatrixMap = Eigen::Map<RowMatrix<S>>;
template <class S>
using ConstMatrixMap = Eigen::Map<const RowMatrix<S>>;

/// Named trainable tensor.
template <class S>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<S> value;

    std::size_t size() const { return value.size(); }
};

/// Gradient buffers parallel to a parameter list.
template <class S>
using Grads = std::vector<std::vector<S>>;

template <class S>
Grads<S> zero_grads(const std::vector<Param<S>>& params) {
    Grads<S> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) g[i].assign(params[i].size(), S(0));
    return g;
}

}  // namespace pdseg::nn
