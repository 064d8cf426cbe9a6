#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdseg {

/// Dense row-major H x W grid of doubles. The tag parameter keeps masks and
/// conditioning images from being mixed up at call sites.
template <class Tag>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, double fill = 0.0) : height_(height), width_(width) {
        if (height <= 0 || width <= 0) {
            throw std::invalid_argument("grid dimensions must be positive, got " +
                                        std::to_string(height) + "x" + std::to_string(width));
        }
        values_.assign(static_cast<std::size_t>(height) * width, fill);
    }
    Grid(int height, int width, std::vector<double> values) : Grid(height, width) {
        if (values.size() != values_.size()) {
            throw std::invalid_argument("grid value count does not match dimensions");
        }
        values_ = std::move(values);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double operator()(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    template <class OtherTag>
    bool same_shape(const Grid<OtherTag>& other) const {
        return height_ == other.height() && width_ == other.width();
    }

    bool operator==(const Grid&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

struct MaskTag {};
struct ImageTag {};

/// Segmentation mask. Diffusion space is unbounded reals with ground truth
/// encoded as {-1, +1}; probability space is [0, 1].
using MaskGrid = Grid<MaskTag>;
/// Conditioning image with intensities in [0, 1].
using ImageGrid = Grid<ImageTag>;

template <class A, class B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                    std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                                    " vs " + std::to_string(b.height()) + "x" +
                                    std::to_string(b.width()) + ")");
    }
}

}  // namespace pdseg
