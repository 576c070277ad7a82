#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "phaseforge/tensor.hpp"

namespace phaseforge {

/// C x H x W pixel grid. Stored values are expected in [0, 1].
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

    std::size_t size() const { return pixels.size(); }
    std::size_t plane_size() const { return height * width; }
    Shape shape() const { return {channels, height, width}; }

    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

    std::span<const float> channel(std::size_t c) const {
        return std::span<const float>(pixels).subspan(c * plane_size(), plane_size());
    }

    bool operator==(const Image&) const = default;
};

/// 64-bit C x H x W values, used for unclipped spectral reconstructions.
struct Planes {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    std::size_t plane_size() const { return height * width; }
    std::span<const double> channel(std::size_t c) const {
        return std::span<const double>(values).subspan(c * plane_size(), plane_size());
    }
};

Planes to_planes(const Image& image);

/// Clip to [0, 1] and round to 32-bit pixels.
Image clip_to_image(const Planes& planes);

bool same_shape(const Image& a, const Image& b);

/// Stack images into a [B, C, H, W] tensor; all images must share a shape.
template <typename T>
Tensor<T> stack_images(std::span<const Image> images);

template <typename T>
Tensor<T> stack_images(std::span<const Image* const> images);

/// Inverse of stack_images. Values are copied as is (no clipping).
template <typename T>
std::vector<Image> unstack_images(const Tensor<T>& batch);

}  // namespace phaseforge
