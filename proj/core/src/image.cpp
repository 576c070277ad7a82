#include "phaseforge/image.hpp"

#include <algorithm>
#include <stdexcept>

namespace phaseforge {

Planes to_planes(const Image& image) {
    Planes out{image.channels, image.height, image.width, {}};
    out.values.assign(image.pixels.begin(), image.pixels.end());
    return out;
}

Image clip_to_image(const Planes& planes) {
    Image out(planes.channels, planes.height, planes.width);
    for (std::size_t i = 0; i < planes.values.size(); ++i) {
        out.pixels[i] = static_cast<float>(std::clamp(planes.values[i], 0.0, 1.0));
    }
    return out;
}

bool same_shape(const Image& a, const Image& b) {
    return a.channels == b.channels && a.height == b.height && a.width == b.width;
}

template <typename T>
Tensor<T> stack_images(std::span<const Image* const> images) {
    if (images.empty()) throw ShapeError("stack_images: empty batch");
    const Image& first = *images.front();
    std::vector<T> values;
    values.reserve(images.size() * first.size());
    for (const Image* image : images) {
        if (!same_shape(*image, first)) {
            throw ShapeError("stack_images: image of shape " + to_string(image->shape()) +
                             " does not match " + to_string(first.shape()));
        }
        values.insert(values.end(), image->pixels.begin(), image->pixels.end());
    }
    return Tensor<T>({images.size(), first.channels, first.height, first.width}, std::move(values));
}

template <typename T>
Tensor<T> stack_images(std::span<const Image> images) {
    std::vector<const Image*> pointers;
    pointers.reserve(images.size());
    for (const auto& image : images) pointers.push_back(&image);
    return stack_images<T>(std::span<const Image* const>(pointers));
}

template <typename T>
std::vector<Image> unstack_images(const Tensor<T>& batch) {
    if (batch.rank() != 4) throw ShapeError("unstack_images: expected [B, C, H, W], got " + to_string(batch.shape()));
    const std::size_t b = batch.dim(0);
    std::vector<Image> out;
    out.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        Image image(batch.dim(1), batch.dim(2), batch.dim(3));
        const auto src = batch.data().subspan(i * image.size(), image.size());
        std::transform(src.begin(), src.end(), image.pixels.begin(), [](T v) { return static_cast<float>(v); });
        out.push_back(std::move(image));
    }
    return out;
}

template Tensor<float> stack_images<float>(std::span<const Image>);
template Tensor<double> stack_images<double>(std::span<const Image>);
template Tensor<float> stack_images<float>(std::span<const Image* const>);
template Tensor<double> stack_images<double>(std::span<const Image* const>);
template std::vector<Image> unstack_images<float>(const Tensor<float>&);
template std::vector<Image> unstack_images<double>(const Tensor<double>&);

}  // namespace phaseforge
