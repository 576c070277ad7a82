#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phaseforge/image.hpp"

namespace phaseforge {

enum class Split { train, test };

/// Labelled images; every pixel in [0, 1], every label < class count.
struct Dataset {
    std::vector<Image> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    Split split = Split::train;

    std::size_t size() const { return images.size(); }
    std::size_t classes() const { return class_names.size(); }
    bool empty() const { return images.empty(); }

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

/// CIFAR-10 binary layout: per record one label byte then the red, green and
/// blue 32x32 planes, row-major. Pixels are scaled by 1/255.
Dataset parse_cifar_binary(std::span<const std::uint8_t> bytes, Split split = Split::train);

/// Inverse of parse_cifar_binary; pixels are rounded to the nearest byte.
std::vector<std::uint8_t> write_cifar_binary(const Dataset& dataset);

Dataset load_cifar_file(const std::filesystem::path& path, Split split = Split::train);
/// Concatenates several CIFAR binary files (e.g. data_batch_1..5).
Dataset load_cifar_files(std::span<const std::filesystem::path> paths, Split split = Split::train);
void save_cifar_file(const Dataset& dataset, const std::filesystem::path& path);

std::vector<std::string> cifar10_class_names();

enum class SynthKind { bars, blobs, checker };

SynthKind parse_synth_kind(std::string_view name);
std::string_view synth_kind_name(SynthKind kind);
/// Largest class count a synthetic family supports.
std::size_t synth_capacity(SynthKind kind);

/// 3 x 32 x 32 images whose class lives in spatial structure; labels are
/// assigned round-robin. Each image gets a random radial amplitude-spectrum
/// tilt so amplitude statistics carry little class information.
Dataset synth_dataset(SynthKind kind, std::size_t count, std::size_t classes, std::uint64_t seed,
                      Split split = Split::train);

struct AugmentOps {
    bool crop = true;
    bool flip = true;
    std::size_t padding = 4;
};

/// One realized draw of the random augmentation.
struct AugmentDraw {
    std::size_t offset_y = 0;
    std::size_t offset_x = 0;
    bool flip = false;
};

AugmentDraw draw_augment(const AugmentOps& ops, std::mt19937_64& rng);
Image apply_augment(const Image& image, const AugmentOps& ops, const AugmentDraw& draw);

/// Reflect-pad then random crop back to the original size, then a horizontal
/// flip with probability 0.5. Shape and [0, 1] range are preserved.
Image augment(const Image& image, const AugmentOps& ops, std::mt19937_64& rng);

Image flip_horizontal(const Image& image);
/// Reflect padding by `padding` followed by a crop at (offset_y, offset_x) of
/// the padded image; offsets (padding, padding) reproduce the input.
Image reflect_pad_crop(const Image& image, std::size_t padding, std::size_t offset_y, std::size_t offset_x);

}  // namespace phaseforge
