#include "phaseforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

#include "phaseforge/fft2d.hpp"

namespace phaseforge {
namespace {

using Uniform = std::uniform_real_distribution<double>;

struct Color {
    double rgb[3];
};

Color random_color(std::mt19937_64& rng) {
    Uniform u(0.1, 0.9);
    return {{u(rng), u(rng), u(rng)}};
}

// Foreground colour at least `min_gap` away (l-inf) from the background.
Color contrasting_color(const Color& background, double min_gap, std::mt19937_64& rng) {
    for (;;) {
        Color c = random_color(rng);
        double gap = 0.0;
        for (int k = 0; k < 3; ++k) gap = std::max(gap, std::abs(c.rgb[k] - background.rgb[k]));
        if (gap >= min_gap) return c;
    }
}

// Per-pixel blend weight in [0, 1] describing where the class pattern sits.
using Mask = std::vector<double>;

Mask bar_mask(std::size_t label, std::size_t classes, std::mt19937_64& rng) {
    const double angle = std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes) +
                         Uniform(-0.08, 0.08)(rng);
    const double width = Uniform(1.5, 3.0)(rng);
    const double shift = Uniform(-3.0, 3.0)(rng);
    const double nx = -std::sin(angle), ny = std::cos(angle);
    const double centre = (kCifarSide - 1) / 2.0;
    Mask mask(kCifarSide * kCifarSide);
    for (std::size_t y = 0; y < kCifarSide; ++y) {
        for (std::size_t x = 0; x < kCifarSide; ++x) {
            const double dist = std::abs((static_cast<double>(x) - centre) * nx + (static_cast<double>(y) - centre) * ny - shift);
            mask[y * kCifarSide + x] = std::clamp(width - dist + 0.5, 0.0, 1.0);
        }
    }
    return mask;
}

Mask blob_mask(std::size_t label, std::size_t classes, std::mt19937_64& rng) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes);
    const double centre = (kCifarSide - 1) / 2.0;
    const double cx = centre + 8.0 * std::cos(theta) + Uniform(-2.0, 2.0)(rng);
    const double cy = centre + 8.0 * std::sin(theta) + Uniform(-2.0, 2.0)(rng);
    const double sigma = Uniform(2.5, 4.0)(rng);
    Mask mask(kCifarSide * kCifarSide);
    for (std::size_t y = 0; y < kCifarSide; ++y) {
        for (std::size_t x = 0; x < kCifarSide; ++x) {
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            mask[y * kCifarSide + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    }
    return mask;
}

Mask checker_mask(std::size_t label, std::mt19937_64& rng) {
    const std::size_t cell = std::size_t{1} << label;
    std::uniform_int_distribution<std::size_t> phase(0, 2 * cell - 1);
    const std::size_t oy = phase(rng), ox = phase(rng);
    Mask mask(kCifarSide * kCifarSide);
    for (std::size_t y = 0; y < kCifarSide; ++y)
        for (std::size_t x = 0; x < kCifarSide; ++x)
            mask[y * kCifarSide + x] = (((y + oy) / cell + (x + ox) / cell) % 2) ? 1.0 : 0.0;
    return mask;
}

// Multiplies every channel's amplitude spectrum by (1 + r)^tilt, r the radial
// bin frequency, leaving the phase untouched.
void tilt_amplitude(Image& image, double tilt) {
    const std::size_t n = kCifarSide;
    std::vector<double> gain(n * n);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            const double fu = static_cast<double>(std::min(u, n - u));
            const double fv = static_cast<double>(std::min(v, n - v));
            gain[u * n + v] = std::pow(1.0 + std::hypot(fu, fv), tilt);
        }
    }
    for (std::size_t c = 0; c < image.channels; ++c) {
        ComplexGrid spectrum = dft2(image.channel(c), n, n);
        for (std::size_t i = 0; i < spectrum.bins.size(); ++i) spectrum.bins[i] *= gain[i];
        const RealGrid back = idft2(spectrum);
        for (std::size_t i = 0; i < back.values.size(); ++i) {
            image.pixels[c * n * n + i] = static_cast<float>(std::clamp(back.values[i], 0.0, 1.0));
        }
    }
}

std::size_t reflect_index(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * static_cast<long>(n) - 2;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

}  // namespace

void Dataset::validate() const {
    if (images.size() != labels.size()) {
        throw std::invalid_argument("dataset: " + std::to_string(images.size()) + " images but " +
                                    std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes()) {
            throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) + " of record " +
                                        std::to_string(i) + " outside [0, " + std::to_string(classes()) + ")");
        }
        for (float p : images[i].pixels) {
            if (!(p >= 0.0f && p <= 1.0f)) {
                throw std::invalid_argument("dataset: pixel outside [0, 1] in record " + std::to_string(i));
            }
        }
        if (!same_shape(images[i], images.front())) {
            throw std::invalid_argument("dataset: record " + std::to_string(i) + " has a different shape");
        }
    }
}

std::vector<std::string> cifar10_class_names() {
    return {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
}

Dataset parse_cifar_binary(std::span<const std::uint8_t> bytes, Split split) {
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t records = bytes.size() / kCifarRecordBytes;
        throw std::invalid_argument("cifar: file length " + std::to_string(bytes.size()) +
                                    " is not a multiple of " + std::to_string(kCifarRecordBytes) + " (expected " +
                                    std::to_string(records * kCifarRecordBytes) + " or " +
                                    std::to_string((records + 1) * kCifarRecordBytes) + " bytes)");
    }
    Dataset out;
    out.split = split;
    out.class_names = cifar10_class_names();
    const std::size_t count = bytes.size() / kCifarRecordBytes;
    out.images.reserve(count);
    out.labels.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
        const auto record = bytes.subspan(r * kCifarRecordBytes, kCifarRecordBytes);
        if (record[0] > 9) {
            throw std::invalid_argument("cifar: record " + std::to_string(r) + " has label " +
                                        std::to_string(record[0]) + " (> 9)");
        }
        Image image(3, kCifarSide, kCifarSide);
        for (std::size_t i = 0; i < image.size(); ++i) image.pixels[i] = static_cast<float>(record[i + 1]) / 255.0f;
        out.labels.push_back(record[0]);
        out.images.push_back(std::move(image));
    }
    return out;
}

std::vector<std::uint8_t> write_cifar_binary(const Dataset& dataset) {
    dataset.validate();
    std::vector<std::uint8_t> out;
    out.reserve(dataset.size() * kCifarRecordBytes);
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        const Image& image = dataset.images[r];
        if (image.channels != 3 || image.height != kCifarSide || image.width != kCifarSide) {
            throw std::invalid_argument("cifar: record " + std::to_string(r) + " has shape " + to_string(image.shape()) +
                                        ", expected [3, 32, 32]");
        }
        if (dataset.labels[r] > 9) {
            throw std::invalid_argument("cifar: label " + std::to_string(dataset.labels[r]) + " of record " +
                                        std::to_string(r) + " does not fit the 10-class layout");
        }
        out.push_back(static_cast<std::uint8_t>(dataset.labels[r]));
        for (float p : image.pixels) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
    }
    return out;
}

Dataset load_cifar_file(const std::filesystem::path& path, Split split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cifar: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_cifar_binary(bytes, split);
}

Dataset load_cifar_files(std::span<const std::filesystem::path> paths, Split split) {
    Dataset out;
    out.split = split;
    out.class_names = cifar10_class_names();
    for (const auto& path : paths) {
        Dataset part = load_cifar_file(path, split);
        std::move(part.images.begin(), part.images.end(), std::back_inserter(out.images));
        out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    }
    return out;
}

void save_cifar_file(const Dataset& dataset, const std::filesystem::path& path) {
    const auto bytes = write_cifar_binary(dataset);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cifar: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cifar: write failed for " + path.string());
}

SynthKind parse_synth_kind(std::string_view name) {
    if (name == "bars") return SynthKind::bars;
    if (name == "blobs") return SynthKind::blobs;
    if (name == "checker") return SynthKind::checker;
    throw std::invalid_argument("unknown synthetic dataset kind '" + std::string(name) + "'");
}

std::string_view synth_kind_name(SynthKind kind) {
    switch (kind) {
        case SynthKind::bars: return "bars";
        case SynthKind::blobs: return "blobs";
        case SynthKind::checker: return "checker";
    }
    return "?";
}

std::size_t synth_capacity(SynthKind kind) {
    switch (kind) {
        case SynthKind::bars: return 8;
        case SynthKind::blobs: return 8;
        case SynthKind::checker: return 5;
    }
    return 0;
}

Dataset synth_dataset(SynthKind kind, std::size_t count, std::size_t classes, std::uint64_t seed, Split split) {
    if (classes < 2 || classes > synth_capacity(kind)) {
        throw std::invalid_argument("synth_dataset: " + std::string(synth_kind_name(kind)) + " supports 2.." +
                                    std::to_string(synth_capacity(kind)) + " classes, got " + std::to_string(classes));
    }
    Dataset out;
    out.split = split;
    for (std::size_t k = 0; k < classes; ++k) out.class_names.push_back(std::string(synth_kind_name(kind)) + "_" + std::to_string(k));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    out.images.reserve(count);
    out.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = i % classes;
        Mask mask;
        switch (kind) {
            case SynthKind::bars: mask = bar_mask(label, classes, rng); break;
            case SynthKind::blobs: mask = blob_mask(label, classes, rng); break;
            case SynthKind::checker: mask = checker_mask(label, rng); break;
        }
        const Color background = random_color(rng);
        const Color foreground = contrasting_color(background, 0.3, rng);
        const double noise_level = Uniform(0.02, 0.08)(rng);
        Image image(3, kCifarSide, kCifarSide);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < kCifarSide * kCifarSide; ++p) {
                const double m = mask[p];
                const double v = (1.0 - m) * background.rgb[c] + m * foreground.rgb[c] + noise_level * noise(rng);
                image.pixels[c * kCifarSide * kCifarSide + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
        tilt_amplitude(image, Uniform(-0.5, 0.3)(rng));
        out.labels.push_back(static_cast<int>(label));
        out.images.push_back(std::move(image));
    }
    return out;
}

AugmentDraw draw_augment(const AugmentOps& ops, std::mt19937_64& rng) {
    AugmentDraw draw{ops.padding, ops.padding, false};
    if (ops.crop) {
        std::uniform_int_distribution<std::size_t> offset(0, 2 * ops.padding);
        draw.offset_y = offset(rng);
        draw.offset_x = offset(rng);
    }
    if (ops.flip) draw.flip = std::bernoulli_distribution(0.5)(rng);
    return draw;
}

Image apply_augment(const Image& image, const AugmentOps& ops, const AugmentDraw& draw) {
    Image out = ops.crop ? reflect_pad_crop(image, ops.padding, draw.offset_y, draw.offset_x) : image;
    if (ops.flip && draw.flip) out = flip_horizontal(out);
    return out;
}

Image augment(const Image& image, const AugmentOps& ops, std::mt19937_64& rng) {
    return apply_augment(image, ops, draw_augment(ops, rng));
}

Image flip_horizontal(const Image& image) {
    Image out = image;
    for (std::size_t c = 0; c < image.channels; ++c)
        for (std::size_t y = 0; y < image.height; ++y)
            for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    return out;
}

Image reflect_pad_crop(const Image& image, std::size_t padding, std::size_t offset_y, std::size_t offset_x) {
    if (offset_y > 2 * padding || offset_x > 2 * padding) {
        throw std::invalid_argument("reflect_pad_crop: offset outside the padded image");
    }
    Image out(image.channels, image.height, image.width);
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t y = 0; y < image.height; ++y) {
            const std::size_t sy = reflect_index(static_cast<long>(y + offset_y) - static_cast<long>(padding), image.height);
            for (std::size_t x = 0; x < image.width; ++x) {
                const std::size_t sx =
                    reflect_index(static_cast<long>(x + offset_x) - static_cast<long>(padding), image.width);
                out.at(c, y, x) = image.at(c, sy, sx);
            }
        }
    }
    return out;
}

}  // namespace phaseforge
