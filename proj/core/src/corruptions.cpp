#include "phaseforge/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "phaseforge/random.hpp"

namespace phaseforge {
namespace {

constexpr double kTable[8][5] = {
    {0.04, 0.08, 0.12, 0.18, 0.26},  // gaussian_noise: std
    {60, 25, 12, 5, 3},              // shot_noise: photons per unit intensity
    {0.03, 0.06, 0.09, 0.17, 0.27},  // impulse_noise: fraction
    {1, 1.5, 2, 2.5, 3},             // defocus_blur: disk radius
    {3, 5, 7, 9, 11},                // motion_blur: line length
    {0.1, 0.2, 0.3, 0.4, 0.5},       // brightness: offset
    {0.75, 0.5, 0.4, 0.3, 0.15},     // contrast: factor
    {2, 3, 4, 5, 6},                 // pixelate: block size
};

constexpr double kMotionAngle = std::numbers::pi / 4.0;

struct Tap {
    int dy, dx;
    double weight;
};

std::vector<Tap> disk_kernel(double radius) {
    std::vector<Tap> taps;
    const int r = static_cast<int>(std::ceil(radius));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dy * dy + dx * dx <= radius * radius + 1e-9) taps.push_back({dy, dx, 1.0});
    for (auto& t : taps) t.weight = 1.0 / static_cast<double>(taps.size());
    return taps;
}

std::vector<Tap> line_kernel(double length, double angle) {
    std::vector<Tap> taps;
    const int samples = std::max(1, static_cast<int>(std::lround(length)));
    const double half = (samples - 1) / 2.0;
    for (int s = 0; s < samples; ++s) {
        const double t = s - half;
        const int dx = static_cast<int>(std::lround(t * std::cos(angle)));
        const int dy = static_cast<int>(std::lround(t * std::sin(angle)));
        auto it = std::find_if(taps.begin(), taps.end(), [&](const Tap& tap) { return tap.dy == dy && tap.dx == dx; });
        if (it == taps.end()) {
            taps.push_back({dy, dx, 1.0});
        } else {
            it->weight += 1.0;
        }
    }
    for (auto& t : taps) t.weight /= samples;
    return taps;
}

std::size_t reflect(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * static_cast<long>(n) - 2;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

Image convolve(const Image& image, const std::vector<Tap>& taps) {
    Image out(image.channels, image.height, image.width);
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t y = 0; y < image.height; ++y) {
            for (std::size_t x = 0; x < image.width; ++x) {
                double acc = 0.0;
                for (const auto& t : taps) {
                    acc += t.weight * image.at(c, reflect(static_cast<long>(y) + t.dy, image.height),
                                               reflect(static_cast<long>(x) + t.dx, image.width));
                }
                out.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

Image pixelate(const Image& image, std::size_t block) {
    Image out(image.channels, image.height, image.width);
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t by = 0; by < image.height; by += block) {
            for (std::size_t bx = 0; bx < image.width; bx += block) {
                const std::size_t ey = std::min(by + block, image.height), ex = std::min(bx + block, image.width);
                double acc = 0.0;
                for (std::size_t y = by; y < ey; ++y)
                    for (std::size_t x = bx; x < ex; ++x) acc += image.at(c, y, x);
                const auto v = static_cast<float>(acc / static_cast<double>((ey - by) * (ex - bx)));
                for (std::size_t y = by; y < ey; ++y)
                    for (std::size_t x = bx; x < ex; ++x) out.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

template <typename Fn>
Image map_pixels(const Image& image, Fn&& fn) {
    Image out = image;
    for (auto& p : out.pixels) p = static_cast<float>(std::clamp(fn(static_cast<double>(p)), 0.0, 1.0));
    return out;
}

}  // namespace

std::string_view corruption_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::gaussian_noise: return "gaussian_noise";
        case CorruptionKind::shot_noise: return "shot_noise";
        case CorruptionKind::impulse_noise: return "impulse_noise";
        case CorruptionKind::defocus_blur: return "defocus_blur";
        case CorruptionKind::motion_blur: return "motion_blur";
        case CorruptionKind::brightness: return "brightness";
        case CorruptionKind::contrast: return "contrast";
        case CorruptionKind::pixelate: return "pixelate";
    }
    return "?";
}

CorruptionKind parse_corruption(std::string_view name) {
    for (auto kind : kAllCorruptions)
        if (corruption_name(kind) == name) return kind;
    throw std::invalid_argument("unknown corruption '" + std::string(name) + "'");
}

bool is_stochastic(CorruptionKind kind) {
    return kind == CorruptionKind::gaussian_noise || kind == CorruptionKind::shot_noise ||
           kind == CorruptionKind::impulse_noise;
}

void CorruptionSpec::validate() const {
    if (severity < 1 || severity > 5) {
        throw std::out_of_range("corruption: severity " + std::to_string(severity) + " outside [1, 5]");
    }
}

double severity_parameter(CorruptionKind kind, int severity) {
    CorruptionSpec{kind, severity}.validate();
    return kTable[static_cast<int>(kind)][severity - 1];
}

Image corrupt_with_parameter(const Image& image, CorruptionKind kind, double parameter, std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    switch (kind) {
        case CorruptionKind::gaussian_noise: {
            std::normal_distribution<double> noise(0.0, parameter);
            return map_pixels(image, [&](double v) { return v + noise(rng); });
        }
        case CorruptionKind::shot_noise:
            return map_pixels(image, [&](double v) {
                const double mean = v * parameter;
                if (mean <= 0.0) return 0.0;
                return static_cast<double>(std::poisson_distribution<long>(mean)(rng)) / parameter;
            });
        case CorruptionKind::impulse_noise: {
            std::bernoulli_distribution hit(parameter), salt(0.5);
            return map_pixels(image, [&](double v) {
                if (!hit(rng)) return v;
                return salt(rng) ? 1.0 : 0.0;
            });
        }
        case CorruptionKind::defocus_blur: return convolve(image, disk_kernel(parameter));
        case CorruptionKind::motion_blur: return convolve(image, line_kernel(parameter, kMotionAngle));
        case CorruptionKind::brightness: return map_pixels(image, [&](double v) { return v + parameter; });
        case CorruptionKind::contrast: {
            double mean = 0.0;
            for (float p : image.pixels) mean += p;
            mean /= static_cast<double>(std::max<std::size_t>(1, image.size()));
            return map_pixels(image, [&](double v) { return (v - mean) * parameter + mean; });
        }
        case CorruptionKind::pixelate: {
            const auto block = static_cast<std::size_t>(std::lround(parameter));
            if (block < 1) throw std::invalid_argument("pixelate: block size must be >= 1");
            return pixelate(image, block);
        }
    }
    throw std::invalid_argument("corrupt: unknown kind");
}

Image corrupt(const Image& image, const CorruptionSpec& spec, std::uint64_t seed) {
    spec.validate();
    return corrupt_with_parameter(image, spec.kind, severity_parameter(spec.kind, spec.severity), seed);
}

CorruptionSuite corruption_suite(const Dataset& dataset, std::span<const CorruptionKind> kinds,
                                 std::span<const int> severities, std::uint64_t seed) {
    if (kinds.empty() || severities.empty()) throw std::invalid_argument("corruption_suite: empty kind or severity list");
    for (int s : severities) CorruptionSpec{kinds.front(), s}.validate();
    CorruptionSuite suite;
    for (auto kind : kinds) {
        for (int severity : severities) {
            Dataset cell;
            cell.split = dataset.split;
            cell.class_names = dataset.class_names;
            cell.labels = dataset.labels;
            cell.images.reserve(dataset.size());
            const std::uint64_t cell_seed =
                splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(kind) << 8) | static_cast<std::uint64_t>(severity)));
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                cell.images.push_back(corrupt(dataset.images[i], {kind, severity}, splitmix64(cell_seed + i)));
            }
            suite.emplace(std::make_pair(kind, severity), std::move(cell));
        }
    }
    return suite;
}

}  // namespace phaseforge
