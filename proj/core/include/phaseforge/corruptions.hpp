#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phaseforge/data.hpp"

namespace phaseforge {

enum class CorruptionKind {
    gaussian_noise,
    shot_noise,
    impulse_noise,
    defocus_blur,
    motion_blur,
    brightness,
    contrast,
    pixelate,
};

inline constexpr std::array<CorruptionKind, 8> kAllCorruptions = {
    CorruptionKind::gaussian_noise, CorruptionKind::shot_noise,  CorruptionKind::impulse_noise,
    CorruptionKind::defocus_blur,   CorruptionKind::motion_blur, CorruptionKind::brightness,
    CorruptionKind::contrast,       CorruptionKind::pixelate,
};

std::string_view corruption_name(CorruptionKind kind);
CorruptionKind parse_corruption(std::string_view name);
bool is_stochastic(CorruptionKind kind);

/// Severity table, version 1. Index 0 is severity 1.
///
///   gaussian_noise  noise std                {0.04, 0.08, 0.12, 0.18, 0.26}
///   shot_noise      photons per unit (lower = worse) {60, 25, 12, 5, 3}
///   impulse_noise   salt-and-pepper fraction {0.03, 0.06, 0.09, 0.17, 0.27}
///   defocus_blur    disk radius in pixels    {1, 1.5, 2, 2.5, 3}
///   motion_blur     line length at 45 deg    {3, 5, 7, 9, 11}
///   brightness      additive offset          {0.1, 0.2, 0.3, 0.4, 0.5}
///   contrast        contrast factor (lower = worse) {0.75, 0.5, 0.4, 0.3, 0.15}
///   pixelate        block size               {2, 3, 4, 5, 6}
inline constexpr int kCorruptionTableVersion = 1;
double severity_parameter(CorruptionKind kind, int severity);

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::gaussian_noise;
    int severity = 1;

    /// Throws std::out_of_range unless 1 <= severity <= 5.
    void validate() const;
};

/// Applies a corruption at a table severity. Stochastic kinds are
/// deterministic in `seed`; the others ignore it. Output clipped to [0, 1].
Image corrupt(const Image& image, const CorruptionSpec& spec, std::uint64_t seed);

/// Same with an explicit controlling parameter instead of a table severity.
Image corrupt_with_parameter(const Image& image, CorruptionKind kind, double parameter, std::uint64_t seed);

using CorruptionSuite = std::map<std::pair<CorruptionKind, int>, Dataset>;

/// Every (kind, severity) copy of `dataset`; labels are unchanged. Image i of
/// cell (k, s) uses a seed derived from (seed, k, s, i).
CorruptionSuite corruption_suite(const Dataset& dataset, std::span<const CorruptionKind> kinds,
                                 std::span<const int> severities, std::uint64_t seed);

}  // namespace phaseforge
