#include "phaseforge/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "phaseforge/fft2d.hpp"

namespace phaseforge {
namespace {

template <typename Grid>
AmpPhase decompose_planes(const Grid& source, std::size_t channels, std::size_t height, std::size_t width) {
    AmpPhase out{channels, height, width, {}, {}};
    out.amplitude.resize(channels * height * width);
    out.phase.resize(out.amplitude.size());
    for (std::size_t c = 0; c < channels; ++c) {
        const ComplexGrid spectrum = dft2(source.channel(c), height, width);
        const std::size_t base = c * height * width;
        for (std::size_t i = 0; i < spectrum.bins.size(); ++i) {
            const double re = spectrum.bins[i].real();
            const double im = spectrum.bins[i].imag();
            out.amplitude[base + i] = std::hypot(re, im);
            // atan2 returns [-pi, pi]; fold -pi onto pi. atan2(0, 0) == 0.
            double angle = std::atan2(im, re);
            if (angle == -std::numbers::pi) angle = std::numbers::pi;
            out.phase[base + i] = angle;
        }
    }
    return out;
}

void require_same_layout(const char* op, const AmpPhase& a, const AmpPhase& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw ShapeError(std::string(op) + ": spectra of shape [" + std::to_string(a.channels) + ", " +
                         std::to_string(a.height) + ", " + std::to_string(a.width) + "] and [" +
                         std::to_string(b.channels) + ", " + std::to_string(b.height) + ", " +
                         std::to_string(b.width) + "] differ");
    }
}

void require_same_layout(const char* op, const Planes& a, const Planes& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw ShapeError(std::string(op) + ": images of shape " + to_string({a.channels, a.height, a.width}) +
                         " and " + to_string({b.channels, b.height, b.width}) + " differ");
    }
}

}  // namespace

AmpPhase decompose(const Image& image) {
    return decompose_planes(image, image.channels, image.height, image.width);
}

AmpPhase decompose(const Planes& planes) {
    return decompose_planes(planes, planes.channels, planes.height, planes.width);
}

Reconstruction recompose(const AmpPhase& amplitude_source, const AmpPhase& phase_source) {
    require_same_layout("recompose", amplitude_source, phase_source);
    const std::size_t plane = amplitude_source.plane_size();
    Reconstruction out;
    out.pre_clip = Planes{amplitude_source.channels, amplitude_source.height, amplitude_source.width, {}};
    out.pre_clip.values.resize(amplitude_source.channels * plane);
    for (std::size_t c = 0; c < amplitude_source.channels; ++c) {
        ComplexGrid grid(amplitude_source.height, amplitude_source.width);
        for (std::size_t i = 0; i < plane; ++i) {
            const double a = amplitude_source.amplitude[c * plane + i];
            if (!(a >= 0.0)) {
                throw std::invalid_argument("recompose: negative or NaN amplitude " + std::to_string(a) +
                                            " in channel " + std::to_string(c) + " bin " + std::to_string(i));
            }
            grid.bins[i] = std::polar(a, phase_source.phase[c * plane + i]);
        }
        const RealGrid real = idft2(grid);
        std::copy(real.values.begin(), real.values.end(),
                  out.pre_clip.values.begin() + static_cast<long>(c * plane));
        out.max_imag_residue = std::max(out.max_imag_residue, real.max_imag_residue);
    }
    out.image = clip_to_image(out.pre_clip);
    return out;
}

Reconstruction recompose(const AmpPhase& spectra) { return recompose(spectra, spectra); }

Reconstruction phase_image(const Image& x) {
    AmpPhase spectra = decompose(x);
    std::fill(spectra.amplitude.begin(), spectra.amplitude.end(), 1.0);
    return recompose(spectra);
}

Reconstruction swap_image(const Planes& x, const Planes& amplitude_donor) {
    require_same_layout("swap_image", x, amplitude_donor);
    return recompose(decompose(amplitude_donor), decompose(x));
}

Reconstruction swap_image(const Image& x, const Image& amplitude_donor) {
    return swap_image(to_planes(x), to_planes(amplitude_donor));
}

AmplitudeSwapPair adversarial_amplitude_swap(const Image& x, const Image& x_adv) {
    if (!same_shape(x, x_adv)) {
        throw ShapeError("adversarial_amplitude_swap: clean shape " + to_string(x.shape()) +
                         " differs from adversarial shape " + to_string(x_adv.shape()));
    }
    const AmpPhase clean = decompose(x);
    const AmpPhase adversarial = decompose(x_adv);
    return {recompose(adversarial, clean), recompose(clean, adversarial)};
}

}  // namespace phaseforge
