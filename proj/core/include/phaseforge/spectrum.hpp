#pragma once

#include <cstddef>
#include <vector>

#include "phaseforge/image.hpp"

namespace phaseforge {

/// Per-channel amplitude and phase spectra, raw (unshifted) bin order.
///
/// amplitude >= 0 everywhere; phase lies in (-pi, pi] with the phase of an
/// exactly-zero bin defined as 0.
struct AmpPhase {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> amplitude;
    std::vector<double> phase;

    std::size_t plane_size() const { return height * width; }
};

/// Result of an inverse transform back to the pixel domain. `pre_clip` holds
/// the real part before clipping; `image` is the clipped [0, 1] image.
struct Reconstruction {
    Image image;
    Planes pre_clip;
    double max_imag_residue = 0.0;
};

AmpPhase decompose(const Image& image);
AmpPhase decompose(const Planes& planes);

/// Inverse DFT of amplitude * exp(i * phase), per channel. Throws on negative
/// amplitudes or mismatched shapes.
Reconstruction recompose(const AmpPhase& spectra);
Reconstruction recompose(const AmpPhase& amplitude_source, const AmpPhase& phase_source);

/// Unit amplitude, original phase.
Reconstruction phase_image(const Image& x);

/// Phase of `x`, amplitude of `amplitude_donor`.
Reconstruction swap_image(const Image& x, const Image& amplitude_donor);
Reconstruction swap_image(const Planes& x, const Planes& amplitude_donor);

struct AmplitudeSwapPair {
    Reconstruction adversarial_amplitude;  // A(x_adv), P(x)
    Reconstruction adversarial_phase;      // A(x), P(x_adv)
};

/// Adversarial amplitude swap of a clean image and any perturbed version of it.
AmplitudeSwapPair adversarial_amplitude_swap(const Image& x, const Image& x_adv);

}  // namespace phaseforge
