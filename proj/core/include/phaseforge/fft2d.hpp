#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace phaseforge {

/// Complex H x W grid, row-major, 64-bit.
struct ComplexGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::complex<double>> bins;

    ComplexGrid() = default;
    ComplexGrid(std::size_t h, std::size_t w) : height(h), width(w), bins(h * w) {}

    std::complex<double>& operator()(std::size_t u, std::size_t v) { return bins[u * width + v]; }
    const std::complex<double>& operator()(std::size_t u, std::size_t v) const { return bins[u * width + v]; }
};

/// Real H x W grid returned by the inverse transform, with the largest
/// absolute imaginary part that was discarded.
struct RealGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
    double max_imag_residue = 0.0;
};

/// Unnormalized forward DFT:
///   X(u, v) = sum_{h,w} x(h, w) exp(-2 pi i (u h / H + v w / W)).
/// Rows and columns use radix-2 when their length is a power of two and
/// direct summation otherwise.
ComplexGrid dft2(std::span<const double> channel, std::size_t height, std::size_t width);
ComplexGrid dft2(std::span<const float> channel, std::size_t height, std::size_t width);

/// Inverse transform with 1 / (H W) normalization; keeps the real part.
RealGrid idft2(const ComplexGrid& grid);

/// Complex-to-complex inverse without discarding the imaginary part.
ComplexGrid idft2_complex(const ComplexGrid& grid);

bool is_power_of_two(std::size_t n);

}  // namespace phaseforge
