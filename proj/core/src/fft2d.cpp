#include "phaseforge/fft2d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace phaseforge {
namespace {

using cd = std::complex<double>;

// Twiddles exp(sign * 2 pi i k / n), k < n.
std::vector<cd> twiddles(std::size_t n, double sign) {
    std::vector<cd> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = {std::cos(angle), std::sin(angle)};
    }
    return w;
}

void radix2(std::vector<cd>& a, const std::vector<cd>& w) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cd t = w[k * step] * a[start + k + len / 2];
                const cd u = a[start + k];
                a[start + k] = u + t;
                a[start + k + len / 2] = u - t;
            }
        }
    }
}

void direct(std::vector<cd>& a, const std::vector<cd>& w) {
    const std::size_t n = a.size();
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cd acc{0.0, 0.0};
        for (std::size_t j = 0; j < n; ++j) acc += a[j] * w[(k * j) % n];
        out[k] = acc;
    }
    a.swap(out);
}

class Transform1d {
public:
    Transform1d(std::size_t n, double sign) : fast_(is_power_of_two(n)), w_(twiddles(n, sign)) {}
    void operator()(std::vector<cd>& a) const { fast_ ? radix2(a, w_) : direct(a, w_); }

private:
    bool fast_;
    std::vector<cd> w_;
};

void transform_2d(ComplexGrid& grid, double sign) {
    const std::size_t h = grid.height, w = grid.width;
    const Transform1d rows(w, sign), cols(h, sign);
    std::vector<cd> line(w);
    for (std::size_t r = 0; r < h; ++r) {
        std::copy_n(grid.bins.begin() + static_cast<long>(r * w), w, line.begin());
        rows(line);
        std::copy(line.begin(), line.end(), grid.bins.begin() + static_cast<long>(r * w));
    }
    line.resize(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) line[r] = grid.bins[r * w + c];
        cols(line);
        for (std::size_t r = 0; r < h; ++r) grid.bins[r * w + c] = line[r];
    }
}

template <typename Scalar>
ComplexGrid forward(std::span<const Scalar> channel, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw std::invalid_argument("dft2: empty grid");
    if (channel.size() != height * width) {
        throw std::invalid_argument("dft2: " + std::to_string(channel.size()) + " samples for a " +
                                    std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    ComplexGrid grid(height, width);
    for (std::size_t i = 0; i < channel.size(); ++i) grid.bins[i] = {static_cast<double>(channel[i]), 0.0};
    transform_2d(grid, -1.0);
    return grid;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

ComplexGrid dft2(std::span<const double> channel, std::size_t height, std::size_t width) {
    return forward(channel, height, width);
}

ComplexGrid dft2(std::span<const float> channel, std::size_t height, std::size_t width) {
    return forward(channel, height, width);
}

ComplexGrid idft2_complex(const ComplexGrid& grid) {
    if (grid.height == 0 || grid.width == 0) throw std::invalid_argument("idft2: empty grid");
    if (grid.bins.size() != grid.height * grid.width) throw std::invalid_argument("idft2: inconsistent grid");
    ComplexGrid out = grid;
    transform_2d(out, +1.0);
    const double norm = 1.0 / static_cast<double>(grid.height * grid.width);
    for (auto& v : out.bins) v *= norm;
    return out;
}

RealGrid idft2(const ComplexGrid& grid) {
    const ComplexGrid full = idft2_complex(grid);
    RealGrid out{grid.height, grid.width, std::vector<double>(full.bins.size()), 0.0};
    for (std::size_t i = 0; i < full.bins.size(); ++i) {
        out.values[i] = full.bins[i].real();
        out.max_imag_residue = std::max(out.max_imag_residue, std::abs(full.bins[i].imag()));
    }
    return out;
}

}  // namespace phaseforge
