#pragma once

#include "coxforge/grid.hpp"

#include <span>
#include <vector>

namespace coxforge {

struct Kernel2D {
    int width = 0;
    int height = 0;
    std::vector<double> coefficients;  // row-major

    double at(int x, int y) const {
        return coefficients[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }

    static Kernel2D sobel_x();
    static Kernel2D sobel_y();
};

/// Non-negative image-gradient magnitudes on the coarse lattice.
struct GradientField {
    std::vector<double> grid;
};

/// Same-size linear convolution with zero padding, evaluated through the
/// frequency domain. The kernel is anchored at ((w-1)/2, (h-1)/2).
std::vector<double> fft_convolve2d(std::span<const double> image, int width, int height, const Kernel2D& kernel);

/// Per-cell sqrt(Gx^2 + Gy^2) of the two Sobel responses.
GradientField sobel_magnitude(const ContactSurface& cs, const GridSpec& spec);

}  // namespace coxforge
