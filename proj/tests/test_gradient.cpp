#include "coxforge/error.hpp"
#include "coxforge/gradient.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace coxforge;
namespace ts = testing_support;

namespace {

// Nested-loop convolution, zero outside the image, kernel anchored at ((w-1)/2, (h-1)/2).
std::vector<double> direct_convolve(const std::vector<double>& img, int w, int h, const Kernel2D& k) {
    const int ox = (k.width - 1) / 2, oy = (k.height - 1) / 2;
    std::vector<double> out(img.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int j = 0; j < k.height; ++j)
                for (int i = 0; i < k.width; ++i) {
                    const int sx = x + ox - i, sy = y + oy - j;
                    if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
                    s += k.at(i, j) * img[static_cast<std::size_t>(sy) * w + sx];
                }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    return out;
}

Kernel2D random_kernel(int w, int h, std::uint64_t seed) {
    return {w, h, ts::uniform_values(static_cast<std::size_t>(w) * h, seed, -1.0, 1.0)};
}

// Rotate a row-major w x h field by 90 degrees: (x, y) -> (h-1-y, x), giving h x w.
std::vector<double> rotate(const std::vector<double>& v, int w, int h) {
    std::vector<double> out(v.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(x) * h + (h - 1 - y)] = v[static_cast<std::size_t>(y) * w + x];
    return out;
}

bool interior(int x, int y, int w, int h) { return x > 0 && y > 0 && x < w - 1 && y < h - 1; }

}  // namespace

TEST(FftConvolve, DeltaKernelIsIdentity) {
    const auto img = ts::uniform_values(35, 1);
    const auto out = fft_convolve2d(img, 7, 5, Kernel2D{1, 1, {1.0}});
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-14);
}

TEST(FftConvolve, ConstantImageSobelInteriorZero) {
    const std::vector<double> img(8 * 6, 0.7);
    const auto out = fft_convolve2d(img, 8, 6, Kernel2D::sobel_x());
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x)
            if (interior(x, y, 8, 6)) EXPECT_NEAR(out[static_cast<std::size_t>(y) * 8 + x], 0.0, 1e-13);
}

TEST(FftConvolve, MatchesDirectOn8x8) {
    const auto img = ts::uniform_values(64, 2);
    const auto k = random_kernel(3, 3, 3);
    const auto fft = fft_convolve2d(img, 8, 8, k);
    const auto ref = direct_convolve(img, 8, 8, k);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(fft[i], ref[i], 1e-10);
}

TEST(FftConvolve, MatchesDirectOnRandomShapes) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dim(1, 32), kdim(1, 5);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = dim(rng), h = dim(rng);
        const int kw = std::min(w, kdim(rng)), kh = std::min(h, kdim(rng));
        const auto img = ts::uniform_values(static_cast<std::size_t>(w) * h, 1000 + trial);
        const auto k = random_kernel(kw, kh, 5000 + trial);
        const auto fft = fft_convolve2d(img, w, h, k);
        const auto ref = direct_convolve(img, w, h, k);
        double worst = 0.0;
        for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(fft[i] - ref[i]));
        EXPECT_LE(worst, 1e-10) << w << "x" << h << " kernel " << kw << "x" << kh;
    }
}

TEST(FftConvolve, KernelLargerThanImageIsDimensionError) {
    const std::vector<double> img(4, 0.0);
    try {
        fft_convolve2d(img, 2, 2, Kernel2D::sobel_x());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension);
    }
}

TEST(Sobel, ConstantSurfaceInteriorZero) {
    const auto g = GridSpec::synthetic(9, 7);
    const ContactSurface cs{"c", std::vector<double>(g.cells(), 0.4)};
    const auto m = sobel_magnitude(cs, g).grid;
    for (int y = 0; y < g.ny; ++y)
        for (int x = 0; x < g.nx; ++x)
            if (interior(x, y, g.nx, g.ny)) EXPECT_NEAR(m[g.index(x, y)], 0.0, 1e-13);
}

TEST(Sobel, VerticalStepEdgeIsFour) {
    const auto g = GridSpec::synthetic(10, 8);
    const int k = 5;
    ContactSurface cs{"step", std::vector<double>(g.cells(), 0.0)};
    for (int y = 0; y < g.ny; ++y)
        for (int x = k; x < g.nx; ++x) cs.grid[g.index(x, y)] = 1.0;
    const auto m = sobel_magnitude(cs, g).grid;
    for (int y = 1; y < g.ny - 1; ++y) {
        EXPECT_NEAR(m[g.index(k - 1, y)], 4.0, 1e-12);
        EXPECT_NEAR(m[g.index(k, y)], 4.0, 1e-12);
        for (int x = 1; x < g.nx - 1; ++x)
            if (x < k - 1 || x > k) EXPECT_NEAR(m[g.index(x, y)], 0.0, 1e-12) << x << "," << y;
    }
}

TEST(Sobel, RotationIsometry) {
    const auto g = GridSpec::synthetic(10, 10);
    const ContactSurface cs{"r", ts::uniform_values(g.cells(), 8)};
    const auto m = sobel_magnitude(cs, g).grid;
    const ContactSurface rotated{"r", rotate(cs.grid, 10, 10)};
    const auto mr = sobel_magnitude(rotated, g).grid;
    const auto expected = rotate(m, 10, 10);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(mr[i], expected[i], 1e-12);
}

TEST(Sobel, NegationInvariantInInterior) {
    const auto g = GridSpec::synthetic(12, 9);
    ContactSurface cs{"n", ts::uniform_values(g.cells(), 4)};
    ContactSurface neg = cs;
    for (auto& v : neg.grid) v = 1.0 - v;
    const auto a = sobel_magnitude(cs, g).grid, b = sobel_magnitude(neg, g).grid;
    for (int y = 1; y < g.ny - 1; ++y)
        for (int x = 1; x < g.nx - 1; ++x) EXPECT_NEAR(a[g.index(x, y)], b[g.index(x, y)], 1e-12);
    for (double v : a) EXPECT_GE(v, 0.0);
}

TEST(Sobel, MatchesDirectMagnitude) {
    const auto g = GridSpec::synthetic(13, 17);
    const ContactSurface cs{"d", ts::uniform_values(g.cells(), 12)};
    const auto m = sobel_magnitude(cs, g).grid;
    const auto gx = direct_convolve(cs.grid, g.nx, g.ny, Kernel2D::sobel_x());
    const auto gy = direct_convolve(cs.grid, g.nx, g.ny, Kernel2D::sobel_y());
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], std::hypot(gx[i], gy[i]), 1e-10);
}
