#include "coxforge/gradient.hpp"

#include "coxforge/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>

namespace coxforge {

namespace {

// FFTW planning touches global state.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

struct PlanDestroy {
    void operator()(fftw_plan p) const {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(p);
    }
};

using PlanHandle = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

template <typename T>
std::unique_ptr<T[], FftwFree> fftw_buffer(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (!p) throw std::bad_alloc();
    return std::unique_ptr<T[], FftwFree>(p);
}

}  // namespace

Kernel2D Kernel2D::sobel_x() { return {3, 3, {-1, 0, 1, -2, 0, 2, -1, 0, 1}}; }

Kernel2D Kernel2D::sobel_y() { return {3, 3, {-1, -2, -1, 0, 0, 0, 1, 2, 1}}; }

std::vector<double> fft_convolve2d(std::span<const double> image, int width, int height, const Kernel2D& kernel) {
    require(width > 0 && height > 0, ErrorKind::dimension, "empty image");
    require(image.size() == static_cast<std::size_t>(width) * height, ErrorKind::dimension,
            "image buffer does not match its dimensions");
    require(kernel.width > 0 && kernel.height > 0 &&
                kernel.coefficients.size() == static_cast<std::size_t>(kernel.width) * kernel.height,
            ErrorKind::dimension, "malformed kernel");
    require(kernel.width <= width && kernel.height <= height, ErrorKind::dimension, "kernel larger than image");

    // Full linear convolution size; no wrap-around.
    const int pw = width + kernel.width - 1;
    const int ph = height + kernel.height - 1;
    const int cw = pw / 2 + 1;
    const std::size_t n_real = static_cast<std::size_t>(pw) * ph;
    const std::size_t n_cplx = static_cast<std::size_t>(cw) * ph;

    auto img = fftw_buffer<double>(n_real);
    auto ker = fftw_buffer<double>(n_real);
    auto img_hat = fftw_buffer<fftw_complex>(n_cplx);
    auto ker_hat = fftw_buffer<fftw_complex>(n_cplx);

    PlanHandle fwd_img, fwd_ker, inv;
    {
        std::lock_guard lock(planner_mutex());
        fwd_img.reset(fftw_plan_dft_r2c_2d(ph, pw, img.get(), img_hat.get(), FFTW_ESTIMATE));
        fwd_ker.reset(fftw_plan_dft_r2c_2d(ph, pw, ker.get(), ker_hat.get(), FFTW_ESTIMATE));
        inv.reset(fftw_plan_dft_c2r_2d(ph, pw, img_hat.get(), img.get(), FFTW_ESTIMATE));
    }
    require(fwd_img && fwd_ker && inv, ErrorKind::numeric, "FFTW planning failed");

    std::fill(img.get(), img.get() + n_real, 0.0);
    std::fill(ker.get(), ker.get() + n_real, 0.0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img[static_cast<std::size_t>(y) * pw + x] = image[static_cast<std::size_t>(y) * width + x];
    for (int y = 0; y < kernel.height; ++y)
        for (int x = 0; x < kernel.width; ++x) ker[static_cast<std::size_t>(y) * pw + x] = kernel.at(x, y);

    fftw_execute(fwd_img.get());
    fftw_execute(fwd_ker.get());
    for (std::size_t i = 0; i < n_cplx; ++i) {
        const std::complex<double> a(img_hat[i][0], img_hat[i][1]);
        const std::complex<double> b(ker_hat[i][0], ker_hat[i][1]);
        const auto c = a * b;
        img_hat[i][0] = c.real();
        img_hat[i][1] = c.imag();
    }
    fftw_execute(inv.get());

    const int ox = (kernel.width - 1) / 2;
    const int oy = (kernel.height - 1) / 2;
    const double scale = 1.0 / static_cast<double>(n_real);
    std::vector<double> out(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out[static_cast<std::size_t>(y) * width + x] = img[static_cast<std::size_t>(y + oy) * pw + (x + ox)] * scale;
    return out;
}

GradientField sobel_magnitude(const ContactSurface& cs, const GridSpec& spec) {
    require(cs.grid.size() == spec.cells(), ErrorKind::dimension, "contact surface does not match the grid");
    GradientField out;
    out.grid.assign(spec.cells(), 0.0);
    // Grids narrower than the kernel have no interior; leave them flat.
    if (spec.nx < 3 || spec.ny < 3) return out;
    const auto gx = fft_convolve2d(cs.grid, spec.nx, spec.ny, Kernel2D::sobel_x());
    const auto gy = fft_convolve2d(cs.grid, spec.nx, spec.ny, Kernel2D::sobel_y());
    for (std::size_t a = 0; a < out.grid.size(); ++a) out.grid[a] = std::hypot(gx[a], gy[a]);
    return out;
}

}  // namespace coxforge
