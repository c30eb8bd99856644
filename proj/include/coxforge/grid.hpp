#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace coxforge {

enum class Side { left, right };

Side parse_side(const std::string& text);
std::string to_string(Side side);

/// Coarse lattice A plus the source crop geometry it was derived from.
///
/// Cells are stored row-major: cell index a = row * nx + col, where col runs
/// along the shoe width and row along the toe-heel axis.
struct GridSpec {
    int nx = 39;
    int ny = 91;
    int crop_x0 = 262;
    int crop_x1 = 597;  // inclusive
    int crop_y0 = 44;
    int crop_y1 = 826;  // inclusive
    // Depicted coordinate ranges; stored as metadata only.
    std::pair<double, double> x_range{30.0, 68.0};
    std::pair<double, double> y_range{5.0, 95.0};

    int src_w() const { return crop_x1 - crop_x0 + 1; }
    int src_h() const { return crop_y1 - crop_y0 + 1; }
    std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    double patch_w() const { return static_cast<double>(src_w()) / nx; }
    double patch_h() const { return static_cast<double>(src_h()) / ny; }
    /// Area correction converting coarse-cell probabilities to source pixels.
    double delta_a() const {
        return static_cast<double>(src_w()) * static_cast<double>(src_h()) / static_cast<double>(cells());
    }
    std::size_t index(int col, int row) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(col);
    }

    /// Throws a dimension error on non-positive sizes or inverted crops.
    void validate() const;

    /// The 39 x 91 geometry used for the shoe database.
    static GridSpec database_default() { return GridSpec{}; }
    /// A synthetic lattice with no cropping and unit area correction.
    static GridSpec synthetic(int nx, int ny);

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Grayscale image, row-major, 0 = white and 1 = black.
struct RawImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;
    Side side = Side::left;

    double at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

struct ContactSurface {
    std::string shoe_id;
    std::vector<double> grid;
};

struct BinaryContact {
    std::vector<double> grid;  // values in {0, 1}
    double threshold = 0.0;
};

struct AccidentalCounts {
    std::vector<int> counts;
    long total = 0;
};

struct BinningResult {
    AccidentalCounts counts;
    std::vector<std::pair<double, double>> rejects;
};

/// One row of the accidentals CSV. A row with empty coordinates declares a
/// shoe that carries no accidentals.
struct Accidental {
    std::string shoe_id;
    Side side = Side::left;
    bool has_point = true;
    double x = 0.0;
    double y = 0.0;
};

/// Crops the source to the grid's crop window; right shoes are then mirrored
/// so every output shares the left-shoe layout.
RawImage crop_reflect(const RawImage& raw, const GridSpec& spec);

/// Exact area-weighted averaging over fractional patches of size
/// src_w/nx by src_h/ny.
ContactSurface coarsen(const RawImage& cropped, const GridSpec& spec, std::string shoe_id = {});

/// Per-image threshold selection; see binarize().
struct ThresholdMethod {
    enum class Kind { fixed, otsu } kind = Kind::otsu;
    double value = 0.5;

    static ThresholdMethod fixed(double c) { return {Kind::fixed, c}; }
    static ThresholdMethod otsu() { return {Kind::otsu, 0.0}; }
};

/// Otsu threshold on a 256-bin histogram over [0,1]. The returned value lies
/// midway between the largest below-threshold and smallest above-threshold
/// intensity present, so `v > c` reproduces the histogram split exactly.
double otsu_threshold(const std::vector<double>& values);

BinaryContact binarize(const ContactSurface& cs, const ThresholdMethod& method);

/// Maps original-pixel accidental coordinates into coarse cells. Points
/// outside the crop are returned in `rejects`.
BinningResult bin_accidentals(const std::vector<std::pair<double, double>>& points, Side side,
                              const GridSpec& spec);

/// Coarse cell (col, row) holding the source pixel (x, y), or nullopt if the
/// pixel falls outside the crop.
std::optional<std::pair<int, int>> locate_cell(double x, double y, Side side, const GridSpec& spec);

// File formats.
RawImage read_pgm(const std::string& path);
RawImage read_grid_csv(const std::string& path);
/// Dispatches on extension (.pgm or .csv).
RawImage read_image(const std::string& path);
void write_grid_csv(const std::string& path, const std::vector<double>& grid, int width, int height);
/// 8-bit binary PGM with min-max scaling; returns the (min, max) used.
std::pair<double, double> write_heatmap_pgm(const std::string& path, const std::vector<double>& grid, int width,
                                            int height);
std::vector<Accidental> read_accidentals_csv(const std::string& path);

}  // namespace coxforge
