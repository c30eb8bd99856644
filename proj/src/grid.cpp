#include "coxforge/grid.hpp"

#include "coxforge/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace coxforge {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Overlap of source pixels [j, j+1) with coarse intervals [k*w, (k+1)*w),
// as (pixel, cell, overlap-length) triples.
struct Overlap {
    int pixel;
    int cell;
    double length;
};

std::vector<Overlap> overlaps_1d(int n_src, int n_cells) {
    const double w = static_cast<double>(n_src) / n_cells;
    std::vector<Overlap> out;
    out.reserve(static_cast<std::size_t>(n_src) * 2);
    for (int k = 0; k < n_cells; ++k) {
        const double lo = k * w;
        const double hi = (k + 1 == n_cells) ? static_cast<double>(n_src) : (k + 1) * w;
        const int j0 = static_cast<int>(std::floor(lo));
        const int j1 = std::min(n_src - 1, static_cast<int>(std::ceil(hi)) - 1);
        for (int j = j0; j <= j1; ++j) {
            const double len = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
            if (len > 0.0) out.push_back({j, k, len});
        }
    }
    return out;
}

}  // namespace

Side parse_side(const std::string& text) {
    const auto t = lower(trim(text));
    if (t == "left" || t == "l") return Side::left;
    if (t == "right" || t == "r") return Side::right;
    fail(ErrorKind::config, "unknown shoe side '" + text + "'");
}

std::string to_string(Side side) { return side == Side::left ? "left" : "right"; }

void GridSpec::validate() const {
    require(nx >= 1 && ny >= 1, ErrorKind::dimension, "grid dimensions must be positive");
    require(crop_x1 >= crop_x0 && crop_y1 >= crop_y0, ErrorKind::dimension, "crop range is inverted");
    require(crop_x0 >= 0 && crop_y0 >= 0, ErrorKind::dimension, "crop range starts below zero");
    require(src_w() >= nx && src_h() >= ny, ErrorKind::dimension, "crop is smaller than the coarse grid");
}

GridSpec GridSpec::synthetic(int nx, int ny) {
    GridSpec g;
    g.nx = nx;
    g.ny = ny;
    g.crop_x0 = 0;
    g.crop_x1 = nx - 1;
    g.crop_y0 = 0;
    g.crop_y1 = ny - 1;
    g.x_range = {0.0, static_cast<double>(nx)};
    g.y_range = {0.0, static_cast<double>(ny)};
    return g;
}

RawImage crop_reflect(const RawImage& raw, const GridSpec& spec) {
    spec.validate();
    require(spec.crop_x1 < raw.width && spec.crop_y1 < raw.height, ErrorKind::dimension,
            "crop range exceeds image bounds (" + std::to_string(raw.width) + "x" + std::to_string(raw.height) + ")");
    RawImage out;
    out.width = spec.src_w();
    out.height = spec.src_h();
    out.side = Side::left;
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const int sx = raw.side == Side::right ? out.width - 1 - x : x;
            out.pixels[static_cast<std::size_t>(y) * out.width + x] = raw.at(spec.crop_x0 + sx, spec.crop_y0 + y);
        }
    }
    return out;
}

ContactSurface coarsen(const RawImage& cropped, const GridSpec& spec, std::string shoe_id) {
    spec.validate();
    require(cropped.width == spec.src_w() && cropped.height == spec.src_h(), ErrorKind::dimension,
            "coarsen expects a cropped image of the grid's source size");
    const auto ox = overlaps_1d(spec.src_w(), spec.nx);
    const auto oy = overlaps_1d(spec.src_h(), spec.ny);

    // Separable: first collapse columns per source row, then rows.
    std::vector<double> row_pass(static_cast<std::size_t>(cropped.height) * spec.nx, 0.0);
    for (int y = 0; y < cropped.height; ++y) {
        for (const auto& o : ox) {
            row_pass[static_cast<std::size_t>(y) * spec.nx + o.cell] += o.length * cropped.at(o.pixel, y);
        }
    }
    ContactSurface out;
    out.shoe_id = std::move(shoe_id);
    out.grid.assign(spec.cells(), 0.0);
    for (const auto& o : oy) {
        for (int k = 0; k < spec.nx; ++k) {
            out.grid[spec.index(k, o.cell)] += o.length * row_pass[static_cast<std::size_t>(o.pixel) * spec.nx + k];
        }
    }
    const double area = spec.patch_w() * spec.patch_h();
    for (auto& v : out.grid) v = std::clamp(v / area, 0.0, 1.0);
    return out;
}

double otsu_threshold(const std::vector<double>& values) {
    constexpr int bins = 256;
    require(!values.empty(), ErrorKind::dimension, "otsu threshold of an empty surface");
    std::array<double, bins> hist{};
    auto bin_of = [](double v) { return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1); };
    for (double v : values) hist[static_cast<std::size_t>(bin_of(v))] += 1.0;

    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int b = 0; b < bins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];

    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_t = -1;
    for (int t = 0; t < bins - 1; ++t) {
        w0 += hist[static_cast<std::size_t>(t)];
        sum0 += t * hist[static_cast<std::size_t>(t)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    const double vmax = *std::max_element(values.begin(), values.end());
    if (best_t < 0) return vmax;  // single populated bin: nothing exceeds the threshold

    double below = -std::numeric_limits<double>::infinity();
    double above = std::numeric_limits<double>::infinity();
    for (double v : values) {
        if (bin_of(v) <= best_t) below = std::max(below, v);
        else above = std::min(above, v);
    }
    return 0.5 * (below + above);
}

BinaryContact binarize(const ContactSurface& cs, const ThresholdMethod& method) {
    BinaryContact out;
    if (method.kind == ThresholdMethod::Kind::fixed) {
        require(method.value > 0.0 && method.value < 1.0, ErrorKind::parameter,
                "fixed binarization threshold must lie in (0,1)");
        out.threshold = method.value;
    } else {
        out.threshold = otsu_threshold(cs.grid);
    }
    out.grid.resize(cs.grid.size());
    for (std::size_t a = 0; a < cs.grid.size(); ++a) out.grid[a] = cs.grid[a] > out.threshold ? 1.0 : 0.0;
    return out;
}

std::optional<std::pair<int, int>> locate_cell(double x, double y, Side side, const GridSpec& spec) {
    // Pixel j covers [j, j+1) in crop coordinates; its centre decides the cell.
    double px = x - spec.crop_x0 + 0.5;
    const double py = y - spec.crop_y0 + 0.5;
    if (!(px >= 0.0 && px < spec.src_w() && py >= 0.0 && py < spec.src_h())) return std::nullopt;
    if (side == Side::right) px = spec.src_w() - px;
    const int col = std::min(spec.nx - 1, static_cast<int>(std::floor(px / spec.patch_w())));
    const int row = std::min(spec.ny - 1, static_cast<int>(std::floor(py / spec.patch_h())));
    return std::make_pair(col, row);
}

BinningResult bin_accidentals(const std::vector<std::pair<double, double>>& points, Side side,
                              const GridSpec& spec) {
    spec.validate();
    BinningResult out;
    out.counts.counts.assign(spec.cells(), 0);
    for (const auto& [x, y] : points) {
        if (auto cell = locate_cell(x, y, side, spec)) {
            ++out.counts.counts[spec.index(cell->first, cell->second)];
            ++out.counts.total;
        } else {
            out.rejects.emplace_back(x, y);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats

namespace {

std::string next_pgm_token(std::istream& in) {
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        return tok;
    }
    fail(ErrorKind::io, "truncated PGM header");
}

}  // namespace

RawImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open image '" + path + "'");
    const std::string magic = next_pgm_token(in);
    require(magic == "P2" || magic == "P5", ErrorKind::io, "'" + path + "' is not a P2/P5 PGM file");
    RawImage img;
    int maxval = 0;
    try {
        img.width = std::stoi(next_pgm_token(in));
        img.height = std::stoi(next_pgm_token(in));
        maxval = std::stoi(next_pgm_token(in));
    } catch (const std::logic_error&) {
        fail(ErrorKind::io, "malformed PGM header in '" + path + "'");
    }
    require(img.width > 0 && img.height > 0 && maxval > 0 && maxval < 65536, ErrorKind::io,
            "invalid PGM header values in '" + path + "'");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(n);
    // PGM stores brightness; contact intensity is darkness.
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            int v = 0;
            require(static_cast<bool>(in >> v), ErrorKind::io, "truncated PGM raster in '" + path + "'");
            img.pixels[i] = 1.0 - static_cast<double>(v) / maxval;
        }
    } else {
        in.get();  // single whitespace after maxval
        const int bytes = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> buf(n * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        require(in.gcount() == static_cast<std::streamsize>(buf.size()), ErrorKind::io,
                "truncated PGM raster in '" + path + "'");
        for (std::size_t i = 0; i < n; ++i) {
            const int v = bytes == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
            img.pixels[i] = 1.0 - static_cast<double>(v) / maxval;
        }
    }
    for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
    return img;
}

RawImage read_grid_csv(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open grid '" + path + "'");
    RawImage img;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (img.height == 0) img.width = static_cast<int>(fields.size());
        require(static_cast<int>(fields.size()) == img.width, ErrorKind::io,
                path + ":" + std::to_string(lineno) + ": ragged row");
        for (const auto& f : fields) {
            double v = 0.0;
            try {
                v = std::stod(f);
            } catch (const std::logic_error&) {
                fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": non-numeric value '" + f + "'");
            }
            require(v >= 0.0 && v <= 1.0, ErrorKind::io,
                    path + ":" + std::to_string(lineno) + ": intensity outside [0,1]");
            img.pixels.push_back(v);
        }
        ++img.height;
    }
    require(img.height > 0, ErrorKind::io, "grid '" + path + "' is empty");
    return img;
}

RawImage read_image(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : lower(path.substr(dot));
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".csv") return read_grid_csv(path);
    fail(ErrorKind::io, "unsupported image format '" + path + "' (expected .pgm or .csv)");
}

void write_grid_csv(const std::string& path, const std::vector<double>& grid, int width, int height) {
    require(grid.size() == static_cast<std::size_t>(width) * height, ErrorKind::dimension,
            "grid size does not match its dimensions");
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path + "'");
    out.precision(17);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (x) out << ',';
            out << grid[static_cast<std::size_t>(y) * width + x];
        }
        out << '\n';
    }
}

std::pair<double, double> write_heatmap_pgm(const std::string& path, const std::vector<double>& grid, int width,
                                            int height) {
    require(grid.size() == static_cast<std::size_t>(width) * height, ErrorKind::dimension,
            "grid size does not match its dimensions");
    const auto [lo_it, hi_it] = std::minmax_element(grid.begin(), grid.end());
    const double lo = *lo_it, hi = *hi_it;
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path + "'");
    out << "P5\n" << width << ' ' << height << "\n255\n";
    for (double v : grid) {
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
    }
    return {lo, hi};
}

std::vector<Accidental> read_accidentals_csv(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open accidentals '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::io, "accidentals CSV '" + path + "' is empty");
    const auto header = split_csv_line(line);
    require(header.size() == 4 && lower(header[0]) == "shoe_id" && lower(header[1]) == "side" &&
                lower(header[2]) == "x" && lower(header[3]) == "y",
            ErrorKind::io, "accidentals CSV must have header shoe_id,side,x,y");
    std::vector<Accidental> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        require(f.size() == 4, ErrorKind::io, where + ": expected 4 fields");
        require(!f[0].empty(), ErrorKind::io, where + ": empty shoe_id");
        Accidental acc;
        acc.shoe_id = f[0];
        try {
            acc.side = parse_side(f[1]);
        } catch (const Error&) {
            fail(ErrorKind::io, where + ": bad side '" + f[1] + "'");
        }
        if (f[2].empty() && f[3].empty()) {
            acc.has_point = false;
        } else {
            try {
                acc.x = std::stod(f[2]);
                acc.y = std::stod(f[3]);
            } catch (const std::logic_error&) {
                fail(ErrorKind::io, where + ": non-numeric coordinate");
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

}  // namespace coxforge
