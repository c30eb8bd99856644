#include "coxforge/simulate.hpp"

#include "coxforge/error.hpp"
#include "coxforge/gmrf.hpp"
#include "coxforge/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace coxforge {

std::string to_string(ContactGenerator g) {
    switch (g) {
        case ContactGenerator::blobs: return "blobs";
        case ContactGenerator::stripes: return "stripes";
        case ContactGenerator::uniform_noise: return "uniform_noise";
    }
    return "blobs";
}

ContactGenerator parse_contact_generator(const std::string& s) {
    if (s == "blobs") return ContactGenerator::blobs;
    if (s == "stripes") return ContactGenerator::stripes;
    if (s == "uniform_noise" || s == "noise") return ContactGenerator::uniform_noise;
    fail(ErrorKind::config, "unknown contact generator '" + s + "'");
}

void SimConfig::validate() const {
    require(nx >= 1 && ny >= 1 && n_shoes >= 1, ErrorKind::config, "simulation sizes must be positive");
    spec.validate();
    require(psi.tau_sv.size() == spec.sv.size(), ErrorKind::config,
            "true psi needs one sv precision per spatially varying index");
    require(psi.tau_shoe > 0 && psi.tau_smooth > 0, ErrorKind::config, "true precisions must be positive");
    for (double t : psi.tau_sv) require(t > 0, ErrorKind::config, "true precisions must be positive");
    if (fixed_effects)
        require(fixed_effects->size() == spec.fixed.size(), ErrorKind::config,
                "explicit fixed effects must match the spec's fixed set");
}

namespace {

// Separable Gaussian blur with zero padding.
std::vector<double> blur(const std::vector<double>& v, int nx, int ny, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    std::vector<double> tmp(v.size(), 0.0), out(v.size(), 0.0);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            for (int i = -r; i <= r; ++i)
                if (x + i >= 0 && x + i < nx)
                    tmp[static_cast<std::size_t>(y * nx + x)] +=
                        k[static_cast<std::size_t>(i + r)] * v[static_cast<std::size_t>(y * nx + x + i)];
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            for (int i = -r; i <= r; ++i)
                if (y + i >= 0 && y + i < ny)
                    out[static_cast<std::size_t>(y * nx + x)] +=
                        k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>((y + i) * nx + x)];
    return out;
}

std::string shoe_name(std::size_t s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sim%04zu", s);
    return buf;
}

}  // namespace

std::pair<ContactSurface, GradientField> gen_contact(const SimConfig& config, std::size_t shoe_index) {
    const GridSpec grid = config.grid();
    NormalSource rng(derive_seed(derive_seed(config.seed, streams::contact), shoe_index));
    const std::size_t n = grid.cells();
    ContactSurface cs;
    cs.shoe_id = shoe_name(shoe_index);
    cs.grid.resize(n);
    switch (config.generator) {
        case ContactGenerator::uniform_noise:
            for (auto& v : cs.grid) v = rng.uniform();
            break;
        case ContactGenerator::stripes: {
            const double angle = 3.14159265358979323846 * rng.uniform();
            const double period = 3.0 + 4.0 * rng.uniform();
            const double phase = 6.283185307179586 * rng.uniform();
            for (int y = 0; y < grid.ny; ++y)
                for (int x = 0; x < grid.nx; ++x)
                    cs.grid[grid.index(x, y)] =
                        0.5 + 0.5 * std::sin(6.283185307179586 * (x * std::cos(angle) + y * std::sin(angle)) / period +
                                             phase);
            break;
        }
        case ContactGenerator::blobs: {
            // Smoothed white noise, standardized, squashed through a logistic
            // with a random offset so coverage varies between shoes.
            std::vector<double> noise(n);
            for (auto& v : noise) v = rng();
            auto field = blur(noise, grid.nx, grid.ny, 1.5);
            double mean = 0.0, var = 0.0;
            for (double v : field) mean += v;
            mean /= static_cast<double>(n);
            for (double v : field) var += (v - mean) * (v - mean);
            const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
            const double offset = -0.8 + 1.6 * rng.uniform();
            for (std::size_t a = 0; a < n; ++a) {
                const double z = sd > 0 ? (field[a] - mean) / sd : 0.0;
                cs.grid[a] = 1.0 / (1.0 + std::exp(-(2.0 * z + offset)));
            }
            break;
        }
    }
    for (auto& v : cs.grid) v = std::clamp(v, 0.0, 1.0);
    GradientField g = sobel_magnitude(cs, grid);
    return {std::move(cs), std::move(g)};
}

SimResult gen_dataset(const SimConfig& config) {
    config.validate();
    const GridSpec grid = config.grid();
    const std::size_t n = grid.cells();
    SimResult out;
    out.dataset.grid = grid;
    out.dataset.shoes.resize(config.n_shoes);
    for (std::size_t s = 0; s < config.n_shoes; ++s) {
        auto [cs, g] = gen_contact(config, s);
        auto& rec = out.dataset.shoes[s];
        rec.shoe_id = cs.shoe_id;
        rec.side = Side::left;
        rec.binary = binarize(cs, ThresholdMethod::otsu());
        rec.contact = std::move(cs);
        rec.gradient = std::move(g);
        rec.counts.counts.assign(n, 0);
    }

    const auto& spec = config.spec;
    const ThetaLayout layout = ThetaLayout::for_spec(spec, config.n_shoes, n);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));

    NormalSource shoe_rng(derive_seed(config.seed, streams::theta));
    for (std::size_t s = 0; s < layout.shoes; ++s)
        theta[static_cast<Eigen::Index>(s)] = shoe_rng() / std::sqrt(config.psi.tau_shoe);

    NormalSource fixed_rng(derive_seed(config.seed, streams::fixed_effects));
    for (std::size_t k = 0; k < spec.fixed.size(); ++k) {
        const auto idx = spec.fixed[k];
        double b = 0.0;
        if (config.fixed_effects) {
            b = (*config.fixed_effects)[k];
        } else if (idx.is_zero()) {
            b = config.intercept_offset;
        } else if (idx.order() == 1) {
            b = config.main_effect_sd * fixed_rng();
            if (idx == InteractionIndex::parse("100000")) b += config.contact_effect;
        } else {
            b = config.interaction_sd * fixed_rng();
        }
        theta[static_cast<Eigen::Index>(layout.fixed_offset() + k)] = b;
    }

    if (layout.spatial_blocks() > 0) {
        const SparsePrecision q = besag_precision(grid);
        for (std::size_t p = 0; p < layout.spatial_blocks(); ++p) {
            const bool smooth = layout.smooth && p == 0;
            const double tau = smooth ? config.psi.tau_smooth : config.psi.tau_sv[layout.smooth ? p - 1 : p];
            const auto field =
                sample_constrained({q, tau}, derive_seed(derive_seed(config.seed, streams::theta), p + 1));
            theta.segment(static_cast<Eigen::Index>(layout.shoes + layout.spatial_rest_offset(p)),
                          static_cast<Eigen::Index>(n)) = field;
        }
    }

    // Counts from the model's own predictor.
    const ModelData md = make_model_data(grid, build_tensor(out.dataset, spec),
                                         Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.n_shoes * n)), spec);
    const Eigen::VectorXd eta = linear_predictor(theta, md);
    for (std::size_t s = 0; s < config.n_shoes; ++s) {
        NormalSource count_rng(derive_seed(derive_seed(config.seed, streams::counts), s));
        auto& counts = out.dataset.shoes[s].counts;
        counts.counts.assign(n, 0);
        counts.total = 0;
        for (std::size_t a = 0; a < n; ++a) {
            const long c = count_rng.poisson(std::exp(eta[static_cast<Eigen::Index>(s * n + a)]));
            require(c <= std::numeric_limits<int>::max(), ErrorKind::numeric, "simulated count overflows");
            counts.counts[a] = static_cast<int>(c);
            counts.total += c;
        }
    }
    out.truth = {layout, theta, config.psi};
    return out;
}

}  // namespace coxforge
