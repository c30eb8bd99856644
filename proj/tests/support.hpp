#pragma once

#include "coxforge/dataset.hpp"
#include "coxforge/design.hpp"
#include "coxforge/grid.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

inline std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline Eigen::VectorXd uniform_vector(Eigen::Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    const auto v = uniform_values(static_cast<std::size_t>(n), seed, lo, hi);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("coxforge_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Central differences of a scalar function.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd p = x, m = x;
        p[i] += h;
        m[i] -= h;
        g[i] = (f(p) - f(m)) / (2.0 * h);
    }
    return g;
}

/// Shoe records with random contact/gradient surfaces on `grid`.
inline std::vector<coxforge::ShoeRecord> random_records(const coxforge::GridSpec& grid, std::size_t shoes,
                                                        std::uint64_t seed) {
    std::vector<coxforge::ShoeRecord> out(shoes);
    for (std::size_t s = 0; s < shoes; ++s) {
        auto& r = out[s];
        r.shoe_id = "shoe" + std::to_string(s);
        r.contact.shoe_id = r.shoe_id;
        r.contact.grid = uniform_values(grid.cells(), seed + 17 * s);
        r.gradient.grid = uniform_values(grid.cells(), seed + 17 * s + 5, 0.0, 2.0);
        r.binary.grid.resize(grid.cells());
        for (std::size_t a = 0; a < grid.cells(); ++a) r.binary.grid[a] = r.contact.grid[a] > 0.5 ? 1.0 : 0.0;
        r.binary.threshold = 0.5;
        r.counts.counts.assign(grid.cells(), 0);
    }
    return out;
}

}  // namespace testing_support
