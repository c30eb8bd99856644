#pragma once

#include "coxforge/dataset.hpp"
#include "coxforge/design.hpp"
#include "coxforge/lgm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coxforge {

enum class ContactGenerator { blobs, stripes, uniform_noise };

std::string to_string(ContactGenerator g);
ContactGenerator parse_contact_generator(const std::string& s);

/// Generative settings for a synthetic shoe database.
struct SimConfig {
    int nx = 12;
    int ny = 16;
    std::size_t n_shoes = 200;
    ModelSpec spec = builtin_spec("final");
    Hyperparams psi{4.0, 1.0, {10.0, 10.0, 10.0}};
    std::uint64_t seed = 7;
    ContactGenerator generator = ContactGenerator::blobs;
    /// Intercept (zero index) of the true fixed effects.
    double intercept_offset = -3.7;
    /// Added to the centre-contact main effect.
    double contact_effect = 1.5;
    double main_effect_sd = 0.3;
    double interaction_sd = 0.05;
    /// Explicit fixed effects aligned with spec.fixed; overrides the draws above.
    std::optional<std::vector<double>> fixed_effects;

    GridSpec grid() const { return GridSpec::synthetic(nx, ny); }
    /// Throws a config error on non-positive sizes or a psi that does not match the spec.
    void validate() const;
};

struct SimTruth {
    ThetaLayout layout;
    Eigen::VectorXd theta;
    Hyperparams psi;
};

struct SimResult {
    Dataset dataset;
    SimTruth truth;
};

/// Contact surface and its Sobel gradient for shoe `shoe_index`.
std::pair<ContactSurface, GradientField> gen_contact(const SimConfig& config, std::size_t shoe_index);

/// Draws theta from the prior at psi and counts from Poisson(exp(eta)).
SimResult gen_dataset(const SimConfig& config);

}  // namespace coxforge
