#pragma once

#include "coxforge/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace coxforge {

/// Exponent pattern over the six covariate factors, in order: centre contact,
/// left, right, down, up neighbour contact, image gradient.
class InteractionIndex {
public:
    static constexpr int factors = 6;

    constexpr InteractionIndex() = default;
    constexpr explicit InteractionIndex(std::uint8_t mask) : mask_(mask & 0x3F) {}

    /// Parses a six-character bitstring such as "100001".
    static InteractionIndex parse(const std::string& bits);
    std::string str() const;

    constexpr bool has(int factor) const { return (mask_ >> factor) & 1U; }
    constexpr std::uint8_t mask() const { return mask_; }
    int order() const;
    /// Interaction order over the five contact factors only.
    int contact_order() const;
    constexpr bool is_zero() const { return mask_ == 0; }

    friend constexpr bool operator==(InteractionIndex a, InteractionIndex b) { return a.mask_ == b.mask_; }
    /// Orders by bitstring, so "000000" sorts first.
    friend bool operator<(InteractionIndex a, InteractionIndex b) { return a.str() < b.str(); }

private:
    std::uint8_t mask_ = 0;
};

enum class ContactFormat { continuous, binary, none };

std::string to_string(ContactFormat f);
ContactFormat parse_contact_format(const std::string& s);

/// Index sets selecting fixed (I) and spatially varying (I*) effects.
struct ModelSpec {
    std::string name;
    std::vector<InteractionIndex> fixed;  // I, sorted by bitstring
    std::vector<InteractionIndex> sv;     // I*, a subset of I, sorted
    bool smooth = true;                   // spatially smoothed intercept
    bool shoe_effect = true;              // per-shoe random intercept
    ContactFormat contact = ContactFormat::continuous;

    /// Throws a config error unless I* is a subset of I and the zero index is present.
    void validate() const;
    /// Position of each I* member inside I.
    std::vector<std::size_t> sv_columns() const;
};

std::vector<ModelSpec> builtin_specs();
/// Looks up a builtin by name; accepts "final", "M(Final)", "variant_a", "M(variant A)", "m_b", ...
ModelSpec builtin_spec(const std::string& name);

/// Every index in {0,1}^6 whose gradient bit is `gradient` or clear.
std::vector<InteractionIndex> contact_interactions(bool with_gradient);

/// x^i at cell a. Neighbours outside the lattice contribute a factor of 0.
double covariate_value(const std::vector<double>& contact, const std::vector<double>& gradient, const GridSpec& grid,
                       std::size_t a, InteractionIndex i);

/// Dense covariates for all shoes: row s * |A| + a, column k of `index_order`.
struct CovariateTensor {
    std::size_t shoes = 0;
    std::size_t cells = 0;
    std::vector<InteractionIndex> index_order;
    Eigen::MatrixXd values;

    double at(std::size_t s, std::size_t a, std::size_t k) const {
        return values(static_cast<Eigen::Index>(s * cells + a), static_cast<Eigen::Index>(k));
    }
};

/// Contact grid used for a record under the spec's contact format.
const std::vector<double>& contact_for(const ShoeRecord& rec, ContactFormat format);

CovariateTensor build_tensor(const std::vector<ShoeRecord>& records, const GridSpec& grid, const ModelSpec& spec);
CovariateTensor build_tensor(const Dataset& ds, const ModelSpec& spec);

}  // namespace coxforge
