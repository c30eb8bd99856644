#include "coxforge/design.hpp"

#include "coxforge/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

namespace coxforge {

InteractionIndex InteractionIndex::parse(const std::string& bits) {
    require(bits.size() == factors, ErrorKind::config, "interaction index '" + bits + "' must have six bits");
    std::uint8_t mask = 0;
    for (int j = 0; j < factors; ++j) {
        const char c = bits[static_cast<std::size_t>(j)];
        require(c == '0' || c == '1', ErrorKind::config, "interaction index '" + bits + "' must be a bitstring");
        if (c == '1') mask |= static_cast<std::uint8_t>(1U << j);
    }
    return InteractionIndex(mask);
}

std::string InteractionIndex::str() const {
    std::string s(factors, '0');
    for (int j = 0; j < factors; ++j)
        if (has(j)) s[static_cast<std::size_t>(j)] = '1';
    return s;
}

int InteractionIndex::order() const { return std::popcount(static_cast<unsigned>(mask_)); }

int InteractionIndex::contact_order() const { return std::popcount(static_cast<unsigned>(mask_ & 0x1F)); }

std::string to_string(ContactFormat f) {
    switch (f) {
        case ContactFormat::continuous: return "continuous";
        case ContactFormat::binary: return "binary";
        case ContactFormat::none: return "none";
    }
    return "none";
}

ContactFormat parse_contact_format(const std::string& s) {
    if (s == "continuous") return ContactFormat::continuous;
    if (s == "binary") return ContactFormat::binary;
    if (s == "none") return ContactFormat::none;
    fail(ErrorKind::config, "unknown contact format '" + s + "'");
}

void ModelSpec::validate() const {
    require(!fixed.empty(), ErrorKind::config, "model '" + name + "' has no fixed effects");
    require(std::find(fixed.begin(), fixed.end(), InteractionIndex{}) != fixed.end(), ErrorKind::config,
            "model '" + name + "' must include the zero index (overall intercept)");
    for (std::size_t k = 1; k < fixed.size(); ++k)
        require(fixed[k - 1] < fixed[k], ErrorKind::config, "fixed set of '" + name + "' is unsorted or repeated");
    for (std::size_t k = 1; k < sv.size(); ++k)
        require(sv[k - 1] < sv[k], ErrorKind::config, "spatially varying set of '" + name + "' is unsorted");
    for (auto i : sv) {
        require(std::find(fixed.begin(), fixed.end(), i) != fixed.end(), ErrorKind::config,
                "spatially varying index " + i.str() + " is not a fixed effect in '" + name + "'");
        require(!i.is_zero(), ErrorKind::config, "the zero index cannot vary spatially (use the smooth term)");
    }
    if (contact == ContactFormat::none) {
        for (auto i : fixed)
            require(i.contact_order() == 0, ErrorKind::config,
                    "model '" + name + "' uses contact covariates but has contact format 'none'");
    }
}

std::vector<std::size_t> ModelSpec::sv_columns() const {
    std::vector<std::size_t> cols;
    cols.reserve(sv.size());
    for (auto i : sv)
        cols.push_back(static_cast<std::size_t>(std::find(fixed.begin(), fixed.end(), i) - fixed.begin()));
    return cols;
}

std::vector<InteractionIndex> contact_interactions(bool with_gradient) {
    std::vector<InteractionIndex> out;
    const unsigned limit = with_gradient ? 64U : 32U;
    for (unsigned m = 0; m < limit; ++m) out.emplace_back(static_cast<std::uint8_t>(m));
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::vector<InteractionIndex> sorted(std::vector<InteractionIndex> v) {
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

std::vector<ModelSpec> builtin_specs() {
    const InteractionIndex zero{};
    const auto pi = InteractionIndex::parse("100000");
    const auto ig = InteractionIndex::parse("000001");
    const auto pi_ig = InteractionIndex::parse("100001");

    std::vector<ModelSpec> specs;
    specs.push_back({"uniform", {zero}, {}, false, false, ContactFormat::none});
    specs.push_back({"m_a", {zero}, {}, true, true, ContactFormat::none});
    specs.push_back({"m_b", contact_interactions(false), {}, true, true, ContactFormat::binary});

    std::vector<InteractionIndex> low_order;
    for (auto i : contact_interactions(false))
        if (i.contact_order() >= 1 && i.contact_order() <= 2) low_order.push_back(i);
    specs.push_back({"variant_a", contact_interactions(false), sorted(low_order), true, true, ContactFormat::continuous});
    specs.push_back({"variant_b", contact_interactions(true), {}, true, true, ContactFormat::continuous});
    specs.push_back({"variant_c", contact_interactions(true), {pi}, true, true, ContactFormat::continuous});
    specs.push_back({"variant_d", contact_interactions(true), sorted({pi, ig}), true, true, ContactFormat::continuous});
    specs.push_back({"final", contact_interactions(true), sorted({pi, ig, pi_ig}), true, true, ContactFormat::continuous});
    return specs;
}

ModelSpec builtin_spec(const std::string& name) {
    std::string key;
    for (char c : name) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) key.push_back(static_cast<char>(std::tolower(u)));
    }
    static const std::pair<const char*, const char*> aliases[] = {
        {"uniform", "uniform"},     {"ma", "m_a"},              {"mb", "m_b"},
        {"varianta", "variant_a"},  {"mvarianta", "variant_a"}, {"variantb", "variant_b"},
        {"mvariantb", "variant_b"}, {"variantc", "variant_c"},  {"mvariantc", "variant_c"},
        {"variantd", "variant_d"},  {"mvariantd", "variant_d"}, {"final", "final"},
        {"mfinal", "final"},        {"ourmethod", "final"},
    };
    for (const auto& [alias, canonical] : aliases) {
        if (key != alias) continue;
        for (auto& s : builtin_specs())
            if (s.name == canonical) return s;
    }
    fail(ErrorKind::config, "unknown model '" + name + "'");
}

const std::vector<double>& contact_for(const ShoeRecord& rec, ContactFormat format) {
    if (format == ContactFormat::binary) {
        require(rec.binary.grid.size() == rec.contact.grid.size(), ErrorKind::dimension,
                "shoe '" + rec.shoe_id + "' has no binarized contact surface");
        return rec.binary.grid;
    }
    return rec.contact.grid;
}

double covariate_value(const std::vector<double>& contact, const std::vector<double>& gradient, const GridSpec& grid,
                       std::size_t a, InteractionIndex i) {
    const int col = static_cast<int>(a % static_cast<std::size_t>(grid.nx));
    const int row = static_cast<int>(a / static_cast<std::size_t>(grid.nx));
    auto contact_at = [&](int c, int r) -> double {
        if (c < 0 || c >= grid.nx || r < 0 || r >= grid.ny) return 0.0;
        return contact[grid.index(c, r)];
    };
    double v = 1.0;
    if (i.has(0)) v *= contact_at(col, row);
    if (i.has(1)) v *= contact_at(col - 1, row);
    if (i.has(2)) v *= contact_at(col + 1, row);
    if (i.has(3)) v *= contact_at(col, row - 1);
    if (i.has(4)) v *= contact_at(col, row + 1);
    if (i.has(5)) v *= gradient[a];
    return v;
}

CovariateTensor build_tensor(const std::vector<ShoeRecord>& records, const GridSpec& grid, const ModelSpec& spec) {
    spec.validate();
    CovariateTensor t;
    t.shoes = records.size();
    t.cells = grid.cells();
    t.index_order = spec.fixed;
    const auto K = static_cast<Eigen::Index>(spec.fixed.size());
    t.values.resize(static_cast<Eigen::Index>(t.shoes * t.cells), K);
    for (std::size_t s = 0; s < records.size(); ++s) {
        const auto& rec = records[s];
        require(rec.contact.grid.size() == t.cells && rec.gradient.grid.size() == t.cells, ErrorKind::dimension,
                "shoe '" + rec.shoe_id + "' does not match the grid");
        const auto& contact = spec.contact == ContactFormat::none ? rec.contact.grid : contact_for(rec, spec.contact);
        for (std::size_t a = 0; a < t.cells; ++a) {
            for (Eigen::Index k = 0; k < K; ++k) {
                t.values(static_cast<Eigen::Index>(s * t.cells + a), k) =
                    covariate_value(contact, rec.gradient.grid, grid, a, spec.fixed[static_cast<std::size_t>(k)]);
            }
        }
    }
    return t;
}

CovariateTensor build_tensor(const Dataset& ds, const ModelSpec& spec) {
    ds.validate();
    return build_tensor(ds.shoes, ds.grid, spec);
}

}  // namespace coxforge
