#include "coxforge/design.hpp"
#include "coxforge/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace coxforge;
namespace ts = testing_support;

namespace {

std::size_t count_with(const std::vector<InteractionIndex>& v, int contact_order_lo, int contact_order_hi) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](InteractionIndex i) {
        return i.contact_order() >= contact_order_lo && i.contact_order() <= contact_order_hi;
    }));
}

}  // namespace

TEST(InteractionIndex, ParseAndPrint) {
    const auto i = InteractionIndex::parse("101001");
    EXPECT_TRUE(i.has(0));
    EXPECT_FALSE(i.has(1));
    EXPECT_TRUE(i.has(2));
    EXPECT_TRUE(i.has(5));
    EXPECT_EQ(i.order(), 3);
    EXPECT_EQ(i.contact_order(), 2);
    EXPECT_EQ(i.str(), "101001");
    EXPECT_THROW(InteractionIndex::parse("10100"), Error);
    EXPECT_THROW(InteractionIndex::parse("10100x"), Error);
    EXPECT_LT(InteractionIndex{}, i);
}

TEST(BuiltinSpecs, Counts) {
    auto spec = builtin_spec("M(Final)");
    EXPECT_EQ(spec.fixed.size(), 64u);
    EXPECT_EQ(spec.sv.size(), 3u);
    std::set<std::string> sv;
    for (auto i : spec.sv) sv.insert(i.str());
    EXPECT_EQ(sv, (std::set<std::string>{"100000", "000001", "100001"}));

    spec = builtin_spec("m_b");
    EXPECT_EQ(spec.fixed.size(), 32u);
    EXPECT_EQ(spec.sv.size(), 0u);
    EXPECT_EQ(spec.contact, ContactFormat::binary);
    for (auto i : spec.fixed) EXPECT_FALSE(i.has(5));

    spec = builtin_spec("M(variant A)");
    EXPECT_EQ(spec.sv.size(), 15u);
    EXPECT_EQ(count_with(spec.sv, 1, 1), 5u);
    EXPECT_EQ(count_with(spec.sv, 2, 2), 10u);

    for (const char* n : {"uniform", "M(a)"}) {
        spec = builtin_spec(n);
        EXPECT_EQ(spec.fixed.size(), 1u) << n;
        EXPECT_TRUE(spec.fixed[0].is_zero());
        EXPECT_TRUE(spec.sv.empty());
    }
    EXPECT_FALSE(builtin_spec("uniform").smooth);
    EXPECT_FALSE(builtin_spec("uniform").shoe_effect);
    EXPECT_TRUE(builtin_spec("m_a").smooth);
    EXPECT_EQ(builtin_spec("variant_b").fixed.size(), 64u);
    EXPECT_EQ(builtin_spec("variant_c").sv.size(), 1u);
    EXPECT_EQ(builtin_spec("variant_d").sv.size(), 2u);
    EXPECT_THROW(builtin_spec("m_z"), Error);
}

TEST(BuiltinSpecs, AllValid) {
    for (const auto& s : builtin_specs()) {
        EXPECT_NO_THROW(s.validate()) << s.name;
        EXPECT_TRUE(std::is_sorted(s.fixed.begin(), s.fixed.end()));
        for (auto i : s.sv) EXPECT_NE(std::find(s.fixed.begin(), s.fixed.end(), i), s.fixed.end());
    }
}

TEST(ModelSpec, ValidationErrors) {
    auto s = builtin_spec("final");
    s.sv.push_back(InteractionIndex::parse("111111"));
    s.fixed.pop_back();  // drops 111111 from I
    EXPECT_THROW(s.validate(), Error);

    auto t = builtin_spec("m_b");
    t.fixed.erase(t.fixed.begin());  // no intercept
    EXPECT_THROW(t.validate(), Error);

    auto u = builtin_spec("m_a");
    u.sv = {InteractionIndex{}};
    EXPECT_THROW(u.validate(), Error);
}

TEST(CovariateValue, Examples) {
    const auto g = GridSpec::synthetic(3, 3);
    std::vector<double> contact(9, 0.9), grad(9, 0.0);
    const std::size_t a = g.index(1, 1);
    contact[a] = 0.5;
    contact[g.index(2, 1)] = 0.2;
    grad[a] = 2.0;
    EXPECT_DOUBLE_EQ(covariate_value(contact, grad, g, a, InteractionIndex::parse("101001")), 0.2);
    for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(covariate_value(contact, grad, g, c, InteractionIndex{}), 1.0);
    // Left neighbour missing at column 0.
    EXPECT_EQ(covariate_value(contact, grad, g, g.index(0, 1), InteractionIndex::parse("010000")), 0.0);
    EXPECT_EQ(covariate_value(contact, grad, g, g.index(2, 1), InteractionIndex::parse("001000")), 0.0);
    EXPECT_EQ(covariate_value(contact, grad, g, g.index(1, 0), InteractionIndex::parse("000100")), 0.0);
    EXPECT_EQ(covariate_value(contact, grad, g, g.index(1, 2), InteractionIndex::parse("000010")), 0.0);
}

TEST(BuildTensor, UniformIsOnes) {
    const auto g = GridSpec::synthetic(2, 2);
    const auto recs = ts::random_records(g, 1, 3);
    const auto t = build_tensor(recs, g, builtin_spec("uniform"));
    ASSERT_EQ(t.values.cols(), 1);
    ASSERT_EQ(t.values.rows(), 4);
    EXPECT_TRUE((t.values.array() == 1.0).all());
}

TEST(BuildTensor, BinaryEntriesAreBits) {
    const auto g = GridSpec::synthetic(5, 4);
    const auto recs = ts::random_records(g, 3, 4);
    const auto t = build_tensor(recs, g, builtin_spec("m_b"));
    EXPECT_EQ(t.values.cols(), 32);
    EXPECT_TRUE((t.values.array() == 0.0 || t.values.array() == 1.0).all());
}

// Per-entry recomputation on an explicitly zero-padded (nx+2) x (ny+2) array.
TEST(BuildTensor, MatchesPaddedGridOracle) {
    const auto g = GridSpec::synthetic(4, 4);
    const auto recs = ts::random_records(g, 2, 5);
    const auto spec = builtin_spec("final");
    const auto t = build_tensor(recs, g, spec);
    ASSERT_EQ(t.values.rows(), 32);
    ASSERT_EQ(t.values.cols(), 64);
    for (std::size_t s = 0; s < recs.size(); ++s) {
        std::vector<std::vector<double>> pad(6, std::vector<double>(6, 0.0));
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) pad[r + 1][c + 1] = recs[s].contact.grid[g.index(c, r)];
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                const double factor[6] = {pad[r + 1][c + 1], pad[r + 1][c],     pad[r + 1][c + 2],
                                          pad[r][c + 1],     pad[r + 2][c + 1], recs[s].gradient.grid[g.index(c, r)]};
                for (std::size_t k = 0; k < spec.fixed.size(); ++k) {
                    const std::string bits = spec.fixed[k].str();
                    double v = 1.0;
                    for (int f = 0; f < 6; ++f)
                        if (bits[static_cast<std::size_t>(f)] == '1') v *= factor[f];
                    EXPECT_NEAR(t.at(s, g.index(c, r), k), v, 1e-15);
                }
            }
    }
}

TEST(BuildTensor, MismatchedRecordIsDimensionError) {
    const auto g = GridSpec::synthetic(3, 3);
    auto recs = ts::random_records(g, 2, 6);
    recs[1].contact.grid.pop_back();
    try {
        build_tensor(recs, g, builtin_spec("final"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension);
    }
}
