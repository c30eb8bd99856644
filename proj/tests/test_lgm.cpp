#include "coxforge/error.hpp"
#include "coxforge/lgm.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace coxforge;
namespace ts = testing_support;

namespace {

ModelData toy(const ModelSpec& spec, int nx, int ny, std::size_t shoes, std::uint64_t seed,
              Family family = Family::poisson) {
    const auto g = GridSpec::synthetic(nx, ny);
    const auto recs = ts::random_records(g, shoes, seed);
    const auto t = build_tensor(recs, g, spec);
    Eigen::VectorXd y(t.values.rows());
    const auto u = ts::uniform_values(static_cast<std::size_t>(y.size()), seed + 99, 0.0, 4.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = std::floor(u[static_cast<std::size_t>(i)]);
    return make_model_data(g, t, y, spec, {}, family, 0.7);
}

Hyperparams psi_for(const ModelData& d) {
    Hyperparams p{2.5, 1.7, {}};
    for (std::size_t j = 0; j < d.spec.sv.size(); ++j) p.tau_sv.push_back(3.0 + j);
    return p;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST(ThetaLayout, Blocks) {
    const auto L = ThetaLayout::for_spec(builtin_spec("final"), 200, 192);
    EXPECT_EQ(L.shoe_offset(), 0u);
    EXPECT_EQ(L.fixed_offset(), 200u);
    EXPECT_EQ(L.smooth_offset(), 264u);
    EXPECT_EQ(L.sv_offset(0), 264u + 192u);
    EXPECT_EQ(L.sv_offset(2), 264u + 3 * 192u);
    EXPECT_EQ(L.total(), 200u + 64u + 4 * 192u);
    EXPECT_EQ(L.constrained_dim(), L.total() - 4);

    const auto U = ThetaLayout::for_spec(builtin_spec("uniform"), 50, 3549);
    EXPECT_EQ(U.total(), 1u);
    EXPECT_EQ(U.spatial_blocks(), 0u);

    const auto P = ThetaLayout::for_spec(builtin_spec("final"), 1300, 3549);
    EXPECT_EQ(P.total(), 15560u);
}

TEST(Hyperparameters, FreeSlots) {
    const PriorSpec prior;
    EXPECT_EQ(free_hyperparameters(builtin_spec("final"), prior).size(), 5u);
    EXPECT_EQ(free_hyperparameters(builtin_spec("uniform"), prior).size(), 0u);
    EXPECT_EQ(free_hyperparameters(builtin_spec("m_a"), prior).size(), 2u);
    const auto va = builtin_spec("variant_a");
    // 15 sv indices: the 5 main effects stay free, the 10 pairs are held at the fixed precision.
    EXPECT_EQ(free_hyperparameters(va, prior).size(), 2u + 5u);
    const auto psi = hyperparams_from_log(std::vector<double>(7, 0.0), free_hyperparameters(va, prior), va, prior);
    int fixed = 0;
    for (std::size_t j = 0; j < va.sv.size(); ++j)
        if (sv_precision_fixed(va, prior, j)) {
            ++fixed;
            EXPECT_EQ(psi.tau_sv[j], 100.0);
        }
    EXPECT_EQ(fixed, 10);

    const auto slots = free_hyperparameters(builtin_spec("final"), prior);
    const std::vector<double> logs{0.1, -0.2, 0.3, 1.0, 2.0};
    const auto round = hyperparams_to_log(hyperparams_from_log(logs, slots, builtin_spec("final"), prior), slots);
    for (std::size_t k = 0; k < logs.size(); ++k) EXPECT_NEAR(round[k], logs[k], 1e-15);
}

TEST(LinearPredictor, ZeroAndShoeIntercept) {
    const auto d = toy(builtin_spec("final"), 3, 3, 2, 1);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.layout.total()));
    EXPECT_EQ(linear_predictor(theta, d).cwiseAbs().maxCoeff(), 0.0);
    theta[1] = 0.8;  // shoe 1
    const auto eta = linear_predictor(theta, d);
    for (std::size_t a = 0; a < 9; ++a) {
        EXPECT_EQ(eta[static_cast<Eigen::Index>(a)], 0.0);
        EXPECT_EQ(eta[static_cast<Eigen::Index>(9 + a)], 0.8);
    }
}

TEST(LinearPredictor, MatchesDefinitionalLoop) {
    const auto d = toy(builtin_spec("final"), 4, 3, 3, 2);
    const auto& L = d.layout;
    const auto theta = ts::uniform_vector(static_cast<Eigen::Index>(L.total()), 3);
    const auto eta = linear_predictor(theta, d);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < L.cells; ++a) {
            const auto row = static_cast<Eigen::Index>(s * L.cells + a);
            double v = theta[static_cast<Eigen::Index>(s)] + theta[static_cast<Eigen::Index>(L.smooth_offset() + a)];
            for (std::size_t k = 0; k < L.fixed; ++k)
                v += d.x(row, static_cast<Eigen::Index>(k)) * theta[static_cast<Eigen::Index>(L.fixed_offset() + k)];
            for (std::size_t j = 0; j < L.sv; ++j)
                v += d.x(row, static_cast<Eigen::Index>(d.sv_columns[j])) *
                     theta[static_cast<Eigen::Index>(L.sv_offset(j) + a)];
            EXPECT_NEAR(eta[row], v, 1e-12);
        }
    EXPECT_THROW(linear_predictor(Eigen::VectorXd::Zero(3), d), Error);
}

TEST(Likelihood, Examples) {
    auto d = toy(builtin_spec("m_a"), 3, 2, 2, 4);
    d.y.setZero();
    d.log_y_factorial.setZero();
    EXPECT_DOUBLE_EQ(log_likelihood(Eigen::VectorXd::Zero(12), d), -12.0);

    const auto g = GridSpec::synthetic(1, 1);
    const auto recs = ts::random_records(g, 1, 1);
    const auto t = build_tensor(recs, g, builtin_spec("uniform"));
    const auto one = make_model_data(g, t, Eigen::VectorXd::Constant(1, 3.0), builtin_spec("uniform"));
    EXPECT_NEAR(log_likelihood(Eigen::VectorXd::Constant(1, std::log(2.0)), one),
                3.0 * std::log(2.0) - 2.0 - std::log(6.0), 1e-14);
}

TEST(Likelihood, InvalidInputs) {
    const auto g = GridSpec::synthetic(1, 1);
    const auto t = build_tensor(ts::random_records(g, 1, 1), g, builtin_spec("uniform"));
    EXPECT_THROW(make_model_data(g, t, Eigen::VectorXd::Constant(1, 1.5), builtin_spec("uniform")), Error);
    EXPECT_THROW(make_model_data(g, t, Eigen::VectorXd::Constant(1, -1.0), builtin_spec("uniform")), Error);
    const auto d = make_model_data(g, t, Eigen::VectorXd::Constant(1, 1.0), builtin_spec("uniform"));
    Eigen::VectorXd bad = Eigen::VectorXd::Constant(1, std::nan(""));
    try {
        log_joint(bad, {}, d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
    Hyperparams negative{-1.0, 1.0, {}};
    auto ma = toy(builtin_spec("m_a"), 2, 2, 1, 3);
    EXPECT_THROW(log_prior(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ma.layout.total())), negative, ma), Error);
}

TEST(Gradient, ZeroThetaZeroCounts) {
    auto d = toy(builtin_spec("final"), 3, 3, 2, 5);
    d.y.setZero();
    d.log_y_factorial.setZero();
    const auto& L = d.layout;
    const auto g = log_joint_gradient(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.total())), psi_for(d), d);
    for (std::size_t k = 0; k < L.fixed; ++k)
        EXPECT_NEAR(g[static_cast<Eigen::Index>(L.fixed_offset() + k)], -d.x.col(static_cast<Eigen::Index>(k)).sum(), 1e-12);
    for (std::size_t s = 0; s < L.shoes; ++s) EXPECT_NEAR(g[static_cast<Eigen::Index>(s)], -9.0, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
    for (const char* name : {"final", "m_a", "m_b", "uniform", "variant_a"}) {
        for (auto family : {Family::poisson, Family::gaussian}) {
            const auto d = toy(builtin_spec(name), 3, 4, 3, 7);
            const auto dd = family == Family::poisson ? d : toy(builtin_spec(name), 3, 4, 3, 7, family);
            const auto psi = psi_for(dd);
            const auto theta = ts::uniform_vector(static_cast<Eigen::Index>(dd.layout.total()), 8, -0.3, 0.3);
            const auto g = log_joint_gradient(theta, psi, dd);
            const auto fd = ts::numeric_gradient([&](const Eigen::VectorXd& t) { return log_joint(t, psi, dd); }, theta);
            EXPECT_LE(rel_err(g, fd), 1e-6) << name;
            const auto gh = grad_hessian(theta, psi, dd);
            EXPECT_LE((gh.gradient - g).cwiseAbs().maxCoeff(), 1e-12) << name;
        }
    }
}

TEST(Hessian, TwoCellOneShoe) {
    const auto d = toy(builtin_spec("final"), 2, 1, 1, 9);
    const auto psi = psi_for(d);
    const auto theta = ts::uniform_vector(static_cast<Eigen::Index>(d.layout.total()), 10, -0.5, 0.5);
    const Eigen::MatrixXd h = grad_hessian(theta, psi, d).neg_hessian.to_dense();
    const auto n = theta.size();
    Eigen::MatrixXd fd(n, n);
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd p = theta, m = theta;
        p[i] += step;
        m[i] -= step;
        fd.col(i) = -(log_joint_gradient(p, psi, d) - log_joint_gradient(m, psi, d)) / (2 * step);
    }
    EXPECT_LE(rel_err(h, fd), 1e-5);
    EXPECT_TRUE(h.isApprox(h.transpose(), 1e-14));
}

TEST(Hessian, ArrowStructureMatchesDenseOnRandomToys) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto d = toy(builtin_spec("variant_d"), 3, 3, 4, 20 + seed);
        const auto psi = psi_for(d);
        const auto theta = ts::uniform_vector(static_cast<Eigen::Index>(d.layout.total()), 30 + seed, -0.4, 0.4);
        const auto gh = grad_hessian(theta, psi, d);
        const Eigen::MatrixXd h = gh.neg_hessian.to_dense();
        // Shoe block is diagonal.
        const auto S = static_cast<Eigen::Index>(d.layout.shoes);
        Eigen::MatrixXd shoe = h.topLeftCorner(S, S);
        shoe.diagonal().setZero();
        EXPECT_EQ(shoe.cwiseAbs().maxCoeff(), 0.0);
        const auto n = theta.size();
        Eigen::MatrixXd fd(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd p = theta, m = theta;
            p[i] += 1e-5;
            m[i] -= 1e-5;
            fd.col(i) = -(log_joint_gradient(p, psi, d) - log_joint_gradient(m, psi, d)) / 2e-5;
        }
        EXPECT_LE(rel_err(h, fd), 1e-5);
    }
}

TEST(Prior, NormalizingConstants) {
    // 1x2 lattice smooth block: density over the constrained line x = (t, -t).
    const auto g = GridSpec::synthetic(2, 1);
    ModelSpec spec{"s", {InteractionIndex{}}, {}, true, false, ContactFormat::none};
    const auto t = build_tensor(ts::random_records(g, 1, 1), g, spec);
    const auto d = make_model_data(g, t, Eigen::VectorXd::Zero(2), spec);
    Hyperparams psi{1.0, 2.0, {}};
    Eigen::VectorXd theta(3);
    theta << 0.4, 0.3, -0.3;
    // fixed: N(0.4; 0, 1000); smooth: tau/2 * rank-1 Gaussian with |Q|_* = 2, v'Qv = (0.6)^2.
    const double fixed = -0.5 * std::log(2 * M_PI * 1000.0) - 0.5 * 0.16 / 1000.0;
    const double smooth = 0.5 * (std::log(2.0) + std::log(2.0) - std::log(2 * M_PI)) - 0.5 * 2.0 * 0.36;
    EXPECT_NEAR(log_prior(theta, psi, d), fixed + smooth, 1e-13);
    EXPECT_NEAR(log_hyperprior(psi, d), std::log(5e-4) + std::log(2.0) - 5e-4 * 2.0, 1e-15);
}

TEST(Constraints, ResidualsAndProjection) {
    const auto d = toy(builtin_spec("final"), 3, 3, 2, 11);
    auto v = ts::uniform_vector(static_cast<Eigen::Index>(d.layout.total()), 12);
    const Eigen::VectorXd before = v;
    project_constraints(v, d.layout);
    EXPECT_LE(constraint_residuals(v, d.layout).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(constraint_residuals(v, d.layout).size(), 4);
    EXPECT_EQ(v.head(static_cast<Eigen::Index>(d.layout.smooth_offset())),
              before.head(static_cast<Eigen::Index>(d.layout.smooth_offset())));
}
