#include "coxforge/error.hpp"
#include "coxforge/laplace.hpp"
#include "coxforge/simulate.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace coxforge;
namespace ts = testing_support;

namespace {

ModelSpec small_sv_spec() {
    ModelSpec s;
    s.name = "small";
    s.fixed = {InteractionIndex::parse("000000"), InteractionIndex::parse("000001"), InteractionIndex::parse("100000"),
               InteractionIndex::parse("100001")};
    s.sv = {InteractionIndex::parse("100000")};
    s.contact = ContactFormat::continuous;
    return s;
}

ModelData make_data(const ModelSpec& spec, int nx, int ny, std::size_t shoes, std::uint64_t seed, Family family,
                    double scale = 3.0, PriorSpec prior = {}) {
    const auto g = GridSpec::synthetic(nx, ny);
    const auto recs = ts::random_records(g, shoes, seed);
    const auto t = build_tensor(recs, g, spec);
    Eigen::VectorXd y(t.values.rows());
    const auto u = ts::uniform_values(static_cast<std::size_t>(y.size()), seed + 1, 0.0, scale);
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y[i] = family == Family::poisson ? std::floor(u[static_cast<std::size_t>(i)]) : u[static_cast<std::size_t>(i)];
    return make_model_data(g, t, y, spec, prior, family, 0.8);
}

// Linear map theta -> eta as a dense matrix.
Eigen::MatrixXd design_matrix(const ModelData& d) {
    const auto n = static_cast<Eigen::Index>(d.layout.total());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(d.observations()), n);
    for (Eigen::Index j = 0; j < n; ++j) x.col(j) = linear_predictor(Eigen::VectorXd::Unit(n, j), d);
    return x;
}

// Block-diagonal prior precision.
Eigen::MatrixXd prior_precision(const ModelData& d, const Hyperparams& psi) {
    const auto& L = d.layout;
    const auto n = static_cast<Eigen::Index>(L.total());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t s = 0; s < L.shoes; ++s) p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) = psi.tau_shoe;
    for (std::size_t k = 0; k < L.fixed; ++k) {
        const auto i = static_cast<Eigen::Index>(L.fixed_offset() + k);
        p(i, i) = 1.0 / d.prior.fixed_effect_variance;
    }
    const Eigen::MatrixXd q = d.q.q;
    const auto c = static_cast<Eigen::Index>(L.cells);
    for (std::size_t b = 0; b < L.spatial_blocks(); ++b) {
        const double tau = (L.smooth && b == 0) ? psi.tau_smooth : psi.tau_sv[b - (L.smooth ? 1 : 0)];
        const auto o = static_cast<Eigen::Index>(L.shoes + L.spatial_rest_offset(b));
        p.block(o, o, c, c) = tau * q;
    }
    return p;
}

// Orthonormal basis of the sum-to-zero subspace.
Eigen::MatrixXd null_basis(const ThetaLayout& L) {
    const Eigen::MatrixXd a = constraint_matrix(L);
    const auto n = static_cast<Eigen::Index>(L.total());
    if (a.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    Eigen::MatrixXd k = lu.kernel();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(k);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, k.cols());
}

double log_det_spd(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    EXPECT_EQ(llt.info(), Eigen::Success);
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(lo) * f(mid) <= 0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

Dataset small_sim(std::size_t shoes = 40, std::uint64_t seed = 3) {
    SimConfig c;
    c.nx = 5;
    c.ny = 6;
    c.n_shoes = shoes;
    c.seed = seed;
    c.intercept_offset = -1.5;
    return gen_dataset(c).dataset;
}

}  // namespace

TEST(HessianFactor, MatchesDense) {
    const auto d = make_data(builtin_spec("variant_d"), 3, 3, 4, 1, Family::poisson);
    Hyperparams psi{2.0, 3.0, {4.0, 5.0}};
    const auto theta = ts::uniform_vector(static_cast<Eigen::Index>(d.layout.total()), 2, -0.3, 0.3);
    const auto nh = grad_hessian(theta, psi, d).neg_hessian;
    const Eigen::MatrixXd h = nh.to_dense();
    const HessianFactor f(nh);
    EXPECT_NEAR(f.log_det(), log_det_spd(h), 1e-9);
    const auto v = ts::uniform_vector(h.rows(), 3);
    EXPECT_LE((h * f.solve(v) - v).norm(), 1e-9 * v.norm());
    const Eigen::MatrixXd hinv = h.inverse();
    EXPECT_LE((f.inverse_diagonal() - hinv.diagonal()).cwiseAbs().maxCoeff(), 1e-9 * hinv.diagonal().cwiseAbs().maxCoeff());
    const Eigen::MatrixXd m = Eigen::MatrixXd::Random(h.rows(), 3);
    EXPECT_LE((h * f.solve(m) - m).norm(), 1e-8);
}

TEST(HessianFactor, IndefiniteIsNumericError) {
    NegHessian h;
    h.shoe_diag = Eigen::VectorXd::Constant(1, 1.0);
    h.cross = Eigen::MatrixXd::Zero(2, 1);
    h.rest = (Eigen::MatrixXd(2, 2) << 1, 2, 2, 1).finished();
    try {
        HessianFactor f(h);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
}

TEST(ConstrainedLogDet, MatchesRestrictedDeterminant) {
    const auto d = make_data(small_sv_spec(), 3, 4, 3, 5, Family::poisson);
    Hyperparams psi{2.0, 3.0, {4.0}};
    const auto theta = ts::uniform_vector(static_cast<Eigen::Index>(d.layout.total()), 6, -0.3, 0.3);
    const auto nh = grad_hessian(theta, psi, d).neg_hessian;
    const Eigen::MatrixXd b = null_basis(d.layout);
    const Eigen::MatrixXd h = nh.to_dense();
    EXPECT_NEAR(constrained_log_det(HessianFactor(nh), d.layout), log_det_spd(b.transpose() * h * b), 1e-8);
    const Eigen::VectorXd sd = marginal_sds(psi, d, theta);
    const Eigen::MatrixXd cov = b * (b.transpose() * h * b).inverse() * b.transpose();
    EXPECT_LE((sd - cov.diagonal().cwiseSqrt()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FindMode, GaussianSurrogateEqualsGls) {
    const auto d = make_data(small_sv_spec(), 3, 3, 3, 7, Family::gaussian);
    Hyperparams psi{1.5, 2.0, {3.0}};
    const auto mode = find_mode(psi, d);
    ASSERT_TRUE(mode.converged);
    const Eigen::MatrixXd x = design_matrix(d), b = null_basis(d.layout), p = prior_precision(d, psi);
    const double s2 = d.gaussian_sd * d.gaussian_sd;
    const Eigen::MatrixXd prec = b.transpose() * (p + x.transpose() * x / s2) * b;
    const Eigen::VectorXd gls = b * prec.ldlt().solve(b.transpose() * x.transpose() * d.y / s2);
    EXPECT_LE((mode.theta_star - gls).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LogPsiPosterior, GaussianSurrogateIsExact) {
    for (const auto& spec : {small_sv_spec(), builtin_spec("m_a")}) {
        const auto d = make_data(spec, 3, 3, 3, 9, Family::gaussian);
        Hyperparams psi{1.5, 2.0, std::vector<double>(spec.sv.size(), 3.0)};
        const Eigen::MatrixXd x = design_matrix(d), b = null_basis(d.layout), p = prior_precision(d, psi);
        // y ~ N(0, X B (B'PB)^-1 B'X' + s^2 I), plus the hyperprior.
        const Eigen::MatrixXd xb = x * b;
        const Eigen::MatrixXd sigma = xb * (b.transpose() * p * b).inverse() * xb.transpose() +
                                      d.gaussian_sd * d.gaussian_sd * Eigen::MatrixXd::Identity(x.rows(), x.rows());
        const double n = static_cast<double>(x.rows());
        const double evidence = -0.5 * (n * std::log(2 * M_PI) + log_det_spd(sigma) + d.y.dot(sigma.ldlt().solve(d.y)));
        EXPECT_NEAR(log_psi_posterior(psi, d), evidence + log_hyperprior(psi, d), 1e-8) << spec.name;
    }
}

TEST(FindMode, ScalarToy) {
    const auto g = GridSpec::synthetic(1, 1);
    PriorSpec prior;
    prior.fixed_effect_variance = 1.0;
    const auto t = build_tensor(ts::random_records(g, 1, 1), g, builtin_spec("uniform"));
    const auto d = make_model_data(g, t, Eigen::VectorXd::Constant(1, 3.0), builtin_spec("uniform"), prior);
    const auto mode = find_mode({}, d);
    ASSERT_TRUE(mode.converged);
    const double root = bisect([](double th) { return 3.0 - std::exp(th) - th; }, -5.0, 5.0);
    EXPECT_NEAR(mode.theta_star[0], root, NewtonOptions{}.tol);
    EXPECT_NEAR(root, 0.792, 1e-3);
}

TEST(FindMode, ZeroCountsStrongPrior) {
    auto d = make_data(builtin_spec("m_a"), 3, 3, 2, 11, Family::poisson);
    d.y.setZero();
    d.log_y_factorial.setZero();
    const auto mode = find_mode({1e6, 1e6, {}}, d);
    ASSERT_TRUE(mode.converged);
    const auto& L = d.layout;
    EXPECT_LE(mode.theta_star.head(static_cast<Eigen::Index>(L.shoes)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE(mode.theta_star.segment(static_cast<Eigen::Index>(L.smooth_offset()), static_cast<Eigen::Index>(L.cells))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-6);
}

TEST(FindMode, SatisfiesConstraintsAndTolerance) {
    const auto d = make_data(builtin_spec("final"), 4, 4, 5, 13, Family::poisson);
    Hyperparams psi{2.0, 1.0, {5.0, 5.0, 5.0}};
    const auto mode = find_mode(psi, d);
    ASSERT_TRUE(mode.converged);
    EXPECT_LE(constraint_residuals(mode.theta_star, d.layout).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(projected_gradient_norm(log_joint_gradient(mode.theta_star, psi, d), d.layout), 1e-8);
    for (std::size_t i = 1; i < mode.trace.size(); ++i) EXPECT_GE(mode.trace[i], mode.trace[i - 1]);
    // Warm start from the mode converges immediately.
    const auto again = find_mode(psi, d, {}, mode.theta_star);
    EXPECT_LE(again.iterations, 1);
}

TEST(FindMode, NonConvergenceIsReported) {
    const auto d = make_data(builtin_spec("final"), 3, 3, 3, 15, Family::poisson);
    NewtonOptions o;
    o.max_iter = 1;
    const auto mode = find_mode({1.0, 1.0, {1.0, 1.0, 1.0}}, d, o);
    EXPECT_FALSE(mode.converged);
    try {
        log_psi_posterior({1.0, 1.0, {1.0, 1.0, 1.0}}, d, mode);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
}

TEST(LogPsiPosterior, CellPermutationInvariant) {
    const auto spec = builtin_spec("m_a");
    const auto d = make_data(spec, 3, 4, 3, 17, Family::poisson);
    Hyperparams psi{2.0, 3.0, {}};
    const double base = log_psi_posterior(psi, d);

    const auto cells = static_cast<Eigen::Index>(d.cells());
    Eigen::VectorXi perm(cells);
    for (Eigen::Index a = 0; a < cells; ++a) perm[a] = static_cast<int>((5 * a + 2) % cells);
    const Eigen::PermutationMatrix<Eigen::Dynamic> pm(perm);
    ModelData p = d;
    for (std::size_t s = 0; s < d.n_shoes; ++s) {
        const auto o = static_cast<Eigen::Index>(s) * cells;
        p.y.segment(o, cells) = pm * d.y.segment(o, cells);
        p.log_y_factorial.segment(o, cells) = pm * d.log_y_factorial.segment(o, cells);
        p.x.middleRows(o, cells) = pm * d.x.middleRows(o, cells);
    }
    p.q.q = d.q.q.twistedBy(pm);
    EXPECT_NEAR(log_psi_posterior(psi, p), base, 1e-9);
}

TEST(LogPsiPosterior, OneDimPoissonMatchesQuadrature) {
    const auto g = GridSpec::synthetic(1, 1);
    for (double var : {0.5, 1.0, 4.0}) {
        for (int cells : {1, 3}) {
            for (double y : {5.0, 8.0, 20.0}) {
                PriorSpec prior;
                prior.fixed_effect_variance = var;
                const auto spec = builtin_spec("uniform");
                const auto gc = GridSpec::synthetic(cells, 1);
                const auto t = build_tensor(ts::random_records(gc, 1, 1), gc, spec);
                Eigen::VectorXd yv = Eigen::VectorXd::Constant(cells, y);
                yv[0] += 1.0;
                const auto d = make_model_data(gc, t, yv, spec, prior);
                const double laplace = log_psi_posterior({}, d);
                const auto mode = find_mode({}, d);
                const double peak = mode.log_joint;
                auto integrand = [&](double th) {
                    return std::exp(log_joint(Eigen::VectorXd::Constant(1, th), {}, d) - peak);
                };
                const double c = mode.theta_star[0];
                const double w = 30.0 / std::sqrt(1.0 / var + yv.sum());
                const double area =
                    boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, c - w, c + w, 15, 1e-13);
                const double exact = peak + std::log(area);
                EXPECT_NEAR(laplace, exact, 2e-2) << "var " << var << " y " << y << " cells " << cells;
            }
        }
    }
    (void)g;
}

TEST(Fit, UniformInterceptMatchesMle) {
    const auto ds = small_sim();
    const auto r = fit(ds, builtin_spec("uniform"));
    ASSERT_TRUE(r.diagnostics.converged);
    ASSERT_EQ(r.mean.size(), 1);
    const double mle = std::log(static_cast<double>(ds.total_accidentals()) /
                                static_cast<double>(ds.shoes.size() * ds.grid.cells()));
    EXPECT_NEAR(r.mean[0], mle, 2.0 * r.sd[0]);
    EXPECT_GT(r.sd[0], 0.0);
    EXPECT_TRUE(r.slots.empty());
}

TEST(Fit, EmpiricalBayesDiagnostics) {
    const auto ds = small_sim();
    const auto r = fit(ds, builtin_spec("m_a"));
    EXPECT_TRUE(r.diagnostics.converged);
    EXPECT_EQ(r.slots.size(), 2u);
    EXPECT_EQ(r.psi_grid.size(), 1u);
    EXPECT_EQ(r.diagnostics.latent_dim, r.layout.total());
    EXPECT_GT(r.diagnostics.psi_evaluations, 4);
    EXPECT_TRUE((r.sd.array() >= 0.0).all());
    const auto sm = r.mean.segment(static_cast<Eigen::Index>(r.layout.smooth_offset()), static_cast<Eigen::Index>(r.layout.cells));
    EXPECT_LE(std::abs(sm.sum()), 1e-6);
    for (double v : r.log_psi_map) {
        EXPECT_GE(v, -12.0);
        EXPECT_LE(v, 12.0);
    }
    // The selected point is a local maximum along each axis at the final step size.
    const auto data = make_model_data(ds, builtin_spec("m_a"));
    for (std::size_t k = 0; k < 2; ++k)
        for (double dir : {-std::ldexp(1.0, -9), std::ldexp(1.0, -9)}) {
            auto x = r.log_psi_map;
            x[k] += dir;
            const auto psi = hyperparams_from_log(x, r.slots, data.spec, data.prior);
            EXPECT_LE(log_psi_posterior(psi, data), r.diagnostics.log_psi_map + 1e-7);
        }
}

TEST(Fit, GridWeightsAndThreadStability) {
    const auto ds = small_sim(30, 5);
    GridConfig c;
    c.points_per_dim = 3;
    c.threads = 1;
    const auto one = fit(ds, builtin_spec("m_a"), {}, Strategy::grid, c, 1);
    c.threads = 4;
    const auto four = fit(ds, builtin_spec("m_a"), {}, Strategy::grid, c, 1);
    ASSERT_EQ(one.psi_grid.size(), 9u);
    double total = 0.0;
    for (const auto& p : one.psi_grid) total += p.weight;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_LE((one.mean - four.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((one.sd - four.sd).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Fit, DeterministicRepeat) {
    const auto ds = small_sim(30, 6);
    const auto a = fit(ds, builtin_spec("variant_c"), {}, Strategy::empirical_bayes, {}, 42);
    const auto b = fit(ds, builtin_spec("variant_c"), {}, Strategy::empirical_bayes, {}, 42);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.sd, b.sd);
    EXPECT_EQ(a.log_psi_map, b.log_psi_map);
    EXPECT_EQ(a.diagnostics.psi_evaluations, b.diagnostics.psi_evaluations);
}

TEST(Fit, AllZeroDataIsDegenerate) {
    auto ds = small_sim(5, 7);
    for (auto& s : ds.shoes) {
        std::fill(s.counts.counts.begin(), s.counts.counts.end(), 0);
        s.counts.total = 0;
    }
    try {
        fit(ds, builtin_spec("m_a"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate);
    }
}

TEST(Strategy, Names) {
    EXPECT_EQ(parse_strategy("eb"), Strategy::empirical_bayes);
    EXPECT_EQ(parse_strategy("grid"), Strategy::grid);
    EXPECT_EQ(to_string(Strategy::empirical_bayes), "empirical_bayes");
    EXPECT_THROW(parse_strategy("mcmc"), Error);
}
