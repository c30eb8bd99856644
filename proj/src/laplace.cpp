#include "coxforge/laplace.hpp"

#include "coxforge/error.hpp"
#include "coxforge/log.hpp"
#include "coxforge/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace coxforge {

namespace {

constexpr double log_two_pi = 1.8378770664093454835606594728112;
constexpr double neg_inf = -std::numeric_limits<double>::infinity();

using Index = Eigen::Index;

}  // namespace

HessianFactor::HessianFactor(const NegHessian& h)
    : shoes_(h.shoe_diag.size()), rest_(h.rest.rows()), cross_(h.cross) {
    require((h.shoe_diag.array() > 0.0).all(), ErrorKind::numeric, "negative Hessian has a non-positive shoe block");
    d_inv_ = h.shoe_diag.cwiseInverse();
    Eigen::MatrixXd schur = h.rest;
    if (shoes_ > 0) schur.noalias() -= (cross_ * d_inv_.asDiagonal()) * cross_.transpose();
    schur_.compute(schur);
    require(schur_.info() == Eigen::Success, ErrorKind::numeric, "negative Hessian is not positive definite");
    log_det_ = d_inv_.array().log().sum() * -1.0;
    const auto& l = schur_.matrixLLT();
    for (Index i = 0; i < rest_; ++i) log_det_ += 2.0 * std::log(l(i, i));
    require(std::isfinite(log_det_), ErrorKind::numeric, "negative Hessian determinant is not finite");
}

Eigen::MatrixXd HessianFactor::solve(const Eigen::MatrixXd& v) const {
    require(v.rows() == dim(), ErrorKind::dimension, "right-hand side does not match the Hessian");
    Eigen::MatrixXd out(v.rows(), v.cols());
    const auto vs = v.topRows(shoes_);
    const auto vr = v.bottomRows(rest_);
    Eigen::MatrixXd scaled = d_inv_.asDiagonal() * vs;
    Eigen::MatrixXd xr = schur_.solve(vr - cross_ * scaled);
    out.topRows(shoes_) = d_inv_.asDiagonal() * (vs - cross_.transpose() * xr);
    out.bottomRows(rest_) = xr;
    return out;
}

Eigen::VectorXd HessianFactor::solve(const Eigen::VectorXd& v) const {
    return solve(Eigen::MatrixXd(v)).col(0);
}

Eigen::VectorXd HessianFactor::inverse_diagonal() const {
    Eigen::VectorXd out(dim());
    const auto l = schur_.matrixL();
    Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(rest_, rest_);
    l.solveInPlace(linv);
    out.tail(rest_) = linv.colwise().squaredNorm().transpose();
    if (shoes_ > 0) {
        Eigen::MatrixXd m = cross_;
        l.solveInPlace(m);
        out.head(shoes_) = d_inv_ + (m.colwise().squaredNorm().transpose().array() * d_inv_.array().square()).matrix();
    }
    return out;
}

Eigen::MatrixXd constraint_matrix(const ThetaLayout& layout) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Index>(layout.spatial_blocks()), static_cast<Index>(layout.total()));
    for (std::size_t p = 0; p < layout.spatial_blocks(); ++p)
        a.row(static_cast<Index>(p))
            .segment(static_cast<Index>(layout.shoes + layout.spatial_rest_offset(p)), static_cast<Index>(layout.cells))
            .setOnes();
    return a;
}

double projected_gradient_norm(const Eigen::VectorXd& gradient, const ThetaLayout& layout) {
    Eigen::VectorXd g = gradient;
    project_constraints(g, layout);
    return g.norm();
}

double constrained_log_det(const HessianFactor& factor, const ThetaLayout& layout) {
    const std::size_t c = layout.spatial_blocks();
    if (c == 0) return factor.log_det();
    const Eigen::MatrixXd a = constraint_matrix(layout);
    const Eigen::MatrixXd az = a * factor.solve(Eigen::MatrixXd(a.transpose()));
    Eigen::LLT<Eigen::MatrixXd> llt(az);
    require(llt.info() == Eigen::Success, ErrorKind::numeric, "constraint Gram matrix is not positive definite");
    double ld = 0.0;
    for (Index i = 0; i < az.rows(); ++i) ld += 2.0 * std::log(llt.matrixLLT()(i, i));
    return factor.log_det() + ld - static_cast<double>(c) * std::log(static_cast<double>(layout.cells));
}

namespace {

Eigen::VectorXd constrained_direction(const HessianFactor& factor, const Eigen::MatrixXd& a,
                                      const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient) {
    Eigen::VectorXd delta = factor.solve(gradient);
    if (a.rows() == 0) return delta;
    // Kriging correction onto {A(theta + delta) = 0}.
    const Eigen::MatrixXd z = factor.solve(Eigen::MatrixXd(a.transpose()));
    const Eigen::MatrixXd az = a * z;
    delta -= z * az.llt().solve(a * (theta + delta));
    return delta;
}

double safe_log_joint(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data) {
    if (!theta.allFinite()) return neg_inf;
    const double v = log_joint(theta, psi, data);
    return std::isfinite(v) ? v : neg_inf;
}

Eigen::VectorXd sds_from_factor(const HessianFactor& factor, const ThetaLayout& layout) {
    Eigen::VectorXd var = factor.inverse_diagonal();
    if (layout.spatial_blocks() > 0) {
        const Eigen::MatrixXd a = constraint_matrix(layout);
        const Eigen::MatrixXd z = factor.solve(Eigen::MatrixXd(a.transpose()));
        const Eigen::MatrixXd az = a * z;
        const Eigen::MatrixXd w = az.llt().solve(Eigen::MatrixXd(z.transpose()));  // c x d
        var -= (z.array() * w.transpose().array()).rowwise().sum().matrix();
    }
    return var.cwiseMax(0.0).cwiseSqrt();
}

struct ModeAndFactor {
    ModeResult mode;
    std::optional<HessianFactor> factor;
};

ModeAndFactor mode_with_factor(const Hyperparams& psi, const ModelData& data, const NewtonOptions& options,
                               const std::optional<Eigen::VectorXd>& start) {
    require(options.tol > 0.0 && options.max_iter >= 0, ErrorKind::parameter, "Newton tolerance must be positive");
    const auto& layout = data.layout;
    ModeAndFactor out;
    auto& m = out.mode;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Index>(layout.total()));
    if (start) {
        require(static_cast<std::size_t>(start->size()) == layout.total(), ErrorKind::dimension,
                "start vector does not match the layout");
        theta = *start;
        project_constraints(theta, layout);
    }
    const Eigen::MatrixXd a = constraint_matrix(layout);
    double f = safe_log_joint(theta, psi, data);
    require(std::isfinite(f), ErrorKind::numeric, "log joint is not finite at the Newton start");
    m.trace.push_back(f);

    for (int iter = 0;; ++iter) {
        GradHessian gh = grad_hessian(theta, psi, data);
        m.grad_norm = projected_gradient_norm(gh.gradient, layout);
        out.factor.emplace(gh.neg_hessian);
        if (m.grad_norm <= options.tol) {
            m.converged = true;
            break;
        }
        if (iter >= options.max_iter) break;
        const Eigen::VectorXd delta = constrained_direction(*out.factor, a, theta, gh.gradient);
        const double decrement = gh.gradient.dot(delta);

        bool accepted = false;
        // Predicted gain below the resolution of the summed log joint: judge
        // the full step by the projected gradient norm instead.
        if (0.5 * std::abs(decrement) <= 1e-11 * std::max(1.0, std::abs(f))) {
            Eigen::VectorXd cand = theta + delta;
            project_constraints(cand, layout);
            const double fc = safe_log_joint(cand, psi, data);
            if (std::isfinite(fc) &&
                projected_gradient_norm(log_joint_gradient(cand, psi, data), layout) < m.grad_norm) {
                theta = std::move(cand);
                f = fc;
                accepted = true;
            }
        }
        double alpha = 1.0;
        for (int h = 0; !accepted && h <= options.max_halvings; ++h, alpha *= 0.5) {
            Eigen::VectorXd cand = theta + alpha * delta;
            project_constraints(cand, layout);
            const double fc = safe_log_joint(cand, psi, data);
            if (fc >= f) {
                theta = std::move(cand);
                f = fc;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No representable ascent left: stationary to machine precision.
            if (0.5 * std::abs(decrement) <= 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f))) {
                m.converged = true;
                m.stalled = true;
            }
            break;
        }
        ++m.iterations;
        m.trace.push_back(f);
    }
    m.theta_star = theta;
    m.log_joint = f;
    m.log_det_h = constrained_log_det(*out.factor, layout);
    return out;
}

}  // namespace

ModeResult find_mode(const Hyperparams& psi, const ModelData& data, const NewtonOptions& options,
                     const std::optional<Eigen::VectorXd>& start) {
    return mode_with_factor(psi, data, options, start).mode;
}

double log_psi_posterior(const Hyperparams& psi, const ModelData& data, const ModeResult& mode) {
    require(mode.converged, ErrorKind::numeric,
            "Newton iteration did not converge (projected gradient norm " + std::to_string(mode.grad_norm) + ")");
    const double dc = static_cast<double>(data.layout.constrained_dim());
    (void)psi;
    return mode.log_joint + 0.5 * dc * log_two_pi - 0.5 * mode.log_det_h;
}

double log_psi_posterior(const Hyperparams& psi, const ModelData& data, const NewtonOptions& options) {
    return log_psi_posterior(psi, data, find_mode(psi, data, options));
}

Eigen::VectorXd marginal_sds(const Hyperparams& psi, const ModelData& data, const Eigen::VectorXd& theta_star) {
    const GradHessian gh = grad_hessian(theta_star, psi, data);
    return sds_from_factor(HessianFactor(gh.neg_hessian), data.layout);
}

std::string to_string(Strategy s) { return s == Strategy::grid ? "grid" : "empirical_bayes"; }

Strategy parse_strategy(const std::string& s) {
    if (s == "grid") return Strategy::grid;
    if (s == "empirical_bayes" || s == "eb") return Strategy::empirical_bayes;
    fail(ErrorKind::config, "unknown strategy '" + s + "' (expected empirical_bayes or grid)");
}

namespace {

struct PsiEval {
    double log_post = neg_inf;
    ModeResult mode;
    std::optional<HessianFactor> factor;
    std::string error;
};

PsiEval evaluate_psi(const std::vector<double>& log_tau, const std::vector<HyperSlot>& slots, const ModelData& data,
                     const NewtonOptions& options, const std::optional<Eigen::VectorXd>& start) {
    PsiEval e;
    try {
        const Hyperparams psi = hyperparams_from_log(log_tau, slots, data.spec, data.prior);
        auto mf = mode_with_factor(psi, data, options, start);
        e.mode = std::move(mf.mode);
        e.factor = std::move(mf.factor);
        e.log_post = log_psi_posterior(psi, data, e.mode);
    } catch (const Error& err) {
        if (err.kind() != ErrorKind::numeric) throw;
        e.log_post = neg_inf;
        e.error = err.what();
    }
    return e;
}

std::string format_log_tau(const std::vector<double>& x) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

}  // namespace

FitResult fit(const ModelData& data, Strategy strategy, const GridConfig& config, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    require(config.points_per_dim >= 1 && config.spacing > 0.0 && config.initial_step > 0.0 && config.min_step > 0.0 &&
                config.log_tau_lower < config.log_tau_upper,
            ErrorKind::config, "invalid hyperparameter search configuration");
    require(data.observations() > 0, ErrorKind::degenerate, "dataset has no shoes");
    if (data.family == Family::poisson)
        require(data.y.sum() > 0.0, ErrorKind::degenerate, "dataset has no accidentals; nothing to fit");

    FitResult r;
    r.spec = data.spec;
    r.prior = data.prior;
    r.grid = data.grid;
    r.layout = data.layout;
    r.strategy = strategy;
    r.seed = seed;
    r.slots = free_hyperparameters(data.spec, data.prior);
    auto& diag = r.diagnostics;
    diag.latent_dim = data.layout.total();
    diag.constrained_dim = data.layout.constrained_dim();

    const std::size_t dim = r.slots.size();
    auto clamp = [&](double v) { return std::clamp(v, config.log_tau_lower, config.log_tau_upper); };

    // Compass search in log precision, warm-started from the incumbent mode.
    std::vector<double> x(dim, clamp(0.0));
    PsiEval best = evaluate_psi(x, r.slots, data, config.newton, std::nullopt);
    ++diag.psi_evaluations;
    diag.newton_iterations += best.mode.iterations;
    if (!best.error.empty()) diag.messages.push_back("start " + format_log_tau(x) + ": " + best.error);
    double step = config.initial_step;
    while (dim > 0 && step >= config.min_step) {
        bool improved = false;
        for (std::size_t k = 0; k < dim; ++k) {
            for (double dir : {1.0, -1.0}) {
                std::vector<double> xc = x;
                xc[k] = clamp(x[k] + dir * step);
                if (xc[k] == x[k]) continue;
                const std::optional<Eigen::VectorXd> warm =
                    best.mode.theta_star.size() ? std::optional<Eigen::VectorXd>(best.mode.theta_star) : std::nullopt;
                PsiEval cand = evaluate_psi(xc, r.slots, data, config.newton, warm);
                ++diag.psi_evaluations;
                diag.newton_iterations += cand.mode.iterations;
                if (cand.log_post > best.log_post) {
                    x = std::move(xc);
                    best = std::move(cand);
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) step *= 0.5;
        log(LogLevel::debug, "psi search step " + std::to_string(step) + " at " + format_log_tau(x) +
                                 " log posterior " + std::to_string(best.log_post));
    }
    if (!std::isfinite(best.log_post)) {
        // Re-run at the final point to expose partial diagnostics.
        const Hyperparams psi = hyperparams_from_log(x, r.slots, data.spec, data.prior);
        best.mode = find_mode(psi, data, config.newton);
        diag.converged = false;
        diag.messages.push_back("no hyperparameter value gave a converged mode");
    }

    r.log_psi_map = x;
    r.psi_map = hyperparams_from_log(x, r.slots, data.spec, data.prior);
    diag.grad_norm = best.mode.grad_norm;
    diag.log_psi_map = best.log_post;
    diag.converged = diag.converged && best.mode.converged;

    if (strategy == Strategy::empirical_bayes || dim == 0 || !diag.converged) {
        r.mean = best.mode.theta_star;
        r.sd = best.factor ? sds_from_factor(*best.factor, data.layout) : Eigen::VectorXd::Zero(best.mode.theta_star.size());
        r.psi_grid.push_back({x, best.log_post, 1.0});
    } else {
        std::size_t n_points = 1;
        for (std::size_t k = 0; k < dim; ++k) n_points *= static_cast<std::size_t>(config.points_per_dim);
        std::vector<PsiPoint> points(n_points);
        std::vector<Eigen::VectorXd> means(n_points), sds(n_points);
        std::vector<int> iters(n_points, 0);
        const Eigen::VectorXd warm = best.mode.theta_star;
        const double centre = 0.5 * (config.points_per_dim - 1);
        parallel_for(n_points, config.threads, [&](std::size_t i) {
            std::vector<double> xi(dim);
            std::size_t rem = i;
            for (std::size_t k = 0; k < dim; ++k) {
                const auto j = rem % static_cast<std::size_t>(config.points_per_dim);
                rem /= static_cast<std::size_t>(config.points_per_dim);
                xi[k] = clamp(x[k] + (static_cast<double>(j) - centre) * config.spacing);
            }
            PsiEval e = evaluate_psi(xi, r.slots, data, config.newton, warm);
            iters[i] = e.mode.iterations;
            points[i].log_tau = xi;
            points[i].log_posterior = e.log_post;
            if (std::isfinite(e.log_post)) {
                means[i] = e.mode.theta_star;
                sds[i] = sds_from_factor(*e.factor, data.layout);
            }
        });
        double top = neg_inf;
        for (const auto& p : points) top = std::max(top, p.log_posterior);
        double total = 0.0;
        for (auto& p : points) {
            p.weight = std::isfinite(p.log_posterior) ? std::exp(p.log_posterior - top) : 0.0;
            total += p.weight;
        }
        const auto d = static_cast<Index>(data.layout.total());
        Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d), m2 = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i < n_points; ++i) {
            auto& p = points[i];
            p.weight /= total;
            diag.newton_iterations += iters[i];
            ++diag.psi_evaluations;
            if (p.weight == 0.0) continue;
            m1 += p.weight * means[i];
            m2 += p.weight * (sds[i].array().square() + means[i].array().square()).matrix();
        }
        r.mean = m1;
        r.sd = (m2.array() - m1.array().square()).max(0.0).sqrt().matrix();
        r.psi_grid = std::move(points);
    }
    diag.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log(LogLevel::info, "fit " + data.spec.name + ": " + std::to_string(diag.psi_evaluations) + " psi evaluations, " +
                            std::to_string(diag.newton_iterations) + " Newton iterations, " +
                            std::to_string(diag.runtime_seconds) + " s");
    return r;
}

FitResult fit(const Dataset& ds, const ModelSpec& spec, const PriorSpec& prior, Strategy strategy,
              const GridConfig& config, std::uint64_t seed) {
    return fit(make_model_data(ds, spec, prior), strategy, config, seed);
}

}  // namespace coxforge
