#include "coxforge/lgm.hpp"

#include "coxforge/error.hpp"

#include <cmath>
#include <numbers>

namespace coxforge {

namespace {

constexpr double log_two_pi = 1.8378770664093454835606594728112;

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

// Covariate multiplying spatial block p at observation row: 1 for the smooth
// field, the sv column otherwise.
struct SpatialCovariates {
    const ModelData& data;

    bool is_smooth(std::size_t p) const { return data.layout.smooth && p == 0; }
    std::size_t sv_of(std::size_t p) const { return data.layout.smooth ? p - 1 : p; }
    double value(std::size_t p, Index row) const {
        return is_smooth(p) ? 1.0 : data.x(row, idx(data.sv_columns[sv_of(p)]));
    }
};

double spatial_tau(const Hyperparams& psi, const ThetaLayout& layout, std::size_t p) {
    if (layout.smooth && p == 0) return psi.tau_smooth;
    return psi.tau_sv[layout.smooth ? p - 1 : p];
}

void check_psi(const Hyperparams& psi, const ModelData& data) {
    require(psi.tau_sv.size() == data.layout.sv, ErrorKind::dimension,
            "hyperparameters do not match the spatially varying set");
    auto ok = [](double t) { return std::isfinite(t) && t > 0.0; };
    bool good = true;
    if (data.layout.shoes) good = good && ok(psi.tau_shoe);
    if (data.layout.smooth) good = good && ok(psi.tau_smooth);
    for (double t : psi.tau_sv) good = good && ok(t);
    require(good, ErrorKind::parameter, "precision hyperparameters must be positive and finite");
}

}  // namespace

ThetaLayout ThetaLayout::for_spec(const ModelSpec& spec, std::size_t n_shoes, std::size_t n_cells) {
    ThetaLayout l;
    l.shoes = spec.shoe_effect ? n_shoes : 0;
    l.fixed = spec.fixed.size();
    l.cells = n_cells;
    l.smooth = spec.smooth;
    l.sv = spec.sv.size();
    return l;
}

void PriorSpec::validate() const {
    require(rate_tau_s > 0 && rate_tau_sm > 0 && rate_tau_i > 0, ErrorKind::config,
            "hyperprior rates must be positive");
    require(fixed_effect_variance > 0 && fixed_tau_high_order > 0, ErrorKind::config,
            "fixed-effect variance and fixed precision must be positive");
}

bool sv_precision_fixed(const ModelSpec& spec, const PriorSpec& prior, std::size_t j) {
    return spec.sv.size() > prior.max_free_sv_precisions && spec.sv[j].order() >= 2;
}

std::vector<HyperSlot> free_hyperparameters(const ModelSpec& spec, const PriorSpec& prior) {
    std::vector<HyperSlot> slots;
    if (spec.shoe_effect) slots.push_back({HyperSlot::Kind::shoe, 0, "tau_shoe"});
    if (spec.smooth) slots.push_back({HyperSlot::Kind::smooth, 0, "tau_smooth"});
    for (std::size_t j = 0; j < spec.sv.size(); ++j)
        if (!sv_precision_fixed(spec, prior, j))
            slots.push_back({HyperSlot::Kind::sv, j, "tau_" + spec.sv[j].str()});
    return slots;
}

Hyperparams hyperparams_from_log(const std::vector<double>& log_tau, const std::vector<HyperSlot>& slots,
                                 const ModelSpec& spec, const PriorSpec& prior) {
    require(log_tau.size() == slots.size(), ErrorKind::dimension, "log-precision vector has the wrong length");
    Hyperparams psi;
    psi.tau_sv.assign(spec.sv.size(), prior.fixed_tau_high_order);
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const double t = std::exp(log_tau[k]);
        switch (slots[k].kind) {
            case HyperSlot::Kind::shoe: psi.tau_shoe = t; break;
            case HyperSlot::Kind::smooth: psi.tau_smooth = t; break;
            case HyperSlot::Kind::sv: psi.tau_sv[slots[k].sv_index] = t; break;
        }
    }
    return psi;
}

std::vector<double> hyperparams_to_log(const Hyperparams& psi, const std::vector<HyperSlot>& slots) {
    std::vector<double> out;
    out.reserve(slots.size());
    for (const auto& s : slots) {
        switch (s.kind) {
            case HyperSlot::Kind::shoe: out.push_back(std::log(psi.tau_shoe)); break;
            case HyperSlot::Kind::smooth: out.push_back(std::log(psi.tau_smooth)); break;
            case HyperSlot::Kind::sv: out.push_back(std::log(psi.tau_sv[s.sv_index])); break;
        }
    }
    return out;
}

ModelData make_model_data(const GridSpec& grid, const CovariateTensor& tensor, const Eigen::VectorXd& y,
                          const ModelSpec& spec, const PriorSpec& prior, Family family, double gaussian_sd) {
    spec.validate();
    prior.validate();
    require(tensor.cells == grid.cells(), ErrorKind::dimension, "tensor does not match the grid");
    require(tensor.index_order == spec.fixed, ErrorKind::dimension, "tensor columns do not match the model spec");
    require(y.size() == tensor.values.rows(), ErrorKind::dimension, "response length does not match the tensor");
    require(gaussian_sd > 0.0, ErrorKind::parameter, "gaussian noise sd must be positive");

    ModelData d;
    d.spec = spec;
    d.prior = prior;
    d.grid = grid;
    d.n_shoes = tensor.shoes;
    d.layout = ThetaLayout::for_spec(spec, tensor.shoes, tensor.cells);
    d.x = tensor.values;
    d.sv_columns = spec.sv_columns();
    d.y = y;
    d.family = family;
    d.gaussian_sd = gaussian_sd;
    d.log_y_factorial.resize(y.size());
    for (Index i = 0; i < y.size(); ++i) {
        if (family == Family::poisson)
            require(y[i] >= 0.0 && std::floor(y[i]) == y[i], ErrorKind::parameter,
                    "Poisson responses must be non-negative integers");
        d.log_y_factorial[i] = family == Family::poisson ? std::lgamma(y[i] + 1.0) : 0.0;
    }
    if (d.layout.spatial_blocks() > 0) {
        d.q = besag_precision(grid);
        d.log_gen_det_q = log_gen_det(d.q);
    }
    return d;
}

ModelData make_model_data(const Dataset& ds, const ModelSpec& spec, const PriorSpec& prior) {
    const auto tensor = build_tensor(ds, spec);
    Eigen::VectorXd y(idx(tensor.shoes * tensor.cells));
    for (std::size_t s = 0; s < ds.shoes.size(); ++s)
        for (std::size_t a = 0; a < tensor.cells; ++a)
            y[idx(s * tensor.cells + a)] = ds.shoes[s].counts.counts[a];
    return make_model_data(ds.grid, tensor, y, spec, prior);
}

void check_finite(const Eigen::VectorXd& theta) {
    require(theta.allFinite(), ErrorKind::numeric, "latent vector has non-finite entries");
}

Eigen::VectorXd linear_predictor(const Eigen::VectorXd& theta, const ModelData& data) {
    const auto& L = data.layout;
    require(static_cast<std::size_t>(theta.size()) == L.total(), ErrorKind::dimension,
            "latent vector length does not match the layout");
    const std::size_t A = L.cells;
    Eigen::VectorXd eta = data.x * theta.segment(idx(L.fixed_offset()), idx(L.fixed));
    const SpatialCovariates cov{data};
    for (std::size_t s = 0; s < data.n_shoes; ++s) {
        const double shoe = L.shoes ? theta[idx(L.shoe_offset() + s)] : 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            const Index row = idx(s * A + a);
            double v = shoe;
            for (std::size_t p = 0; p < L.spatial_blocks(); ++p)
                v += cov.value(p, row) * theta[idx(L.shoes + L.spatial_rest_offset(p) + a)];
            eta[row] += v;
        }
    }
    return eta;
}

Eigen::VectorXd shoe_free_predictor(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                    const Eigen::Ref<const Eigen::MatrixXd>& shoe_covariates,
                                    const std::vector<std::size_t>& sv_columns) {
    require(static_cast<std::size_t>(theta.size()) == layout.total(), ErrorKind::dimension,
            "latent vector length does not match the layout");
    require(static_cast<std::size_t>(shoe_covariates.rows()) == layout.cells &&
                static_cast<std::size_t>(shoe_covariates.cols()) == layout.fixed,
            ErrorKind::dimension, "covariate block does not match the layout");
    Eigen::VectorXd eta = shoe_covariates * theta.segment(idx(layout.fixed_offset()), idx(layout.fixed));
    if (layout.smooth) eta += theta.segment(idx(layout.smooth_offset()), idx(layout.cells));
    for (std::size_t j = 0; j < layout.sv; ++j)
        eta.array() += shoe_covariates.col(idx(sv_columns[j])).array() *
                       theta.segment(idx(layout.sv_offset(j)), idx(layout.cells)).array();
    return eta;
}

double log_likelihood(const Eigen::VectorXd& eta, const ModelData& data) {
    require(eta.size() == data.y.size(), ErrorKind::dimension, "predictor length does not match the data");
    double total = 0.0;
    if (data.family == Family::poisson) {
        for (Index i = 0; i < eta.size(); ++i) total += data.y[i] * eta[i] - std::exp(eta[i]) - data.log_y_factorial[i];
    } else {
        const double s2 = data.gaussian_sd * data.gaussian_sd;
        for (Index i = 0; i < eta.size(); ++i) {
            const double r = data.y[i] - eta[i];
            total += -0.5 * r * r / s2;
        }
        total -= 0.5 * static_cast<double>(eta.size()) * (log_two_pi + std::log(s2));
    }
    return total;
}

double log_prior(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data) {
    check_finite(theta);
    check_psi(psi, data);
    const auto& L = data.layout;
    double lp = 0.0;
    if (L.shoes) {
        const auto u = theta.segment(idx(L.shoe_offset()), idx(L.shoes));
        const double n = static_cast<double>(L.shoes);
        lp += 0.5 * n * (std::log(psi.tau_shoe) - log_two_pi) - 0.5 * psi.tau_shoe * u.squaredNorm();
    }
    {
        const auto b = theta.segment(idx(L.fixed_offset()), idx(L.fixed));
        const double v = data.prior.fixed_effect_variance;
        lp += -0.5 * static_cast<double>(L.fixed) * (log_two_pi + std::log(v)) - 0.5 * b.squaredNorm() / v;
    }
    const double rank = static_cast<double>(L.cells) - 1.0;
    for (std::size_t p = 0; p < L.spatial_blocks(); ++p) {
        const Eigen::VectorXd f = theta.segment(idx(L.shoes + L.spatial_rest_offset(p)), idx(L.cells));
        const double tau = spatial_tau(psi, L, p);
        lp += 0.5 * (rank * std::log(tau) + data.log_gen_det_q - rank * log_two_pi) -
              0.5 * tau * laplacian_quadratic(data.q, f);
    }
    return lp;
}

double log_hyperprior(const Hyperparams& psi, const ModelData& data) {
    check_psi(psi, data);
    // Exponential(rate) on tau, expressed over log tau: log(rate) + log(tau) - rate * tau.
    auto term = [](double rate, double tau) { return std::log(rate) + std::log(tau) - rate * tau; };
    double lp = 0.0;
    if (data.spec.shoe_effect) lp += term(data.prior.rate_tau_s, psi.tau_shoe);
    if (data.spec.smooth) lp += term(data.prior.rate_tau_sm, psi.tau_smooth);
    for (std::size_t j = 0; j < data.spec.sv.size(); ++j)
        if (!sv_precision_fixed(data.spec, data.prior, j)) lp += term(data.prior.rate_tau_i, psi.tau_sv[j]);
    return lp;
}

double log_joint(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data) {
    check_finite(theta);
    return log_likelihood(linear_predictor(theta, data), data) + log_prior(theta, psi, data) +
           log_hyperprior(psi, data);
}

namespace {

// Residual r = dloglik/deta and curvature w = -d2loglik/deta2.
void residual_and_weight(const Eigen::VectorXd& eta, const ModelData& data, Eigen::VectorXd& r, Eigen::VectorXd& w) {
    if (data.family == Family::poisson) {
        w = eta.array().exp();
        r = data.y - w;
    } else {
        const double inv = 1.0 / (data.gaussian_sd * data.gaussian_sd);
        r = (data.y - eta) * inv;
        w = Eigen::VectorXd::Constant(eta.size(), inv);
    }
}

// B' r for the predictor design B, plus -Sigma(psi) theta.
Eigen::VectorXd gradient_from_residual(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data,
                                       const Eigen::VectorXd& r) {
    const auto& L = data.layout;
    const std::size_t A = L.cells;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(idx(L.total()));
    const SpatialCovariates cov{data};
    for (std::size_t s = 0; s < data.n_shoes; ++s) {
        double shoe_sum = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            const Index row = idx(s * A + a);
            shoe_sum += r[row];
            for (std::size_t p = 0; p < L.spatial_blocks(); ++p)
                g[idx(L.shoes + L.spatial_rest_offset(p) + a)] += cov.value(p, row) * r[row];
        }
        if (L.shoes) g[idx(L.shoe_offset() + s)] += shoe_sum;
    }
    g.segment(idx(L.fixed_offset()), idx(L.fixed)) += data.x.transpose() * r;

    if (L.shoes) g.segment(0, idx(L.shoes)) -= psi.tau_shoe * theta.segment(0, idx(L.shoes));
    g.segment(idx(L.fixed_offset()), idx(L.fixed)) -=
        theta.segment(idx(L.fixed_offset()), idx(L.fixed)) / data.prior.fixed_effect_variance;
    for (std::size_t p = 0; p < L.spatial_blocks(); ++p) {
        const Index off = idx(L.shoes + L.spatial_rest_offset(p));
        g.segment(off, idx(A)) -= spatial_tau(psi, L, p) * (data.q.q * theta.segment(off, idx(A)));
    }
    return g;
}

}  // namespace

Eigen::VectorXd log_joint_gradient(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data) {
    check_finite(theta);
    check_psi(psi, data);
    Eigen::VectorXd r, w;
    residual_and_weight(linear_predictor(theta, data), data, r, w);
    return gradient_from_residual(theta, psi, data, r);
}

GradHessian grad_hessian(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data) {
    check_finite(theta);
    check_psi(psi, data);
    const auto& L = data.layout;
    const std::size_t A = L.cells;
    const std::size_t S = data.n_shoes;
    const std::size_t P = L.spatial_blocks();
    const Index K = idx(L.fixed);

    Eigen::VectorXd r, w;
    residual_and_weight(linear_predictor(theta, data), data, r, w);

    GradHessian out;
    out.gradient = gradient_from_residual(theta, psi, data, r);
    auto& H = out.neg_hessian;
    H.shoe_diag = Eigen::VectorXd::Constant(idx(L.shoes), L.shoes ? psi.tau_shoe : 0.0);
    H.cross = Eigen::MatrixXd::Zero(idx(L.rest()), idx(L.shoes));
    H.rest = Eigen::MatrixXd::Zero(idx(L.rest()), idx(L.rest()));

    // Fixed x fixed: X' W X.
    const Eigen::MatrixXd wx = data.x.array().colwise() * w.array();
    H.rest.topLeftCorner(K, K).noalias() = data.x.transpose() * wx;

    const SpatialCovariates cov{data};
    std::vector<double> z(P);
    for (std::size_t s = 0; s < S; ++s) {
        const auto rows = Eigen::seqN(idx(s * A), idx(A));
        if (L.shoes) {
            H.shoe_diag[idx(s)] += w(rows).sum();
            // Shoe x fixed: sum over cells of w x.
            H.cross.col(idx(s)).head(K) = wx(rows, Eigen::all).colwise().sum().transpose();
        }
        for (std::size_t a = 0; a < A; ++a) {
            const Index row = idx(s * A + a);
            const double wa = w[row];
            for (std::size_t p = 0; p < P; ++p) z[p] = cov.value(p, row);
            for (std::size_t p = 0; p < P; ++p) {
                const Index rp = idx(L.spatial_rest_offset(p) + a);
                const double wz = wa * z[p];
                if (L.shoes) H.cross(rp, idx(s)) += wz;
                // Fixed x spatial block p at cell a.
                H.rest.col(rp).head(K) += wx.row(row).transpose() * z[p];
                for (std::size_t p2 = 0; p2 <= p; ++p2)
                    H.rest(idx(L.spatial_rest_offset(p2) + a), rp) += wz * z[p2];
            }
        }
    }
    // Mirror the upper triangle built above.
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t a = 0; a < A; ++a) {
            const Index rp = idx(L.spatial_rest_offset(p) + a);
            H.rest.row(rp).head(K) = H.rest.col(rp).head(K).transpose();
            for (std::size_t p2 = 0; p2 < p; ++p2) {
                const Index rq = idx(L.spatial_rest_offset(p2) + a);
                H.rest(rp, rq) = H.rest(rq, rp);
            }
        }
    }

    // Prior precision.
    H.rest.topLeftCorner(K, K).diagonal().array() += 1.0 / data.prior.fixed_effect_variance;
    for (std::size_t p = 0; p < P; ++p) {
        const Index off = idx(L.spatial_rest_offset(p));
        const double tau = spatial_tau(psi, L, p);
        for (Index col = 0; col < data.q.q.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(data.q.q, col); it; ++it)
                H.rest(off + it.row(), off + col) += tau * it.value();
    }
    return out;
}

Eigen::MatrixXd NegHessian::to_dense() const {
    const Index S = shoe_diag.size();
    const Index R = rest.rows();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(S + R, S + R);
    h.topLeftCorner(S, S).diagonal() = shoe_diag;
    h.bottomLeftCorner(R, S) = cross;
    h.topRightCorner(S, R) = cross.transpose();
    h.bottomRightCorner(R, R) = rest;
    return h;
}

Eigen::VectorXd constraint_residuals(const Eigen::VectorXd& theta, const ThetaLayout& layout) {
    Eigen::VectorXd out(idx(layout.spatial_blocks()));
    for (std::size_t p = 0; p < layout.spatial_blocks(); ++p)
        out[idx(p)] = theta.segment(idx(layout.shoes + layout.spatial_rest_offset(p)), idx(layout.cells)).sum();
    return out;
}

void project_constraints(Eigen::VectorXd& v, const ThetaLayout& layout) {
    for (std::size_t p = 0; p < layout.spatial_blocks(); ++p) {
        auto seg = v.segment(idx(layout.shoes + layout.spatial_rest_offset(p)), idx(layout.cells));
        seg.array() -= seg.mean();
    }
}

}  // namespace coxforge
