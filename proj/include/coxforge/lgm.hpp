#pragma once

#include "coxforge/design.hpp"
#include "coxforge/gmrf.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace coxforge {

/// Block offsets of the latent vector theta = (shoe, fixed, smooth, sv...).
struct ThetaLayout {
    std::size_t shoes = 0;  // 0 when the spec has no shoe effect
    std::size_t fixed = 0;
    std::size_t cells = 0;
    bool smooth = true;
    std::size_t sv = 0;

    std::size_t shoe_offset() const { return 0; }
    std::size_t fixed_offset() const { return shoes; }
    std::size_t smooth_offset() const { return shoes + fixed; }
    std::size_t sv_offset(std::size_t j) const { return shoes + fixed + (smooth ? cells : 0) + j * cells; }
    /// Number of spatial blocks (smooth plus each sv coefficient field).
    std::size_t spatial_blocks() const { return (smooth ? 1 : 0) + sv; }
    /// Offset, within the non-shoe part, of spatial block p.
    std::size_t spatial_rest_offset(std::size_t p) const { return fixed + p * cells; }
    std::size_t rest() const { return fixed + spatial_blocks() * cells; }
    std::size_t total() const { return shoes + rest(); }
    /// Dimension of the sum-to-zero constrained support (one constraint per spatial block).
    std::size_t constrained_dim() const { return total() - spatial_blocks(); }

    static ThetaLayout for_spec(const ModelSpec& spec, std::size_t n_shoes, std::size_t n_cells);
};

struct PriorSpec {
    double rate_tau_s = 5e-5;
    double rate_tau_sm = 5e-4;
    double rate_tau_i = 5e-4;
    double fixed_effect_variance = 1000.0;
    double fixed_tau_high_order = 100.0;
    /// Above this many spatially varying coefficients, only main-effect
    /// precisions are estimated and higher-order ones are held fixed.
    std::size_t max_free_sv_precisions = 3;

    void validate() const;
};

struct Hyperparams {
    double tau_shoe = 1.0;
    double tau_smooth = 1.0;
    std::vector<double> tau_sv;  // aligned with ModelSpec::sv
};

/// One estimated precision inside psi.
struct HyperSlot {
    enum class Kind { shoe, smooth, sv } kind = Kind::shoe;
    std::size_t sv_index = 0;
    std::string label;
};

std::vector<HyperSlot> free_hyperparameters(const ModelSpec& spec, const PriorSpec& prior);
/// True when the sv precision at position j is held at its fixed value.
bool sv_precision_fixed(const ModelSpec& spec, const PriorSpec& prior, std::size_t j);
Hyperparams hyperparams_from_log(const std::vector<double>& log_tau, const std::vector<HyperSlot>& slots,
                                 const ModelSpec& spec, const PriorSpec& prior);
std::vector<double> hyperparams_to_log(const Hyperparams& psi, const std::vector<HyperSlot>& slots);

enum class Family { poisson, gaussian };

/// Everything inference needs about one dataset under one spec.
struct ModelData {
    ModelSpec spec;
    PriorSpec prior;
    GridSpec grid;
    ThetaLayout layout;
    std::size_t n_shoes = 0;  // observed shoes, even without a shoe effect
    Eigen::MatrixXd x;        // (n_shoes * cells) x |I|
    std::vector<std::size_t> sv_columns;
    Eigen::VectorXd y;
    Eigen::VectorXd log_y_factorial;
    SparsePrecision q;
    double log_gen_det_q = 0.0;
    Family family = Family::poisson;
    double gaussian_sd = 1.0;

    std::size_t cells() const { return layout.cells; }
    std::size_t observations() const { return n_shoes * layout.cells; }
};

ModelData make_model_data(const Dataset& ds, const ModelSpec& spec, const PriorSpec& prior = {});
/// Low-level constructor used by surrogates and toys; `y` is ordered like the tensor rows.
ModelData make_model_data(const GridSpec& grid, const CovariateTensor& tensor, const Eigen::VectorXd& y,
                          const ModelSpec& spec, const PriorSpec& prior = {}, Family family = Family::poisson,
                          double gaussian_sd = 1.0);

/// eta for every (shoe, cell), row s * |A| + a.
Eigen::VectorXd linear_predictor(const Eigen::VectorXd& theta, const ModelData& data);
/// eta without the shoe effect for one covariate block (|A| x |I|).
Eigen::VectorXd shoe_free_predictor(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                    const Eigen::Ref<const Eigen::MatrixXd>& shoe_covariates,
                                    const std::vector<std::size_t>& sv_columns);

double log_likelihood(const Eigen::VectorXd& eta, const ModelData& data);
/// Constrained Gaussian prior density of theta, all normalizing constants included.
double log_prior(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data);
/// Exponential priors on each free precision, as a density over log tau.
double log_hyperprior(const Hyperparams& psi, const ModelData& data);
double log_joint(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data);

/// Negative Hessian in arrow form: the shoe block is diagonal and couples to
/// the remaining coordinates through `cross` only.
struct NegHessian {
    Eigen::VectorXd shoe_diag;  // shoes
    Eigen::MatrixXd cross;      // rest x shoes
    Eigen::MatrixXd rest;       // rest x rest

    Eigen::MatrixXd to_dense() const;
};

struct GradHessian {
    Eigen::VectorXd gradient;
    NegHessian neg_hessian;
};

Eigen::VectorXd log_joint_gradient(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data);
GradHessian grad_hessian(const Eigen::VectorXd& theta, const Hyperparams& psi, const ModelData& data);

/// Throws an evaluation error if any entry of theta is not finite.
void check_finite(const Eigen::VectorXd& theta);

/// Sum of each spatial block (the quantities the constraints pin to zero).
Eigen::VectorXd constraint_residuals(const Eigen::VectorXd& theta, const ThetaLayout& layout);
/// Removes each spatial block's mean in place.
void project_constraints(Eigen::VectorXd& v, const ThetaLayout& layout);

}  // namespace coxforge
