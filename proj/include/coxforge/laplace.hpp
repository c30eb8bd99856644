#pragma once

#include "coxforge/lgm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coxforge {

/// Factorization of an arrow-form negative Hessian via the Schur complement
/// of its diagonal shoe block.
class HessianFactor {
public:
    explicit HessianFactor(const NegHessian& h);

    Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& v) const;
    double log_det() const { return log_det_; }
    /// diag(H^{-1}).
    Eigen::VectorXd inverse_diagonal() const;
    Eigen::Index dim() const { return shoes_ + rest_; }

private:
    Eigen::Index shoes_ = 0;
    Eigen::Index rest_ = 0;
    Eigen::VectorXd d_inv_;
    Eigen::MatrixXd cross_;  // rest x shoes
    Eigen::LLT<Eigen::MatrixXd> schur_;
    double log_det_ = 0.0;
};

/// Constraint matrix rows: indicator of each spatial block.
Eigen::MatrixXd constraint_matrix(const ThetaLayout& layout);

struct NewtonOptions {
    double tol = 1e-8;
    int max_iter = 100;
    int max_halvings = 30;
};

struct ModeResult {
    Eigen::VectorXd theta_star;
    double log_det_h = 0.0;  // constrained log determinant
    double log_joint = 0.0;
    double grad_norm = 0.0;  // projected gradient norm
    int iterations = 0;
    bool converged = false;
    /// Converged by reaching machine precision rather than the gradient tolerance.
    bool stalled = false;
    std::vector<double> trace;  // log joint after each accepted iteration
};

/// Projected gradient norm (block means removed from the spatial blocks).
double projected_gradient_norm(const Eigen::VectorXd& gradient, const ThetaLayout& layout);

/// Constrained damped Newton. `start` must satisfy the constraints; defaults to 0.
ModeResult find_mode(const Hyperparams& psi, const ModelData& data, const NewtonOptions& options = {},
                     const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Constrained log determinant of H: log|H| + log|A H^-1 A'| - c log |A|.
double constrained_log_det(const HessianFactor& factor, const ThetaLayout& layout);

/// Laplace approximation to log p(psi | y) up to the normalizing constant of
/// the data. Throws a numeric error if the mode did not converge.
double log_psi_posterior(const Hyperparams& psi, const ModelData& data, const ModeResult& mode);
double log_psi_posterior(const Hyperparams& psi, const ModelData& data, const NewtonOptions& options = {});

/// Posterior sds of every theta coordinate under the constrained Gaussian approximation.
Eigen::VectorXd marginal_sds(const Hyperparams& psi, const ModelData& data, const Eigen::VectorXd& theta_star);

enum class Strategy { empirical_bayes, grid };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

struct GridConfig {
    int points_per_dim = 5;
    double spacing = 0.75;
    double log_tau_lower = -12.0;
    double log_tau_upper = 12.0;
    double initial_step = 1.0;
    double min_step = 1e-3;
    NewtonOptions newton;
    /// Thread count for grid points; 0 uses the process default.
    int threads = 0;
};

struct PsiPoint {
    std::vector<double> log_tau;
    double log_posterior = 0.0;
    double weight = 0.0;
};

struct FitDiagnostics {
    int newton_iterations = 0;
    int psi_evaluations = 0;
    bool converged = true;
    double grad_norm = 0.0;
    double log_psi_map = 0.0;
    std::size_t latent_dim = 0;
    std::size_t constrained_dim = 0;
    double runtime_seconds = 0.0;  // metadata, excluded from determinism checks
    std::vector<std::string> messages;
};

struct FitResult {
    ModelSpec spec;
    PriorSpec prior;
    GridSpec grid;
    ThetaLayout layout;
    Strategy strategy = Strategy::empirical_bayes;
    std::uint64_t seed = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    std::vector<HyperSlot> slots;
    std::vector<double> log_psi_map;
    Hyperparams psi_map;
    std::vector<PsiPoint> psi_grid;
    FitDiagnostics diagnostics;
};

/// Hyperparameter maximization followed by Gaussian marginals at the maximizer
/// (empirical Bayes) or a mixture over a log-precision grid centred on it.
FitResult fit(const ModelData& data, Strategy strategy = Strategy::empirical_bayes, const GridConfig& config = {},
              std::uint64_t seed = 0);
FitResult fit(const Dataset& ds, const ModelSpec& spec, const PriorSpec& prior = {},
              Strategy strategy = Strategy::empirical_bayes, const GridConfig& config = {}, std::uint64_t seed = 0);

}  // namespace coxforge
