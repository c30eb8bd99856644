#pragma once

#include "coxforge/laplace.hpp"

#include <Eigen/Dense>

#include <vector>

namespace coxforge {

/// Spatial distribution of one shoe's accidentals.
struct PredictiveField {
    Eigen::VectorXd q;     // sums to 1
    Eigen::VectorXd eta1;  // shoe-effect-free predictor
};

/// Softmax of eta1 with max subtraction. Throws a degenerate error if every
/// entry is -inf.
PredictiveField softmax_field(const Eigen::VectorXd& eta1);

/// q for one shoe from a point estimate of theta; the shoe block, if any, is ignored.
PredictiveField predictive_q(const Eigen::VectorXd& theta, const ThetaLayout& layout, const ModelSpec& spec,
                             const ShoeRecord& shoe, const GridSpec& grid);
/// Same, at the posterior means of a fit.
PredictiveField predictive_q(const FitResult& fit, const ShoeRecord& shoe);

struct LogProb {
    double value = 0.0;
    /// Set when a positive count falls in a zero-probability cell; value is -inf.
    bool zero_probability_hit = false;
};

/// sum_a y_a log q_a, plus log N! - sum log y_a! when `include_coefficient`.
LogProb log_multinomial(const std::vector<int>& counts, const Eigen::VectorXd& q, bool include_coefficient);

struct MarginalOptions {
    int points = 1024;  // D
    double range_sds = 8.0;
};

/// log integral of Poisson(N; e^b Lambda1) N(b; 0, 1/tau_s) db by the trapezoid
/// rule with logSumExp accumulation. The D points span the window around the
/// integrand's mode where its log stays within k^2/2 of the peak.
double poisson_marginal(long total, double lambda1, double tau_s, const MarginalOptions& options = {});

/// log Poisson(N; Lambda).
double log_poisson(long n, double lambda);

struct FactorizedLogProb {
    double log_poisson_part = 0.0;
    double log_multinomial_part = 0.0;  // without the coefficient
    double log_coefficient = 0.0;       // log N! - sum log y_a!
    bool zero_probability_hit = false;
};

/// Shoe-effect-marginalized log probability of a count vector split into its
/// total-count (Poisson) and spatial (multinomial) parts.
FactorizedLogProb factorized_log_prob(const std::vector<int>& counts, const Eigen::VectorXd& eta1, double tau_s,
                                      const MarginalOptions& options = {});

/// Fixed shoe effect: log prod_a Poisson(y_a; lambda_a) split into
/// log Poisson(N; Lambda) and the log multinomial including its coefficient.
FactorizedLogProb poisson_multinomial_split(const std::vector<int>& counts, const Eigen::VectorXd& eta);

/// Direct log prod_a Poisson(y_a; exp(eta_a)).
double log_poisson_product(const std::vector<int>& counts, const Eigen::VectorXd& eta);

}  // namespace coxforge
