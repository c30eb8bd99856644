#include "coxforge/predict.hpp"

#include "coxforge/error.hpp"

#include <cmath>
#include <limits>

namespace coxforge {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();
constexpr double log_two_pi = 1.8378770664093454835606594728112;

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

long total_of(const std::vector<int>& counts) {
    long n = 0;
    for (int c : counts) {
        require(c >= 0, ErrorKind::parameter, "counts must be non-negative");
        n += c;
    }
    return n;
}

double log_coefficient(const std::vector<int>& counts, long total) {
    double c = std::lgamma(static_cast<double>(total) + 1.0);
    for (int y : counts) c -= std::lgamma(static_cast<double>(y) + 1.0);
    return c;
}

}  // namespace

PredictiveField softmax_field(const Eigen::VectorXd& eta1) {
    require(eta1.size() > 0, ErrorKind::dimension, "empty predictor");
    require(!eta1.array().isNaN().any(), ErrorKind::numeric, "predictor has NaN entries");
    const double m = eta1.maxCoeff();
    require(m > neg_inf, ErrorKind::degenerate, "every predictor value is -inf; q is undefined");
    PredictiveField f;
    f.eta1 = eta1;
    // std::exp maps -inf to exactly 0; the vectorized path does not.
    f.q = (eta1.array() - m).unaryExpr([](double v) { return std::exp(v); });
    f.q /= f.q.sum();
    return f;
}

PredictiveField predictive_q(const Eigen::VectorXd& theta, const ThetaLayout& layout, const ModelSpec& spec,
                             const ShoeRecord& shoe, const GridSpec& grid) {
    require(layout.cells == grid.cells(), ErrorKind::dimension, "layout does not match the grid");
    const auto tensor = build_tensor(std::vector<ShoeRecord>{shoe}, grid, spec);
    return softmax_field(shoe_free_predictor(theta, layout, tensor.values, spec.sv_columns()));
}

PredictiveField predictive_q(const FitResult& fit, const ShoeRecord& shoe) {
    return predictive_q(fit.mean, fit.layout, fit.spec, shoe, fit.grid);
}

LogProb log_multinomial(const std::vector<int>& counts, const Eigen::VectorXd& q, bool include_coefficient) {
    require(static_cast<Eigen::Index>(counts.size()) == q.size(), ErrorKind::dimension,
            "counts and q have different lengths");
    LogProb out;
    const long n = total_of(counts);
    for (std::size_t a = 0; a < counts.size(); ++a) {
        if (counts[a] == 0) continue;
        const double qa = q[static_cast<Eigen::Index>(a)];
        if (!(qa > 0.0)) {
            out.zero_probability_hit = true;
            out.value = neg_inf;
            return out;
        }
        out.value += counts[a] * std::log(qa);
    }
    if (include_coefficient) out.value += log_coefficient(counts, n);
    return out;
}

double log_poisson(long n, double lambda) {
    require(n >= 0 && lambda >= 0.0, ErrorKind::parameter, "Poisson arguments must be non-negative");
    if (lambda == 0.0) return n == 0 ? 0.0 : neg_inf;
    return static_cast<double>(n) * std::log(lambda) - lambda - std::lgamma(static_cast<double>(n) + 1.0);
}

double poisson_marginal(long total, double lambda1, double tau_s, const MarginalOptions& options) {
    require(total >= 0, ErrorKind::parameter, "total count must be non-negative");
    require(lambda1 > 0.0 && std::isfinite(lambda1), ErrorKind::parameter, "Lambda1 must be positive");
    require(tau_s > 0.0, ErrorKind::parameter, "tau_s must be positive");
    require(options.points >= 2 && options.range_sds > 0.0, ErrorKind::parameter, "need at least two grid points");
    const double log_l1 = std::log(lambda1);
    const double n = static_cast<double>(total);
    // Log integrand up to constants; strictly concave in b.
    auto f = [&](double b) { return n * (b + log_l1) - std::exp(b + log_l1) - 0.5 * tau_s * b * b; };
    auto slope = [&](double b) { return n - std::exp(b + log_l1) - tau_s * b; };

    // The mode lies in [-Lambda1/tau, 0] or [0, N/tau] depending on the sign of the slope at 0.
    double lo = 0.0, hi = 0.0;
    if (slope(0.0) > 0.0) hi = n / tau_s;
    else lo = -lambda1 / tau_s;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++i) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? lo : hi) = mid;
    }
    const double mode = 0.5 * (lo + hi);
    const double peak = f(mode);

    // Window edges where the log integrand has dropped by k^2/2 (k sds for a Gaussian).
    const double drop = peak - 0.5 * options.range_sds * options.range_sds;
    const double step = 1.0 / std::sqrt(std::exp(mode + log_l1) + tau_s);
    auto edge = [&](double dir) {
        double inner = mode, outer = mode + dir * step;
        while (f(outer) > drop) {
            inner = outer;
            outer = mode + 2.0 * (outer - mode);
        }
        for (int i = 0; i < 100; ++i) {
            const double mid = 0.5 * (inner + outer);
            (f(mid) > drop ? inner : outer) = mid;
        }
        return outer;
    };
    const double left = edge(-1.0), right = edge(1.0);

    const double h = (right - left) / (options.points - 1);
    const double log_const = -std::lgamma(n + 1.0) - 0.5 * (log_two_pi - std::log(tau_s));
    Eigen::VectorXd terms(options.points);
    for (int k = 0; k < options.points; ++k) {
        const double w = (k == 0 || k == options.points - 1) ? 0.5 : 1.0;
        terms[k] = f(left + k * h) + std::log(w);
    }
    return log_sum_exp(terms) + std::log(h) + log_const;
}

FactorizedLogProb factorized_log_prob(const std::vector<int>& counts, const Eigen::VectorXd& eta1, double tau_s,
                                      const MarginalOptions& options) {
    const auto field = softmax_field(eta1);
    const long n = total_of(counts);
    const double m = eta1.maxCoeff();
    const double lambda1 = std::exp(m) * (eta1.array() - m).exp().sum();
    FactorizedLogProb out;
    out.log_poisson_part = poisson_marginal(n, lambda1, tau_s, options);
    const auto lm = log_multinomial(counts, field.q, false);
    out.log_multinomial_part = lm.value;
    out.zero_probability_hit = lm.zero_probability_hit;
    out.log_coefficient = log_coefficient(counts, n);
    return out;
}

FactorizedLogProb poisson_multinomial_split(const std::vector<int>& counts, const Eigen::VectorXd& eta) {
    const auto field = softmax_field(eta);
    const long n = total_of(counts);
    FactorizedLogProb out;
    // log Lambda via logSumExp keeps the split exact in floating point.
    const double log_lambda = log_sum_exp(eta);
    out.log_poisson_part = static_cast<double>(n) * log_lambda - std::exp(log_lambda) -
                           std::lgamma(static_cast<double>(n) + 1.0);
    const auto lm = log_multinomial(counts, field.q, false);
    out.log_multinomial_part = lm.value;
    out.zero_probability_hit = lm.zero_probability_hit;
    out.log_coefficient = log_coefficient(counts, n);
    return out;
}

double log_poisson_product(const std::vector<int>& counts, const Eigen::VectorXd& eta) {
    require(static_cast<Eigen::Index>(counts.size()) == eta.size(), ErrorKind::dimension,
            "counts and predictor have different lengths");
    double s = 0.0;
    for (std::size_t a = 0; a < counts.size(); ++a) {
        const double e = eta[static_cast<Eigen::Index>(a)];
        s += counts[a] * e - std::exp(e) - std::lgamma(counts[a] + 1.0);
    }
    return s;
}

}  // namespace coxforge
