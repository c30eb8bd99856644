#pragma once

#include "coxforge/grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace coxforge {

struct ShoeMetric {
    std::string shoe_id;
    double value = 0.0;
    long n_accidentals = 0;
};

/// (sum_a y_a log q_a) / N - log delta_A; empty when the shoe has no accidentals.
std::optional<double> shoe_metric(const std::vector<int>& counts, const Eigen::VectorXd& q, const GridSpec& grid);

/// 100 * median_s exp(m1_s - m2_s). Even lengths average the two middle ratios.
double median_loss_ratio(const std::vector<double>& m1, const std::vector<double>& m2);

/// 100 * exp(mean_k (p2_k - p1_k)).
double fold_gain(const std::vector<double>& fold_avg_m1, const std::vector<double>& fold_avg_m2);

struct Concordance {
    double ccc = 0.0;
    double pearson = 0.0;
    double scale_ratio = 0.0;     // nu = s_x / s_y
    double location_shift = 0.0;  // u = (mean_x - mean_y) / sqrt(s_x s_y)
};

/// Lin's concordance with sample (n-1) standard deviations; empty if either
/// input has zero variance.
std::optional<Concordance> ccc(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace coxforge
