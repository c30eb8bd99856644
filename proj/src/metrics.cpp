#include "coxforge/metrics.hpp"

#include "coxforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coxforge {

std::optional<double> shoe_metric(const std::vector<int>& counts, const Eigen::VectorXd& q, const GridSpec& grid) {
    require(static_cast<Eigen::Index>(counts.size()) == q.size() && counts.size() == grid.cells(),
            ErrorKind::dimension, "counts, q and grid disagree in size");
    long n = 0;
    double s = 0.0;
    for (std::size_t a = 0; a < counts.size(); ++a) {
        require(counts[a] >= 0, ErrorKind::parameter, "counts must be non-negative");
        if (counts[a] == 0) continue;
        n += counts[a];
        s += counts[a] * std::log(q[static_cast<Eigen::Index>(a)]);
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n) - std::log(grid.delta_a());
}

double median_loss_ratio(const std::vector<double>& m1, const std::vector<double>& m2) {
    require(m1.size() == m2.size(), ErrorKind::dimension, "metric lists differ in length");
    require(!m1.empty(), ErrorKind::parameter, "metric lists are empty");
    std::vector<double> r(m1.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(m1[i] - m2[i]);
    std::sort(r.begin(), r.end());
    const std::size_t n = r.size();
    const double med = n % 2 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
    return 100.0 * med;
}

double fold_gain(const std::vector<double>& fold_avg_m1, const std::vector<double>& fold_avg_m2) {
    require(fold_avg_m1.size() == fold_avg_m2.size(), ErrorKind::dimension, "fold lists differ in length");
    require(!fold_avg_m1.empty(), ErrorKind::parameter, "fold lists are empty");
    double d = 0.0;
    for (std::size_t k = 0; k < fold_avg_m1.size(); ++k) d += fold_avg_m2[k] - fold_avg_m1[k];
    return 100.0 * std::exp(d / static_cast<double>(fold_avg_m1.size()));
}

std::optional<Concordance> ccc(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), ErrorKind::dimension, "ccc inputs differ in length");
    require(x.size() >= 2, ErrorKind::parameter, "ccc needs at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    const double sx = std::sqrt(sxx / (n - 1.0));
    const double sy = std::sqrt(syy / (n - 1.0));
    Concordance c;
    c.pearson = sxy / std::sqrt(sxx * syy);
    c.scale_ratio = sx / sy;
    c.location_shift = (mx - my) / std::sqrt(sx * sy);
    c.ccc = c.pearson * 2.0 / (c.scale_ratio + 1.0 / c.scale_ratio + c.location_shift * c.location_shift);
    return c;
}

}  // namespace coxforge
