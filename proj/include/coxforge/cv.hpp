#pragma once

#include "coxforge/laplace.hpp"
#include "coxforge/metrics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coxforge {

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> shoe_ids;
    std::vector<int> assignment;  // fold of shoe_ids[i]

    std::vector<std::size_t> members(int fold) const;
    std::vector<std::size_t> complement(int fold) const;
};

/// Left/right grouping key: the id with a trailing side token (L, R, left,
/// right, optionally after '_' or '-') removed, case-insensitively.
std::string pair_key(const std::string& shoe_id);

/// Seeded Fisher-Yates shuffle, then round-robin over folds. With `pair_groups`,
/// ids sharing a pair key move together and each group joins the currently
/// smallest fold.
FoldPlan make_folds(const std::vector<std::string>& shoe_ids, int k, std::uint64_t seed, bool pair_groups = false);

struct CvOptions {
    Strategy strategy = Strategy::empirical_bayes;
    GridConfig grid;
    PriorSpec prior;
    int threads = 0;
};

struct FoldCell {
    int fold = 0;
    std::string model;
    bool ok = true;
    std::string error;
    double mean_metric = 0.0;  // NaN when !ok
    std::size_t n_shoes = 0;   // shoes contributing a metric
    std::size_t n_excluded = 0;
    double fit_seconds = 0.0;
};

struct ShoeRow {
    int fold = 0;
    std::string model;
    std::string shoe_id;
    long n_accidentals = 0;
    std::optional<double> metric;
};

struct CvResult {
    FoldPlan plan;
    std::vector<std::string> models;
    std::vector<FoldCell> cells;   // fold-major, then model order
    std::vector<ShoeRow> shoes;    // shoe order, then model order
    std::vector<double> average;   // across-fold mean of fold means, per model
    /// ratio[i][j] = median_loss_ratio(model i, model j) over shoes both scored.
    std::vector<std::vector<double>> median_loss_ratio;
    /// gain[i][j] = fold_gain(model j over model i) over folds both fitted.
    std::vector<std::vector<double>> fold_gain;

    const FoldCell& cell(int fold, std::size_t model) const;
};

CvResult run_cv(const Dataset& ds, const std::vector<ModelSpec>& specs, const FoldPlan& plan,
                const CvOptions& options = {}, std::uint64_t seed = 0);

void write_cv_table(const std::string& path, const CvResult& r);
void write_per_shoe(const std::string& path, const CvResult& r);

}  // namespace coxforge
