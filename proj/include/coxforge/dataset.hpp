#pragma once

#include "coxforge/gradient.hpp"
#include "coxforge/grid.hpp"

#include <map>
#include <string>
#include <vector>

namespace coxforge {

/// One shoe on the shared coarse lattice.
struct ShoeRecord {
    std::string shoe_id;
    Side side = Side::left;
    ContactSurface contact;
    BinaryContact binary;
    GradientField gradient;
    AccidentalCounts counts;
    long rejects = 0;
};

struct Dataset {
    GridSpec grid;
    std::vector<ShoeRecord> shoes;

    /// Subset by position, preserving order.
    Dataset subset(const std::vector<std::size_t>& positions) const;
    long total_accidentals() const;
    /// Throws a dimension error if any record disagrees with the grid.
    void validate() const;
};

struct PrepOptions {
    GridSpec grid = GridSpec::database_default();
    ThresholdMethod threshold = ThresholdMethod::otsu();
};

/// Crop/reflect, coarsen, binarize, Sobel, and bin accidentals for one shoe.
ShoeRecord preprocess_shoe(const std::string& shoe_id, const RawImage& raw, Side side,
                           const std::vector<std::pair<double, double>>& points, const PrepOptions& options);

/// Per-shoe line of the prep summary.
struct PrepSummaryRow {
    std::string shoe_id;
    std::size_t cells = 0;
    long counts = 0;
    long rejects = 0;
};

/// Builds a dataset from an image directory holding `<shoe_id>.pgm` or
/// `<shoe_id>.csv` files and an accidentals CSV. Shoes are taken in order of
/// first appearance in the CSV.
Dataset prepare_dataset(const std::string& image_dir, const std::string& accidentals_csv, const PrepOptions& options,
                        std::vector<PrepSummaryRow>* summary = nullptr);

}  // namespace coxforge
