#include "coxforge/dataset.hpp"

#include "coxforge/error.hpp"

#include <filesystem>
#include <unordered_map>

namespace coxforge {

Dataset Dataset::subset(const std::vector<std::size_t>& positions) const {
    Dataset out;
    out.grid = grid;
    out.shoes.reserve(positions.size());
    for (auto p : positions) {
        require(p < shoes.size(), ErrorKind::dimension, "shoe position out of range");
        out.shoes.push_back(shoes[p]);
    }
    return out;
}

long Dataset::total_accidentals() const {
    long total = 0;
    for (const auto& s : shoes) total += s.counts.total;
    return total;
}

void Dataset::validate() const {
    grid.validate();
    const auto n = grid.cells();
    for (const auto& s : shoes) {
        require(s.contact.grid.size() == n && s.gradient.grid.size() == n && s.counts.counts.size() == n &&
                    (s.binary.grid.empty() || s.binary.grid.size() == n),
                ErrorKind::dimension, "shoe '" + s.shoe_id + "' does not match the dataset grid");
    }
}

ShoeRecord preprocess_shoe(const std::string& shoe_id, const RawImage& raw, Side side,
                           const std::vector<std::pair<double, double>>& points, const PrepOptions& options) {
    RawImage sided = raw;
    sided.side = side;
    const auto cropped = crop_reflect(sided, options.grid);
    ShoeRecord rec;
    rec.shoe_id = shoe_id;
    rec.side = side;
    rec.contact = coarsen(cropped, options.grid, shoe_id);
    rec.binary = binarize(rec.contact, options.threshold);
    rec.gradient = sobel_magnitude(rec.contact, options.grid);
    auto binned = bin_accidentals(points, side, options.grid);
    rec.counts = std::move(binned.counts);
    rec.rejects = static_cast<long>(binned.rejects.size());
    return rec;
}

Dataset prepare_dataset(const std::string& image_dir, const std::string& accidentals_csv, const PrepOptions& options,
                        std::vector<PrepSummaryRow>* summary) {
    namespace fs = std::filesystem;
    require(fs::is_directory(image_dir), ErrorKind::io, "image directory '" + image_dir + "' does not exist");
    const auto rows = read_accidentals_csv(accidentals_csv);

    struct Pending {
        Side side;
        std::vector<std::pair<double, double>> points;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Pending> by_id;
    for (const auto& r : rows) {
        auto it = by_id.find(r.shoe_id);
        if (it == by_id.end()) {
            order.push_back(r.shoe_id);
            it = by_id.emplace(r.shoe_id, Pending{r.side, {}}).first;
        }
        require(it->second.side == r.side, ErrorKind::io, "shoe '" + r.shoe_id + "' is listed with both sides");
        if (r.has_point) it->second.points.emplace_back(r.x, r.y);
    }

    Dataset ds;
    ds.grid = options.grid;
    for (const auto& id : order) {
        fs::path img;
        for (const char* ext : {".pgm", ".csv"}) {
            const auto candidate = fs::path(image_dir) / (id + ext);
            if (fs::exists(candidate)) {
                img = candidate;
                break;
            }
        }
        require(!img.empty(), ErrorKind::io, "no image found for shoe '" + id + "' in '" + image_dir + "'");
        const auto& pending = by_id.at(id);
        ds.shoes.push_back(preprocess_shoe(id, read_image(img.string()), pending.side, pending.points, options));
        if (summary) {
            const auto& rec = ds.shoes.back();
            summary->push_back({id, options.grid.cells(), rec.counts.total, rec.rejects});
        }
    }
    return ds;
}

}  // namespace coxforge
