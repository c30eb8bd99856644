#pragma once

#include "coxforge/cv.hpp"
#include "coxforge/dataset.hpp"
#include "coxforge/laplace.hpp"
#include "coxforge/simulate.hpp"

#include <json.hpp>

#include <string>

namespace coxforge {

using Json = nlohmann::ordered_json;

Json grid_to_json(const GridSpec& g);
GridSpec grid_from_json(const Json& j);

Json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);

/// Full description: name, fixed and sv bitstring lists, smooth, shoe_effect, contact.
Json spec_to_json(const ModelSpec& spec);
/// Accepts a builtin name (string) or an object as written by spec_to_json;
/// `fixed` may also be the string "all64" or "all32".
ModelSpec spec_from_json(const Json& j);

Json prior_to_json(const PriorSpec& p);
/// Applies overrides: rate_tau_s, rate_tau_sm, rate_tau_i, fixef_var, fixed_tau_high_order.
PriorSpec prior_from_json(const Json& j, PriorSpec base = {});

/// Fit summary. `include_metadata` adds the runtime field, the only
/// non-deterministic content.
Json fit_to_json(const FitResult& fit, bool include_metadata = true);
FitResult fit_from_json(const Json& j);

Json truth_to_json(const SimTruth& t, const ModelSpec& spec);
Json fold_plan_to_json(const FoldPlan& p);
Json pairwise_to_json(const CvResult& r);

Json read_json_file(const std::string& path);
/// Writes `j` indented by two spaces with a trailing newline.
void write_json_file(const std::string& path, const Json& j);

}  // namespace coxforge
