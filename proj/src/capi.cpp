#include "coxforge/coxforge.h"

#include "coxforge/cv.hpp"
#include "coxforge/error.hpp"
#include "coxforge/log.hpp"
#include "coxforge/metrics.hpp"
#include "coxforge/parallel.hpp"
#include "coxforge/predict.hpp"
#include "coxforge/serialize.hpp"
#include "coxforge/simulate.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

struct cf_dataset {
    coxforge::Dataset ds;
};

struct cf_fit {
    coxforge::FitResult fit;
};

namespace {

using namespace coxforge;

thread_local std::string g_last_error;

cf_status status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return CF_ERR_IO;
        case ErrorKind::config:
        case ErrorKind::dimension:
        case ErrorKind::parameter: return CF_ERR_CONFIG;
        case ErrorKind::numeric:
        case ErrorKind::degenerate: return CF_ERR_NUMERIC;
    }
    return CF_ERR_NUMERIC;
}

template <class F>
cf_status guarded(F&& body) {
    g_last_error.clear();
    try {
        return body();
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        g_last_error = std::string("JSON error: ") + e.what();
        return CF_ERR_CONFIG;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return CF_ERR_NUMERIC;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CF_ERR_NUMERIC;
    }
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_out(char** out, const Json& j) {
    if (out) *out = dup_string(j.dump(2));
}

Json parse_optional(const char* text) {
    if (!text || !*text) return Json::object();
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("malformed JSON argument: ") + e.what());
    }
}

void require_handle(const void* p, const char* what) {
    require(p != nullptr, ErrorKind::config, std::string("null ") + what);
}

std::filesystem::path ensure_dir(const char* dir) {
    require(dir && *dir, ErrorKind::config, "output directory is empty");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorKind::io, std::string("cannot create directory '") + dir + "'");
    return dir;
}

void write_heatmap(const std::filesystem::path& stem, const std::vector<double>& values, const GridSpec& grid,
                   const std::string& what) {
    write_grid_csv(stem.string() + ".csv", values, grid.nx, grid.ny);
    const auto [lo, hi] = write_heatmap_pgm(stem.string() + ".pgm", values, grid.nx, grid.ny);
    write_json_file(stem.string() + ".json", Json{{"quantity", what},
                                                  {"nx", grid.nx},
                                                  {"ny", grid.ny},
                                                  {"min", lo},
                                                  {"max", hi},
                                                  {"pgm_scaling", "linear min-max to 0..255"}});
}

std::string safe_file_id(const std::string& id) {
    std::string out = id;
    for (auto& c : out)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    return out;
}

ModelSpec model_from_text(const char* model) {
    require(model && *model, ErrorKind::config, "model name is empty");
    const std::string m(model);
    if (m.front() == '{') return spec_from_json(parse_optional(model));
    return builtin_spec(m);
}

GridConfig grid_config_from_json(const Json& j) {
    GridConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "points_per_dim") c.points_per_dim = value.get<int>();
        else if (key == "spacing") c.spacing = value.get<double>();
        else if (key == "log_tau_lower") c.log_tau_lower = value.get<double>();
        else if (key == "log_tau_upper") c.log_tau_upper = value.get<double>();
        else if (key == "initial_step") c.initial_step = value.get<double>();
        else if (key == "min_step") c.min_step = value.get<double>();
        else if (key == "newton_tol") c.newton.tol = value.get<double>();
        else if (key == "newton_max_iter") c.newton.max_iter = value.get<int>();
        else fail(ErrorKind::config, "unknown fit option '" + key + "'");
    }
    return c;
}

}  // namespace

extern "C" {

const char* cf_last_error(void) { return g_last_error.c_str(); }

const char* cf_version(void) { return "0.1.0"; }

void cf_string_free(char* s) { std::free(s); }

void cf_set_threads(int threads) { set_default_threads(threads); }

void cf_set_log_level(int level) {
    set_log_level(level <= 0 ? LogLevel::quiet : level == 1 ? LogLevel::info : LogLevel::debug);
}

cf_status cf_dataset_prepare(const char* image_dir, const char* accidentals_csv, const char* options_json,
                             cf_dataset** out, char** summary_json) {
    return guarded([&] {
        require_handle(out, "output handle");
        require(image_dir && accidentals_csv, ErrorKind::config, "image directory and accidentals CSV are required");
        const Json opts = parse_optional(options_json);
        PrepOptions options;
        if (opts.contains("grid")) options.grid = grid_from_json(opts.at("grid"));
        if (opts.contains("threshold")) {
            const auto& t = opts.at("threshold");
            if (t.is_string() && t.get<std::string>() == "otsu") options.threshold = ThresholdMethod::otsu();
            else if (t.is_number()) options.threshold = ThresholdMethod::fixed(t.get<double>());
            else fail(ErrorKind::config, "threshold must be \"otsu\" or a number");
        }
        std::vector<PrepSummaryRow> rows;
        auto handle = std::make_unique<cf_dataset>();
        handle->ds = prepare_dataset(image_dir, accidentals_csv, options, &rows);
        if (summary_json) {
            Json s = Json::array();
            for (const auto& r : rows)
                s.push_back(Json{{"shoe_id", r.shoe_id}, {"cells", r.cells}, {"counts", r.counts}, {"rejects", r.rejects}});
            set_out(summary_json, s);
        }
        *out = handle.release();
        return CF_OK;
    });
}

cf_status cf_dataset_load(const char* path, cf_dataset** out) {
    return guarded([&] {
        require_handle(out, "output handle");
        require_handle(path, "path");
        auto handle = std::make_unique<cf_dataset>();
        handle->ds = dataset_from_json(read_json_file(path));
        *out = handle.release();
        return CF_OK;
    });
}

cf_status cf_dataset_save(const cf_dataset* ds, const char* path) {
    return guarded([&] {
        require_handle(ds, "dataset");
        require_handle(path, "path");
        write_json_file(path, dataset_to_json(ds->ds));
        return CF_OK;
    });
}

size_t cf_dataset_num_shoes(const cf_dataset* ds) { return ds ? ds->ds.shoes.size() : 0; }

long cf_dataset_total_accidentals(const cf_dataset* ds) { return ds ? ds->ds.total_accidentals() : 0; }

void cf_dataset_free(cf_dataset* ds) { delete ds; }

cf_status cf_simulate(const char* config_json, cf_dataset** out, char** truth_json) {
    return guarded([&] {
        require_handle(out, "output handle");
        const Json j = parse_optional(config_json);
        SimConfig c;
        for (const auto& [key, value] : j.items()) {
            if (key == "nx") c.nx = value.get<int>();
            else if (key == "ny") c.ny = value.get<int>();
            else if (key == "shoes") c.n_shoes = value.get<std::size_t>();
            else if (key == "model") c.spec = spec_from_json(value);
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "generator") c.generator = parse_contact_generator(value.get<std::string>());
            else if (key == "tau_shoe") c.psi.tau_shoe = value.get<double>();
            else if (key == "tau_smooth") c.psi.tau_smooth = value.get<double>();
            else if (key == "tau_sv") c.psi.tau_sv = value.get<std::vector<double>>();
            else if (key == "intercept_offset") c.intercept_offset = value.get<double>();
            else if (key == "contact_effect") c.contact_effect = value.get<double>();
            else if (key == "main_effect_sd") c.main_effect_sd = value.get<double>();
            else if (key == "interaction_sd") c.interaction_sd = value.get<double>();
            else fail(ErrorKind::config, "unknown simulation option '" + key + "'");
        }
        // A model with a different sv set keeps the default precision for each member.
        if (!j.contains("tau_sv")) c.psi.tau_sv.assign(c.spec.sv.size(), 10.0);
        auto sim = gen_dataset(c);
        if (truth_json) {
            Json t = truth_to_json(sim.truth, c.spec);
            t["seed"] = c.seed;
            t["generator"] = to_string(c.generator);
            set_out(truth_json, t);
        }
        auto handle = std::make_unique<cf_dataset>();
        handle->ds = std::move(sim.dataset);
        *out = handle.release();
        return CF_OK;
    });
}

cf_status cf_gradient_image(const char* image_path, const char* grid_json, const char* side, const char* out_csv) {
    return guarded([&] {
        require(image_path && out_csv, ErrorKind::config, "image path and output path are required");
        RawImage raw = read_image(image_path);
        raw.side = side && *side ? parse_side(side) : Side::left;
        GridSpec grid;
        ContactSurface cs;
        if (grid_json && *grid_json) {
            grid = grid_from_json(parse_optional(grid_json));
            cs = coarsen(crop_reflect(raw, grid), grid);
        } else {
            grid = GridSpec::synthetic(raw.width, raw.height);
            cs.grid = raw.pixels;
        }
        write_grid_csv(out_csv, sobel_magnitude(cs, grid).grid, grid.nx, grid.ny);
        return CF_OK;
    });
}

cf_status cf_fit_run(const cf_dataset* ds, const char* model, const char* prior_json, const char* strategy,
                     const char* config_json, uint64_t seed, cf_fit** out) {
    return guarded([&] {
        require_handle(ds, "dataset");
        require_handle(out, "output handle");
        const ModelSpec spec = model_from_text(model);
        const PriorSpec prior = prior_from_json(parse_optional(prior_json));
        const Strategy strat = strategy && *strategy ? parse_strategy(strategy) : Strategy::empirical_bayes;
        const GridConfig config = grid_config_from_json(parse_optional(config_json));
        auto handle = std::make_unique<cf_fit>();
        handle->fit = fit(ds->ds, spec, prior, strat, config, seed);
        const bool ok = handle->fit.diagnostics.converged;
        *out = handle.release();
        if (!ok) {
            g_last_error = "mode finding did not converge; diagnostics are in the fit result";
            return CF_ERR_NUMERIC;
        }
        return CF_OK;
    });
}

cf_status cf_fit_load(const char* path, cf_fit** out) {
    return guarded([&] {
        require_handle(out, "output handle");
        require_handle(path, "path");
        auto handle = std::make_unique<cf_fit>();
        handle->fit = fit_from_json(read_json_file(path));
        *out = handle.release();
        return CF_OK;
    });
}

cf_status cf_fit_save(const cf_fit* f, const char* path, int include_metadata) {
    return guarded([&] {
        require_handle(f, "fit");
        require_handle(path, "path");
        write_json_file(path, fit_to_json(f->fit, include_metadata != 0));
        return CF_OK;
    });
}

int cf_fit_converged(const cf_fit* f) { return f && f->fit.diagnostics.converged ? 1 : 0; }

cf_status cf_fit_export_heatmaps(const cf_fit* f, const char* out_dir) {
    return guarded([&] {
        require_handle(f, "fit");
        const auto dir = ensure_dir(out_dir);
        const auto& fit = f->fit;
        const auto& L = fit.layout;
        auto block = [&](std::size_t off) {
            const auto seg = fit.mean.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(L.cells));
            return std::vector<double>(seg.data(), seg.data() + seg.size());
        };
        if (L.smooth) write_heatmap(dir / "smooth", block(L.smooth_offset()), fit.grid, "posterior mean of beta_smooth");
        for (std::size_t j = 0; j < L.sv; ++j)
            write_heatmap(dir / ("sv_" + fit.spec.sv[j].str()), block(L.sv_offset(j)), fit.grid,
                          "posterior mean of beta_sv " + fit.spec.sv[j].str());
        return CF_OK;
    });
}

void cf_fit_free(cf_fit* f) { delete f; }

cf_status cf_predict(const cf_fit* f, const cf_dataset* ds, const char* shoe_id, const char* out_dir) {
    return guarded([&] {
        require_handle(f, "fit");
        require_handle(ds, "dataset");
        require(f->fit.grid == ds->ds.grid, ErrorKind::dimension, "fit and dataset use different grids");
        const auto dir = ensure_dir(out_dir);
        bool found = false;
        for (const auto& shoe : ds->ds.shoes) {
            if (shoe_id && *shoe_id && shoe.shoe_id != shoe_id) continue;
            found = true;
            const auto q = predictive_q(f->fit, shoe);
            write_heatmap(dir / ("q_" + safe_file_id(shoe.shoe_id)),
                          std::vector<double>(q.q.data(), q.q.data() + q.q.size()), ds->ds.grid,
                          "predictive accidental distribution q for " + shoe.shoe_id);
        }
        require(found, ErrorKind::config, std::string("shoe '") + (shoe_id ? shoe_id : "") + "' is not in the dataset");
        return CF_OK;
    });
}

cf_status cf_evaluate(const cf_fit* f, const cf_dataset* ds, const char* out_csv, char** summary_json) {
    return guarded([&] {
        require_handle(f, "fit");
        require_handle(ds, "dataset");
        require_handle(out_csv, "output path");
        require(f->fit.grid == ds->ds.grid, ErrorKind::dimension, "fit and dataset use different grids");
        std::ofstream out(out_csv);
        require(static_cast<bool>(out), ErrorKind::io, std::string("cannot write '") + out_csv + "'");
        out << std::setprecision(17) << "shoe_id,n_accidentals,metric\n";
        double sum = 0.0;
        std::size_t n = 0, excluded = 0;
        for (const auto& shoe : ds->ds.shoes) {
            const auto q = predictive_q(f->fit, shoe);
            const auto m = shoe_metric(shoe.counts.counts, q.q, ds->ds.grid);
            out << shoe.shoe_id << ',' << shoe.counts.total << ',';
            if (m) {
                out << *m;
                sum += *m;
                ++n;
            } else {
                out << "NA";
                ++excluded;
            }
            out << '\n';
        }
        require(static_cast<bool>(out), ErrorKind::io, std::string("write to '") + out_csv + "' failed");
        if (excluded) log(LogLevel::info, std::to_string(excluded) + " shoes without accidentals excluded");
        set_out(summary_json, Json{{"model", f->fit.spec.name},
                                   {"n_shoes", n},
                                   {"n_excluded", excluded},
                                   {"mean_metric", n ? Json(sum / static_cast<double>(n)) : Json(nullptr)}});
        return CF_OK;
    });
}

cf_status cf_cv_run(const cf_dataset* ds, const char* models, int folds, uint64_t seed, int pair_folds,
                    const char* strategy, const char* prior_json, const char* out_dir, char** summary_json) {
    return guarded([&] {
        require_handle(ds, "dataset");
        require(models && *models, ErrorKind::config, "no models given");
        std::vector<ModelSpec> specs;
        std::stringstream ss(models);
        for (std::string name; std::getline(ss, name, ',');)
            if (!name.empty()) specs.push_back(builtin_spec(name));
        const auto dir = ensure_dir(out_dir);
        std::vector<std::string> ids;
        for (const auto& s : ds->ds.shoes) ids.push_back(s.shoe_id);
        const FoldPlan plan = make_folds(ids, folds, seed, pair_folds != 0);
        CvOptions options;
        options.strategy = strategy && *strategy ? parse_strategy(strategy) : Strategy::empirical_bayes;
        options.prior = prior_from_json(parse_optional(prior_json));
        const CvResult r = run_cv(ds->ds, specs, plan, options, seed);
        write_cv_table((dir / "cv_table.csv").string(), r);
        write_per_shoe((dir / "per_shoe.csv").string(), r);
        write_json_file((dir / "pairwise.json").string(), pairwise_to_json(r));
        write_json_file((dir / "folds.json").string(), fold_plan_to_json(plan));
        set_out(summary_json, pairwise_to_json(r));
        for (const auto& c : r.cells)
            if (!c.ok) log(LogLevel::quiet, "fold " + std::to_string(c.fold) + " " + c.model + " failed: " + c.error);
        return CF_OK;
    });
}

}  // extern "C"
