// Command-line front end over the C interface.
#include "coxforge/coxforge.h"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace {

struct DatasetDeleter {
    void operator()(cf_dataset* d) const { cf_dataset_free(d); }
};
struct FitDeleter {
    void operator()(cf_fit* f) const { cf_fit_free(f); }
};
using DatasetPtr = std::unique_ptr<cf_dataset, DatasetDeleter>;
using FitPtr = std::unique_ptr<cf_fit, FitDeleter>;

struct Failure {
    int code;
};

void check(cf_status s, const std::string& context) {
    if (s == CF_OK) return;
    std::cerr << "coxforge: " << context << ": " << cf_last_error() << '\n';
    throw Failure{static_cast<int>(s)};
}

[[noreturn]] void config_error(const std::string& msg) {
    std::cerr << "coxforge: " << msg << '\n';
    throw Failure{CF_ERR_CONFIG};
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "coxforge: cannot read '" << path << "'\n";
        throw Failure{CF_ERR_IO};
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    cf_string_free(s);
    return out;
}

DatasetPtr load_dataset(const std::string& path) {
    cf_dataset* d = nullptr;
    check(cf_dataset_load(path.c_str(), &d), "loading " + path);
    return DatasetPtr(d);
}

FitPtr load_fit(const std::string& path) {
    cf_fit* f = nullptr;
    check(cf_fit_load(path.c_str(), &f), "loading " + path);
    return FitPtr(f);
}

// "12x16" -> {12, 16}.
std::pair<int, int> parse_dims(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
    } catch (const std::exception&) {
        config_error("grid must look like NXxNY, got '" + text + "'");
    }
}

std::string optional_file(const std::string& path) { return path.empty() ? std::string() : read_text(path); }

const char* c_or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial point-process models of shoe accidentals"};
    app.require_subcommand(1);
    int threads = 0;
    std::uint64_t seed = 0;
    std::optional<int> log_level;
    app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "Seed for every random choice");
    app.add_option("--log", log_level, "Verbosity 0-2 (overrides COXFORGE_LOG)");

    // prep
    auto* prep = app.add_subcommand("prep", "Build a dataset from images and an accidentals CSV");
    std::string images, accidentals, dataset_out = "dataset.json", threshold = "otsu", grid_json;
    prep->add_option("--images", images, "Directory of <shoe_id>.pgm or .csv images")->required();
    prep->add_option("--accidentals", accidentals, "CSV with header shoe_id,side,x,y")->required();
    prep->add_option("--out", dataset_out, "Dataset JSON to write");
    prep->add_option("--threshold", threshold, "\"otsu\" or a fixed value in (0,1)");
    prep->add_option("--grid-json", grid_json, "Grid geometry JSON (default 39x91 shoe layout)");

    // gradient
    auto* grad = app.add_subcommand("gradient", "Sobel gradient magnitude of an image as CSV");
    std::string grad_image, grad_out, grad_side = "left";
    bool grad_coarsen = false;
    grad->add_option("--image", grad_image, "PGM or CSV image")->required();
    grad->add_option("--out", grad_out, "CSV to write")->required();
    grad->add_option("--side", grad_side, "left or right");
    grad->add_flag("--coarsen", grad_coarsen, "Crop, reflect and coarsen to the grid first");
    grad->add_option("--grid-json", grid_json, "Grid geometry JSON used with --coarsen");

    // fit
    auto* fitc = app.add_subcommand("fit", "Fit a model to a dataset");
    std::string data_path = "dataset.json", model = "final", spec_json, prior_json, strategy = "empirical_bayes",
                fit_config, fit_out = "fit.json", heatmaps;
    fitc->add_option("--data", data_path, "Dataset JSON");
    fitc->add_option("--model", model, "Builtin model name");
    fitc->add_option("--spec-json", spec_json, "Model spec JSON file (overrides --model)");
    fitc->add_option("--prior-json", prior_json, "Prior override JSON file");
    fitc->add_option("--strategy", strategy, "empirical_bayes or grid");
    fitc->add_option("--config-json", fit_config, "Search/grid options JSON file");
    fitc->add_option("--out", fit_out, "Fit JSON to write");
    fitc->add_option("--heatmaps", heatmaps, "Directory for spatial-block heatmaps");

    // predict
    auto* pred = app.add_subcommand("predict", "Write predictive accidental distributions");
    std::string fit_path = "fit.json", shoe, out_dir = "predict_out";
    pred->add_option("--fit", fit_path, "Fit JSON");
    pred->add_option("--data", data_path, "Dataset JSON");
    pred->add_option("--shoe", shoe, "Only this shoe");
    pred->add_option("--out-dir", out_dir, "Output directory");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Per-shoe evaluation metric");
    std::string eval_out = "metrics.csv";
    eval->add_option("--fit", fit_path, "Fit JSON");
    eval->add_option("--data", data_path, "Dataset JSON");
    eval->add_option("--out", eval_out, "Metric CSV to write");

    // cv
    auto* cv = app.add_subcommand("cv", "k-fold cross-validation over shoes");
    std::string models = "uniform,final", cv_out = "cv_out";
    int folds = 10;
    bool pair_folds = false;
    cv->add_option("--data", data_path, "Dataset JSON");
    cv->add_option("--models", models, "Comma-separated builtin model names");
    cv->add_option("--folds", folds, "Number of folds")->check(CLI::PositiveNumber);
    cv->add_flag("--pair-folds", pair_folds, "Keep left/right shoes of a pair in one fold");
    cv->add_option("--strategy", strategy, "empirical_bayes or grid");
    cv->add_option("--prior-json", prior_json, "Prior override JSON file");
    cv->add_option("--out-dir", cv_out, "Output directory");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset from the model");
    std::string sim_grid = "12x16", generator = "blobs", truth_out = "truth.json";
    std::size_t shoes = 200;
    sim->add_option("--grid", sim_grid, "Lattice size NXxNY");
    sim->add_option("--shoes", shoes, "Number of shoes")->check(CLI::PositiveNumber);
    sim->add_option("--model", model, "Builtin model used to generate counts");
    sim->add_option("--generator", generator, "blobs, stripes or uniform_noise");
    sim->add_option("--out", dataset_out, "Dataset JSON to write");
    sim->add_option("--truth", truth_out, "Ground-truth JSON to write");
    for (auto* sub : {prep, grad, fitc, pred, eval, cv, sim}) {
        sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
        sub->add_option("--seed", seed, "Seed for every random choice");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        cf_set_threads(threads);
        if (log_level) cf_set_log_level(*log_level);

        if (*prep) {
            std::string opts = "{";
            if (!grid_json.empty()) opts += "\"grid\":" + read_text(grid_json) + ",";
            opts += "\"threshold\":" + (threshold == "otsu" ? std::string("\"otsu\"") : threshold) + "}";
            cf_dataset* d = nullptr;
            char* summary = nullptr;
            check(cf_dataset_prepare(images.c_str(), accidentals.c_str(), opts.c_str(), &d, &summary), "prep");
            DatasetPtr ds(d);
            std::cout << take_string(summary) << '\n';
            check(cf_dataset_save(ds.get(), dataset_out.c_str()), "writing " + dataset_out);
            std::cout << "wrote " << dataset_out << " (" << cf_dataset_num_shoes(ds.get()) << " shoes, "
                      << cf_dataset_total_accidentals(ds.get()) << " accidentals)\n";
        } else if (*grad) {
            std::string grid;
            if (grad_coarsen) grid = grid_json.empty() ? std::string("{\"nx\":39,\"ny\":91,\"crop_x\":[262,597],\"crop_y\":[44,826]}")
                                                       : read_text(grid_json);
            check(cf_gradient_image(grad_image.c_str(), c_or_null(grid), grad_side.c_str(), grad_out.c_str()),
                  "gradient");
        } else if (*fitc) {
            DatasetPtr ds = load_dataset(data_path);
            const std::string spec = spec_json.empty() ? model : read_text(spec_json);
            const std::string prior = optional_file(prior_json);
            const std::string config = optional_file(fit_config);
            cf_fit* f = nullptr;
            const cf_status s = cf_fit_run(ds.get(), spec.c_str(), c_or_null(prior), strategy.c_str(),
                                           c_or_null(config), seed, &f);
            FitPtr fit(f);
            const std::string message = cf_last_error();
            if (fit) {
                check(cf_fit_save(fit.get(), fit_out.c_str(), 1), "writing " + fit_out);
                if (!heatmaps.empty()) check(cf_fit_export_heatmaps(fit.get(), heatmaps.c_str()), "heatmaps");
            }
            if (s != CF_OK) {
                std::cerr << "coxforge: fit: " << message << '\n';
                return static_cast<int>(s);
            }
            std::cout << "wrote " << fit_out << '\n';
        } else if (*pred) {
            FitPtr fit = load_fit(fit_path);
            DatasetPtr ds = load_dataset(data_path);
            check(cf_predict(fit.get(), ds.get(), c_or_null(shoe), out_dir.c_str()), "predict");
            std::cout << "wrote predictive heatmaps to " << out_dir << '\n';
        } else if (*eval) {
            FitPtr fit = load_fit(fit_path);
            DatasetPtr ds = load_dataset(data_path);
            char* summary = nullptr;
            check(cf_evaluate(fit.get(), ds.get(), eval_out.c_str(), &summary), "evaluate");
            std::cout << take_string(summary) << '\n';
        } else if (*cv) {
            DatasetPtr ds = load_dataset(data_path);
            const std::string prior = optional_file(prior_json);
            char* summary = nullptr;
            check(cf_cv_run(ds.get(), models.c_str(), folds, seed, pair_folds ? 1 : 0, strategy.c_str(),
                            c_or_null(prior), cv_out.c_str(), &summary),
                  "cv");
            std::cout << take_string(summary) << '\n';
        } else if (*sim) {
            const auto [nx, ny] = parse_dims(sim_grid);
            std::ostringstream cfg;
            cfg << "{\"nx\":" << nx << ",\"ny\":" << ny << ",\"shoes\":" << shoes << ",\"seed\":" << seed
                << ",\"model\":\"" << model << "\",\"generator\":\"" << generator << "\"}";
            cf_dataset* d = nullptr;
            char* truth = nullptr;
            check(cf_simulate(cfg.str().c_str(), &d, &truth), "simulate");
            DatasetPtr ds(d);
            const std::string t = take_string(truth);
            check(cf_dataset_save(ds.get(), dataset_out.c_str()), "writing " + dataset_out);
            std::ofstream tout(truth_out);
            if (!tout || !(tout << t << '\n')) {
                std::cerr << "coxforge: cannot write '" << truth_out << "'\n";
                return CF_ERR_IO;
            }
            std::cout << "wrote " << dataset_out << " (" << cf_dataset_num_shoes(ds.get()) << " shoes, "
                      << cf_dataset_total_accidentals(ds.get()) << " accidentals) and " << truth_out << '\n';
        }
    } catch (const Failure& f) {
        return f.code;
    }
    return 0;
}
