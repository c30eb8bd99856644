#include "coxforge/serialize.hpp"

#include "coxforge/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace coxforge {

namespace {

using Index = Eigen::Index;

template <class T>
T get(const Json& j, const char* key) {
    require(j.is_object() && j.contains(key), ErrorKind::config, std::string("missing JSON field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("bad JSON field '") + key + "': " + e.what());
    }
}

Json vec(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::vector<std::string> strings(const std::vector<InteractionIndex>& v) {
    std::vector<std::string> out;
    for (auto i : v) out.push_back(i.str());
    return out;
}

std::vector<InteractionIndex> indices_from_json(const Json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "all64") return contact_interactions(true);
        if (s == "all32") return contact_interactions(false);
        fail(ErrorKind::config, "unknown index set '" + s + "'");
    }
    require(j.is_array(), ErrorKind::config, "index set must be a list of bitstrings");
    std::vector<InteractionIndex> out;
    for (const auto& e : j) {
        require(e.is_string(), ErrorKind::config, "index set entries must be bitstrings");
        out.push_back(InteractionIndex::parse(e.get<std::string>()));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

Json grid_to_json(const GridSpec& g) {
    return Json{{"nx", g.nx},
                {"ny", g.ny},
                {"crop_x", {g.crop_x0, g.crop_x1}},
                {"crop_y", {g.crop_y0, g.crop_y1}},
                {"x_range", {g.x_range.first, g.x_range.second}},
                {"y_range", {g.y_range.first, g.y_range.second}},
                {"src_w", g.src_w()},
                {"src_h", g.src_h()},
                {"delta_a", g.delta_a()}};
}

GridSpec grid_from_json(const Json& j) {
    GridSpec g;
    g.nx = get<int>(j, "nx");
    g.ny = get<int>(j, "ny");
    const auto cx = get<std::vector<int>>(j, "crop_x");
    const auto cy = get<std::vector<int>>(j, "crop_y");
    require(cx.size() == 2 && cy.size() == 2, ErrorKind::config, "crop ranges need two entries");
    g.crop_x0 = cx[0];
    g.crop_x1 = cx[1];
    g.crop_y0 = cy[0];
    g.crop_y1 = cy[1];
    if (j.contains("x_range")) {
        const auto r = get<std::vector<double>>(j, "x_range");
        require(r.size() == 2, ErrorKind::config, "x_range needs two entries");
        g.x_range = {r[0], r[1]};
    }
    if (j.contains("y_range")) {
        const auto r = get<std::vector<double>>(j, "y_range");
        require(r.size() == 2, ErrorKind::config, "y_range needs two entries");
        g.y_range = {r[0], r[1]};
    }
    g.validate();
    return g;
}

Json dataset_to_json(const Dataset& ds) {
    Json shoes = Json::array();
    for (const auto& s : ds.shoes) {
        shoes.push_back(Json{{"shoe_id", s.shoe_id},
                             {"side", to_string(s.side)},
                             {"threshold", s.binary.threshold},
                             {"total", s.counts.total},
                             {"rejects", s.rejects},
                             {"counts", s.counts.counts},
                             {"contact", s.contact.grid},
                             {"binary", s.binary.grid},
                             {"gradient", s.gradient.grid}});
    }
    return Json{{"format", "coxforge-dataset"}, {"version", 1}, {"grid", grid_to_json(ds.grid)}, {"shoes", shoes}};
}

Dataset dataset_from_json(const Json& j) {
    require(j.is_object() && j.value("format", "") == "coxforge-dataset", ErrorKind::config,
            "not a coxforge dataset file");
    Dataset ds;
    ds.grid = grid_from_json(get<Json>(j, "grid"));
    for (const auto& s : get<Json>(j, "shoes")) {
        ShoeRecord r;
        r.shoe_id = get<std::string>(s, "shoe_id");
        r.side = parse_side(get<std::string>(s, "side"));
        r.contact.shoe_id = r.shoe_id;
        r.contact.grid = get<std::vector<double>>(s, "contact");
        r.binary.grid = get<std::vector<double>>(s, "binary");
        r.binary.threshold = get<double>(s, "threshold");
        r.gradient.grid = get<std::vector<double>>(s, "gradient");
        r.counts.counts = get<std::vector<int>>(s, "counts");
        r.counts.total = 0;
        for (int c : r.counts.counts) r.counts.total += c;
        if (s.contains("total"))
            require(get<long>(s, "total") == r.counts.total, ErrorKind::config,
                    "shoe '" + r.shoe_id + "' total does not match its counts");
        r.rejects = s.value("rejects", 0L);
        ds.shoes.push_back(std::move(r));
    }
    ds.validate();
    return ds;
}

Json spec_to_json(const ModelSpec& spec) {
    return Json{{"name", spec.name},
                {"fixed", strings(spec.fixed)},
                {"sv", strings(spec.sv)},
                {"smooth", spec.smooth},
                {"shoe_effect", spec.shoe_effect},
                {"contact", to_string(spec.contact)}};
}

ModelSpec spec_from_json(const Json& j) {
    if (j.is_string()) return builtin_spec(j.get<std::string>());
    require(j.is_object(), ErrorKind::config, "model spec must be a name or an object");
    ModelSpec s;
    if (j.contains("base")) s = builtin_spec(get<std::string>(j, "base"));
    s.name = j.value("name", s.name.empty() ? std::string("custom") : s.name);
    if (j.contains("fixed")) s.fixed = indices_from_json(j.at("fixed"));
    if (j.contains("sv")) s.sv = indices_from_json(j.at("sv"));
    s.smooth = j.value("smooth", s.smooth);
    s.shoe_effect = j.value("shoe_effect", s.shoe_effect);
    if (j.contains("contact")) s.contact = parse_contact_format(get<std::string>(j, "contact"));
    s.validate();
    return s;
}

Json prior_to_json(const PriorSpec& p) {
    return Json{{"rate_tau_s", p.rate_tau_s},
                {"rate_tau_sm", p.rate_tau_sm},
                {"rate_tau_i", p.rate_tau_i},
                {"fixef_var", p.fixed_effect_variance},
                {"fixed_tau_high_order", p.fixed_tau_high_order},
                {"max_free_sv_precisions", p.max_free_sv_precisions}};
}

PriorSpec prior_from_json(const Json& j, PriorSpec p) {
    require(j.is_object(), ErrorKind::config, "prior overrides must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        require(value.is_number(), ErrorKind::config, "prior override '" + key + "' must be a number");
        if (key == "rate_tau_s") p.rate_tau_s = value.get<double>();
        else if (key == "rate_tau_sm") p.rate_tau_sm = value.get<double>();
        else if (key == "rate_tau_i") p.rate_tau_i = value.get<double>();
        else if (key == "fixef_var") p.fixed_effect_variance = value.get<double>();
        else if (key == "fixed_tau_high_order") p.fixed_tau_high_order = value.get<double>();
        else if (key == "max_free_sv_precisions") p.max_free_sv_precisions = value.get<std::size_t>();
        else fail(ErrorKind::config, "unknown prior override '" + key + "'");
    }
    p.validate();
    return p;
}

Json fit_to_json(const FitResult& f, bool include_metadata) {
    const auto& L = f.layout;
    auto seg = [&](std::size_t off, std::size_t len) {
        return Json{{"mean", vec(f.mean.segment(static_cast<Index>(off), static_cast<Index>(len)))},
                    {"sd", vec(f.sd.segment(static_cast<Index>(off), static_cast<Index>(len)))}};
    };
    Json blocks;
    if (L.shoes) blocks["shoe"] = seg(L.shoe_offset(), L.shoes);
    Json fixed = seg(L.fixed_offset(), L.fixed);
    fixed["index"] = strings(f.spec.fixed);
    blocks["fixed"] = fixed;
    if (L.smooth) blocks["smooth"] = seg(L.smooth_offset(), L.cells);
    Json sv = Json::array();
    for (std::size_t j = 0; j < L.sv; ++j) {
        Json b = seg(L.sv_offset(j), L.cells);
        b["index"] = f.spec.sv[j].str();
        sv.push_back(b);
    }
    blocks["sv"] = sv;

    Json slots = Json::array();
    for (const auto& s : f.slots) slots.push_back(s.label);
    std::vector<bool> sv_fixed;
    for (std::size_t j = 0; j < f.spec.sv.size(); ++j) sv_fixed.push_back(sv_precision_fixed(f.spec, f.prior, j));
    Json psi{{"slots", slots},
             {"log_tau", f.log_psi_map},
             {"tau_shoe", f.psi_map.tau_shoe},
             {"tau_smooth", f.psi_map.tau_smooth},
             {"tau_sv", f.psi_map.tau_sv},
             {"tau_sv_fixed", sv_fixed}};

    Json grid = Json::array();
    for (const auto& p : f.psi_grid)
        grid.push_back(Json{{"log_tau", p.log_tau}, {"log_posterior", p.log_posterior}, {"weight", p.weight}});

    const auto& d = f.diagnostics;
    Json diag{{"converged", d.converged},
              {"newton_iterations", d.newton_iterations},
              {"psi_evaluations", d.psi_evaluations},
              {"grad_norm", d.grad_norm},
              {"log_psi_map", d.log_psi_map},
              {"latent_dim", d.latent_dim},
              {"latent_dim_formula", "|S| + |I| + (|I*| + 1)|A|"},
              {"constrained_dim", d.constrained_dim},
              {"messages", d.messages}};
    // The 1300-shoe, 39 x 91 configuration has a separately quoted parameter count.
    if (L.total() == 15560) diag["quoted_latent_dim"] = 14261;

    Json j{{"format", "coxforge-fit"},
           {"version", 1},
           {"model", spec_to_json(f.spec)},
           {"prior", prior_to_json(f.prior)},
           {"grid", grid_to_json(f.grid)},
           {"strategy", to_string(f.strategy)},
           {"seed", f.seed},
           {"layout",
            {{"shoes", L.shoes},
             {"fixed", L.fixed},
             {"cells", L.cells},
             {"smooth", L.smooth},
             {"sv", L.sv},
             {"total", L.total()},
             {"constrained_dim", L.constrained_dim()}}},
           {"psi", psi},
           {"psi_grid", grid},
           {"blocks", blocks},
           {"diagnostics", diag}};
    if (include_metadata) j["metadata"] = Json{{"runtime_seconds", d.runtime_seconds}};
    return j;
}

FitResult fit_from_json(const Json& j) {
    require(j.is_object() && j.value("format", "") == "coxforge-fit", ErrorKind::config, "not a coxforge fit file");
    FitResult f;
    f.spec = spec_from_json(get<Json>(j, "model"));
    f.prior = prior_from_json(get<Json>(j, "prior"));
    f.grid = grid_from_json(get<Json>(j, "grid"));
    f.strategy = parse_strategy(get<std::string>(j, "strategy"));
    f.seed = get<std::uint64_t>(j, "seed");
    const auto lj = get<Json>(j, "layout");
    f.layout.shoes = get<std::size_t>(lj, "shoes");
    f.layout.fixed = get<std::size_t>(lj, "fixed");
    f.layout.cells = get<std::size_t>(lj, "cells");
    f.layout.smooth = get<bool>(lj, "smooth");
    f.layout.sv = get<std::size_t>(lj, "sv");
    require(f.layout.fixed == f.spec.fixed.size() && f.layout.sv == f.spec.sv.size() &&
                f.layout.smooth == f.spec.smooth && f.layout.cells == f.grid.cells(),
            ErrorKind::config, "fit layout does not match its model spec");

    const auto d = static_cast<Index>(f.layout.total());
    f.mean = Eigen::VectorXd::Zero(d);
    f.sd = Eigen::VectorXd::Zero(d);
    const auto bj = get<Json>(j, "blocks");
    auto load = [&](const Json& b, std::size_t off, std::size_t len) {
        const auto m = get<std::vector<double>>(b, "mean");
        const auto s = get<std::vector<double>>(b, "sd");
        require(m.size() == len && s.size() == len, ErrorKind::config, "fit block has the wrong length");
        f.mean.segment(static_cast<Index>(off), static_cast<Index>(len)) = to_eigen(m);
        f.sd.segment(static_cast<Index>(off), static_cast<Index>(len)) = to_eigen(s);
    };
    if (f.layout.shoes) load(get<Json>(bj, "shoe"), f.layout.shoe_offset(), f.layout.shoes);
    load(get<Json>(bj, "fixed"), f.layout.fixed_offset(), f.layout.fixed);
    if (f.layout.smooth) load(get<Json>(bj, "smooth"), f.layout.smooth_offset(), f.layout.cells);
    const auto sv = get<Json>(bj, "sv");
    require(sv.size() == f.layout.sv, ErrorKind::config, "fit has the wrong number of sv blocks");
    for (std::size_t k = 0; k < f.layout.sv; ++k) load(sv[k], f.layout.sv_offset(k), f.layout.cells);

    f.slots = free_hyperparameters(f.spec, f.prior);
    const auto pj = get<Json>(j, "psi");
    f.log_psi_map = get<std::vector<double>>(pj, "log_tau");
    f.psi_map.tau_shoe = get<double>(pj, "tau_shoe");
    f.psi_map.tau_smooth = get<double>(pj, "tau_smooth");
    f.psi_map.tau_sv = get<std::vector<double>>(pj, "tau_sv");
    for (const auto& p : get<Json>(j, "psi_grid"))
        f.psi_grid.push_back({get<std::vector<double>>(p, "log_tau"), p.at("log_posterior").is_number()
                                                                          ? p.at("log_posterior").get<double>()
                                                                          : -INFINITY,
                              get<double>(p, "weight")});
    const auto dj = get<Json>(j, "diagnostics");
    f.diagnostics.converged = get<bool>(dj, "converged");
    f.diagnostics.newton_iterations = get<int>(dj, "newton_iterations");
    f.diagnostics.psi_evaluations = get<int>(dj, "psi_evaluations");
    f.diagnostics.grad_norm = get<double>(dj, "grad_norm");
    f.diagnostics.log_psi_map = dj.at("log_psi_map").is_number() ? dj.at("log_psi_map").get<double>() : -INFINITY;
    f.diagnostics.latent_dim = get<std::size_t>(dj, "latent_dim");
    f.diagnostics.constrained_dim = get<std::size_t>(dj, "constrained_dim");
    f.diagnostics.messages = get<std::vector<std::string>>(dj, "messages");
    if (j.contains("metadata")) f.diagnostics.runtime_seconds = j["metadata"].value("runtime_seconds", 0.0);
    return f;
}

Json truth_to_json(const SimTruth& t, const ModelSpec& spec) {
    const auto& L = t.layout;
    Json j{{"format", "coxforge-truth"}, {"version", 1}, {"model", spec_to_json(spec)}};
    j["psi"] = Json{{"tau_shoe", t.psi.tau_shoe}, {"tau_smooth", t.psi.tau_smooth}, {"tau_sv", t.psi.tau_sv}};
    auto seg = [&](std::size_t off, std::size_t len) {
        return vec(t.theta.segment(static_cast<Index>(off), static_cast<Index>(len)));
    };
    if (L.shoes) j["shoe"] = seg(L.shoe_offset(), L.shoes);
    j["fixed"] = Json{{"index", strings(spec.fixed)}, {"value", seg(L.fixed_offset(), L.fixed)}};
    if (L.smooth) j["smooth"] = seg(L.smooth_offset(), L.cells);
    Json sv = Json::array();
    for (std::size_t k = 0; k < L.sv; ++k)
        sv.push_back(Json{{"index", spec.sv[k].str()}, {"value", seg(L.sv_offset(k), L.cells)}});
    j["sv"] = sv;
    return j;
}

Json fold_plan_to_json(const FoldPlan& p) {
    Json a = Json::array();
    for (std::size_t i = 0; i < p.shoe_ids.size(); ++i) a.push_back(Json{{"shoe_id", p.shoe_ids[i]}, {"fold", p.assignment[i]}});
    return Json{{"k", p.k}, {"seed", p.seed}, {"assignments", a}};
}

Json pairwise_to_json(const CvResult& r) {
    auto matrix = [](const std::vector<std::vector<double>>& m) {
        Json out = Json::array();
        for (const auto& row : m) {
            Json jr = Json::array();
            for (double v : row) jr.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
            out.push_back(jr);
        }
        return out;
    };
    Json avg = Json::array();
    for (double v : r.average) avg.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    Json failures = Json::array();
    for (const auto& c : r.cells)
        if (!c.ok) failures.push_back(Json{{"fold", c.fold}, {"model", c.model}, {"error", c.error}});
    return Json{{"models", r.models},
                {"folds", r.plan.k},
                {"fold_average", avg},
                {"median_loss_ratio", matrix(r.median_loss_ratio)},
                {"median_loss_ratio_definition", "row model M1, column model M2: 100 * median exp(m(M1) - m(M2))"},
                {"fold_gain", matrix(r.fold_gain)},
                {"fold_gain_definition", "row model M1, column model M2: 100 * exp(mean over folds of P(M2) - P(M1))"},
                {"failures", failures}};
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot read '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, "malformed JSON in '" + path + "': " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    require(static_cast<bool>(out), ErrorKind::io, "write to '" + path + "' failed");
}

}  // namespace coxforge
