#include "coxforge/cv.hpp"

#include "coxforge/error.hpp"
#include "coxforge/log.hpp"
#include "coxforge/parallel.hpp"
#include "coxforge/predict.hpp"
#include "coxforge/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>

namespace coxforge {

std::vector<std::size_t> FoldPlan::members(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldPlan::complement(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] != fold) out.push_back(i);
    return out;
}

std::string pair_key(const std::string& shoe_id) {
    std::string lower(shoe_id);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const std::string token : {"left", "right", "l", "r"}) {
        if (lower.size() <= token.size() || !lower.ends_with(token)) continue;
        std::size_t cut = lower.size() - token.size();
        const char before = lower[cut - 1];
        // A bare letter only counts after a separator or digit ("12L", "12_l").
        if (token.size() == 1 && !(before == '_' || before == '-' || std::isdigit(static_cast<unsigned char>(before))))
            continue;
        if (before == '_' || before == '-') --cut;
        if (cut == 0) continue;
        return lower.substr(0, cut);
    }
    return lower;
}

namespace {

// Unbiased integer in [0, bound) by rejection.
std::uint64_t bounded(Rng& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do v = rng();
    while (v >= limit);
    return v % bound;
}

}  // namespace

FoldPlan make_folds(const std::vector<std::string>& shoe_ids, int k, std::uint64_t seed, bool pair_groups) {
    require(k >= 2, ErrorKind::config, "need at least two folds");
    require(static_cast<std::size_t>(k) <= shoe_ids.size(), ErrorKind::config,
            "more folds (" + std::to_string(k) + ") than shoes (" + std::to_string(shoe_ids.size()) + ")");
    // Groups in order of first appearance.
    std::vector<std::vector<std::size_t>> groups;
    if (pair_groups) {
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < shoe_ids.size(); ++i) {
            const auto [it, fresh] = index.emplace(pair_key(shoe_ids[i]), groups.size());
            if (fresh) groups.emplace_back();
            groups[it->second].push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < shoe_ids.size(); ++i) groups.push_back({i});
    }
    Rng rng(derive_seed(seed, streams::folds));
    for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[bounded(rng, i)]);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.shoe_ids = shoe_ids;
    plan.assignment.assign(shoe_ids.size(), 0);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::size_t fold = g % static_cast<std::size_t>(k);
        if (pair_groups) fold = static_cast<std::size_t>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
        for (auto i : groups[g]) plan.assignment[i] = static_cast<int>(fold);
        sizes[fold] += groups[g].size();
    }
    return plan;
}

const FoldCell& CvResult::cell(int fold, std::size_t model) const {
    return cells.at(static_cast<std::size_t>(fold) * models.size() + model);
}

CvResult run_cv(const Dataset& ds, const std::vector<ModelSpec>& specs, const FoldPlan& plan, const CvOptions& options,
                std::uint64_t seed) {
    ds.validate();
    require(!specs.empty(), ErrorKind::config, "no models to cross-validate");
    require(plan.shoe_ids.size() == ds.shoes.size(), ErrorKind::config, "fold plan does not match the dataset");
    for (std::size_t i = 0; i < ds.shoes.size(); ++i)
        require(plan.shoe_ids[i] == ds.shoes[i].shoe_id, ErrorKind::config,
                "fold plan shoe order does not match the dataset at '" + ds.shoes[i].shoe_id + "'");

    const std::size_t n_models = specs.size();
    const auto k = static_cast<std::size_t>(plan.k);
    CvResult r;
    r.plan = plan;
    for (const auto& s : specs) r.models.push_back(s.name);
    r.cells.resize(k * n_models);
    // metric[model][shoe]
    std::vector<std::vector<std::optional<double>>> metric(n_models, std::vector<std::optional<double>>(ds.shoes.size()));

    parallel_for(k * n_models, options.threads, [&](std::size_t job) {
        const int fold = static_cast<int>(job / n_models);
        const std::size_t m = job % n_models;
        FoldCell& cell = r.cells[job];
        cell.fold = fold;
        cell.model = specs[m].name;
        const auto test = plan.members(fold);
        try {
            GridConfig gc = options.grid;
            gc.threads = 1;
            const FitResult f = fit(ds.subset(plan.complement(fold)), specs[m], options.prior, options.strategy, gc,
                                    derive_seed(seed, job));
            cell.fit_seconds = f.diagnostics.runtime_seconds;
            require(f.diagnostics.converged, ErrorKind::numeric, "fit did not converge");
            double sum = 0.0;
            for (auto i : test) {
                const auto& shoe = ds.shoes[i];
                const auto q = predictive_q(f, shoe);
                metric[m][i] = shoe_metric(shoe.counts.counts, q.q, ds.grid);
                if (metric[m][i]) {
                    sum += *metric[m][i];
                    ++cell.n_shoes;
                } else {
                    ++cell.n_excluded;
                }
            }
            cell.mean_metric = cell.n_shoes ? sum / static_cast<double>(cell.n_shoes)
                                            : std::numeric_limits<double>::quiet_NaN();
        } catch (const Error& e) {
            cell.ok = false;
            cell.error = e.what();
            cell.mean_metric = std::numeric_limits<double>::quiet_NaN();
            for (auto i : test) metric[m][i].reset();
        }
        log(LogLevel::info, "fold " + std::to_string(fold) + " model " + cell.model + ": " +
                                (cell.ok ? std::to_string(cell.mean_metric) : "failed: " + cell.error));
    });

    for (std::size_t i = 0; i < ds.shoes.size(); ++i)
        for (std::size_t m = 0; m < n_models; ++m)
            r.shoes.push_back({plan.assignment[i], specs[m].name, ds.shoes[i].shoe_id, ds.shoes[i].counts.total,
                               metric[m][i]});

    r.average.assign(n_models, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t m = 0; m < n_models; ++m) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t f = 0; f < k; ++f) {
            const auto& c = r.cell(static_cast<int>(f), m);
            if (c.ok && c.n_shoes) {
                s += c.mean_metric;
                ++n;
            }
        }
        if (n) r.average[m] = s / static_cast<double>(n);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.median_loss_ratio.assign(n_models, std::vector<double>(n_models, nan));
    r.fold_gain.assign(n_models, std::vector<double>(n_models, nan));
    for (std::size_t a = 0; a < n_models; ++a) {
        for (std::size_t b = 0; b < n_models; ++b) {
            std::vector<double> m1, m2;
            for (std::size_t i = 0; i < ds.shoes.size(); ++i)
                if (metric[a][i] && metric[b][i]) {
                    m1.push_back(*metric[a][i]);
                    m2.push_back(*metric[b][i]);
                }
            if (!m1.empty()) r.median_loss_ratio[a][b] = median_loss_ratio(m1, m2);
            std::vector<double> p1, p2;
            for (std::size_t f = 0; f < k; ++f) {
                const auto& ca = r.cell(static_cast<int>(f), a);
                const auto& cb = r.cell(static_cast<int>(f), b);
                if (ca.ok && cb.ok && ca.n_shoes && cb.n_shoes) {
                    p1.push_back(ca.mean_metric);
                    p2.push_back(cb.mean_metric);
                }
            }
            if (!p1.empty()) r.fold_gain[a][b] = fold_gain(p1, p2);
        }
    }
    return r;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path + "'");
    out << std::setprecision(17);
    return out;
}

}  // namespace

void write_cv_table(const std::string& path, const CvResult& r) {
    auto out = open_out(path);
    out << "fold,model,mean_metric,n_shoes\n";
    for (const auto& c : r.cells) {
        out << c.fold << ',' << c.model << ',';
        if (c.ok && c.n_shoes) out << c.mean_metric;
        else out << "NA";
        out << ',' << c.n_shoes << '\n';
    }
    for (std::size_t m = 0; m < r.models.size(); ++m) {
        std::size_t n = 0;
        for (int f = 0; f < r.plan.k; ++f) n += r.cell(f, m).n_shoes;
        out << "average," << r.models[m] << ',';
        if (std::isfinite(r.average[m])) out << r.average[m];
        else out << "NA";
        out << ',' << n << '\n';
    }
}

void write_per_shoe(const std::string& path, const CvResult& r) {
    auto out = open_out(path);
    out << "fold,model,shoe_id,n_accidentals,metric\n";
    for (const auto& s : r.shoes) {
        out << s.fold << ',' << s.model << ',' << s.shoe_id << ',' << s.n_accidentals << ',';
        if (s.metric) out << *s.metric;
        else out << "NA";
        out << '\n';
    }
}

}  // namespace coxforge
