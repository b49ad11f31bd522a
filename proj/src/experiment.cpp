#include "cfair/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "cfair/error.hpp"
#include "cfair/io.hpp"
#include "cfair/rng.hpp"
#include "cfair/scm.hpp"

namespace cfair {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kSplitTag = name_hash("split");
constexpr std::uint64_t kScenarioTag = name_hash("scenario");
constexpr std::size_t kMaxTableRows = 4096;

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::Config, message); }

bool is_binary(const std::vector<double>& values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

std::vector<VariableId> protected_in(const CausalModel& model) { return model.names_with_role(Role::Protected); }

/// Variables that reach `of` by directed paths, `of` included.
std::set<VariableId> ancestors(const CausalModel& model, const std::vector<VariableId>& of) {
    std::set<VariableId> out;
    std::vector<VariableId> stack(of.begin(), of.end());
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        if (!out.insert(v).second) continue;
        if (const auto* eq = model.equation_for(v)) stack.insert(stack.end(), eq->parents.begin(), eq->parents.end());
    }
    return out;
}

/// All joint values of the given finite domains, first variable slowest.
std::vector<std::vector<double>> product(const std::vector<const Domain*>& domains) {
    std::vector<std::vector<double>> rows{{}};
    for (const auto* d : domains) {
        std::vector<std::vector<double>> next;
        for (const auto& r : rows) {
            for (double v : d->values) {
                auto e = r;
                e.push_back(v);
                next.push_back(std::move(e));
            }
        }
        rows = std::move(next);
        if (rows.size() > kMaxTableRows) throw Error(ErrorCode::InvalidModel, "protected value table is too large");
    }
    return rows;
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        config_error(std::string("field '") + key + "': " + e.what());
    }
}

void check_keys(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
    if (!doc.is_object()) config_error(where + " must be an object");
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
    std::filesystem::path p(text);
    return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

std::string_view to_string(Recipe recipe) {
    switch (recipe) {
        case Recipe::Full: return "full";
        case Recipe::Unaware: return "unaware";
        case Recipe::FairK: return "fair_k";
        case Recipe::FairAdd: return "fair_add";
        case Recipe::FairLearning: return "fair_learning";
    }
    return "full";
}

Recipe recipe_from_string(std::string_view text) {
    for (auto r : {Recipe::Full, Recipe::Unaware, Recipe::FairK, Recipe::FairAdd, Recipe::FairLearning}) {
        if (to_string(r) == text) return r;
    }
    config_error("unknown recipe '" + std::string(text) + "'");
}

Head head_for(const CausalModel& model, const VariableId& outcome) {
    auto levels = model.variable(outcome).domain.values;
    std::sort(levels.begin(), levels.end());
    return levels == std::vector<double>{0.0, 1.0} ? Head::Logistic : Head::Linear;
}

CausalModel additive_residual_model(const Dataset& train, const CausalModel& model) {
    const auto prot = protected_in(model);
    if (prot.empty()) throw Error(ErrorCode::InvalidModel, "model has no protected variable");
    const auto desc = descendants(model, std::set<VariableId>(prot.begin(), prot.end()));
    std::vector<VariableId> targets;
    for (const auto& v : model.variables) {
        if (v.role == Role::Observed && desc.count(v.name) && train.column_index(v.name)) targets.push_back(v.name);
    }
    if (targets.empty()) throw Error(ErrorCode::InvalidModel, "no observed descendant of the protected variables");
    for (const auto& p : prot) {
        if (!train.column_index(p)) throw Error(ErrorCode::UnknownVariable, "data has no column '" + p + "'");
    }
    const auto fit = level3_fit(train, targets, prot, &model);

    std::vector<const Domain*> domains;
    std::size_t finite = 0;
    for (const auto& p : prot) {
        domains.push_back(&model.variable(p).domain);
        finite += domains.back()->finite() ? 1 : 0;
    }
    if (finite != 0 && finite != prot.size())
        throw Error(ErrorCode::InvalidModel, "additive residual model needs protected variables that are all "
                                             "categorical or all real-valued");

    CausalModel out;
    const auto keep = ancestors(model, prot);
    for (const auto& v : model.variables) {
        if (!keep.count(v.name)) continue;
        out.variables.push_back(v);
        if (auto it = model.priors.find(v.name); it != model.priors.end()) out.priors[v.name] = it->second;
    }
    for (const auto& eq : model.equations) {
        if (keep.count(eq.child)) out.equations.push_back(eq);
    }

    const auto joint = finite ? product(domains) : std::vector<std::vector<double>>{};
    std::vector<double> encoded(fit.encoding.width());
    for (const auto& t : targets) {
        const auto& f = fit.fits.at(t);
        const VariableId eps = "eps_" + t;
        out.variables.push_back(Variable{eps, Role::Background, Domain::real()});
        out.priors[eps] = NormalPrior{0.0, std::max(f.residual_std, 1e-9)};
        if (finite) {
            const VariableId fitted = "fitted_" + t;
            DeterministicTable table;
            for (const auto& values : joint) {
                fit.encoding.encode(values, encoded);
                table.entries[values] = Eigen::Map<const Eigen::VectorXd>(encoded.data(), f.weights.size()).dot(f.weights);
            }
            out.variables.push_back(Variable{fitted, Role::Observed, Domain::real()});
            out.equations.push_back(StructuralEquation{fitted, prot, table, {}});
            out.variables.push_back(Variable{t, Role::Observed, Domain::real()});
            out.equations.push_back(StructuralEquation{t, {fitted, eps}, LinearGaussian{0.0, {1.0, 1.0}, 0.0}, {}});
        } else {
            std::vector<double> w(f.weights.data() + 1, f.weights.data() + f.weights.size());
            w.push_back(1.0);
            auto parents = prot;
            parents.push_back(eps);
            out.variables.push_back(Variable{t, Role::Observed, Domain::real()});
            out.equations.push_back(StructuralEquation{t, parents, LinearGaussian{f.weights[0], w, 0.0}, {}});
        }
    }
    require_valid(out);
    return out;
}

RecipeResult fit_recipe(Recipe recipe, const Dataset& train, const CausalModel& model, const RecipeOptions& options) {
    const VariableId outcome = outcome_of(model);
    if (!train.column_index(outcome)) throw Error(ErrorCode::UnknownVariable, "data has no outcome column '" + outcome + "'");
    const Head head = head_for(model, outcome);
    RecipeResult r;
    r.recipe = recipe;
    r.model = model;
    switch (recipe) {
        case Recipe::Full:
        case Recipe::Unaware:
            r.predictor = baseline_fit(train, model, recipe == Recipe::Full ? BaselineKind::Full : BaselineKind::Unaware,
                                       outcome, head);
            break;
        case Recipe::FairK: {
            auto fit = fit_level2_latent(train, model, options.mcmc, options.latent);
            InputManifest manifest;
            manifest.background_inputs = {fit.latent};
            for (const auto& v : level1_inputs(fit.model).observable_inputs) {
                if (v != outcome && train.column_index(v)) manifest.observable_inputs.push_back(v);
            }
            r.predictor = fair_learning(train, fit.model, manifest, head, options.mcmc, outcome);
            r.meta = fit.meta();
            r.model = std::move(fit.model);
            break;
        }
        case Recipe::FairAdd: {
            r.model = additive_residual_model(train, model);
            InputManifest manifest;
            for (const auto& v : r.model.variables) {
                if (v.role == Role::Background && v.name.rfind("eps_", 0) == 0) manifest.background_inputs.push_back(v.name);
            }
            for (const auto& v : level1_inputs(r.model).observable_inputs) {
                if (train.column_index(v)) manifest.observable_inputs.push_back(v);
            }
            r.predictor = fair_learning(train, r.model, manifest, head, options.mcmc, outcome);
            break;
        }
        case Recipe::FairLearning:
            if (!options.manifest) config_error("fair_learning recipe needs an input manifest");
            r.predictor = fair_learning(train, model, *options.manifest, head, options.mcmc, outcome);
            break;
    }
    r.predictor.recipe = std::string(to_string(recipe));
    return r;
}

std::vector<double> predict_recipe(const RecipeResult& result, const Dataset& data, const McmcConfig& config) {
    if (result.predictor.manifest.background_inputs.empty()) return result.predictor.predict(data);
    return fair_predict_all(result.predictor, result.model, data, config);
}

Split train_test_split(const Dataset& data, const VariableId& outcome, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) config_error("test fraction must lie in (0, 1)");
    const auto& y = data.column(outcome);
    std::vector<std::vector<std::size_t>> strata(1);
    if (is_binary(y)) {
        strata.assign(2, {});
        for (std::size_t i = 0; i < y.size(); ++i) strata[static_cast<std::size_t>(y[i])].push_back(i);
    } else {
        strata[0].resize(y.size());
        std::iota(strata[0].begin(), strata[0].end(), std::size_t{0});
    }
    Split s;
    for (auto& rows : strata) {
        std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
        for (auto r : rows) keyed.emplace_back(combine_keys(combine_keys(seed, kSplitTag), r), r);
        std::sort(keyed.begin(), keyed.end());
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
        for (std::size_t i = 0; i < keyed.size(); ++i) (i < n_test ? s.test : s.train).push_back(keyed[i].second);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

double rmse(std::span<const double> predictions, std::span<const double> truth) {
    if (predictions.size() != truth.size() || truth.empty())
        throw Error(ErrorCode::DimensionMismatch, "rmse needs equal, non-empty inputs");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += (predictions[i] - truth[i]) * (predictions[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(truth.size()));
}

double log_loss(std::span<const double> probabilities, std::span<const double> labels) {
    if (probabilities.size() != labels.size() || labels.empty())
        throw Error(ErrorCode::DimensionMismatch, "log loss needs equal, non-empty inputs");
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(probabilities[i], 1e-12, 1.0 - 1e-12);
        s -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log1p(-p);
    }
    return s / static_cast<double>(labels.size());
}

FairnessReport run_audit(const AuditSpec& spec, const FairPredictor& predictor, const CausalModel& model,
                         const Dataset& data, const McmcConfig& config, const AuditOptions& options) {
    if (spec.criterion == "cf")
        return cf_fairness_test(predictor, model, data, spec.attribute, spec.a, spec.a_prime, config, options);
    if (spec.criterion == "strict")
        return strict_cf_check(predictor, model, data, spec.attribute, spec.a, spec.a_prime, config, options);
    if (spec.criterion == "path")
        return path_cf_test(predictor, model, data, spec.paths, spec.attribute, spec.a, spec.a_prime, config, options);
    config_error("unknown audit criterion '" + spec.criterion + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const std::filesystem::path& base) {
    check_keys(doc, {"model", "data", "scenario", "recipe", "recipes", "audits", "seed", "test_fraction",
                     "audit_records", "mcmc", "latent", "audit", "output"},
               "experiment config");
    ExperimentConfig c;
    c.seed = get_or<std::uint64_t>(doc, "seed", 0);
    if (doc.contains("model")) c.model_path = resolve(base, get_or<std::string>(doc, "model", ""));
    if (doc.contains("data")) c.data_path = resolve(base, get_or<std::string>(doc, "data", ""));
    if (doc.contains("scenario")) {
        const auto& s = doc.at("scenario");
        check_keys(s, {"kind", "n", "seed", "params"}, "scenario");
        ScenarioParams p;
        p.kind = scenario_from_string(get_or<std::string>(s, "kind", ""));
        p.n = get_or<std::size_t>(s, "n", 1000);
        p.seed = get_or<std::uint64_t>(s, "seed", combine_keys(c.seed, kScenarioTag));
        p.values = get_or<std::map<std::string, double>>(s, "params", {});
        p.resolved();
        c.scenario = p;
    }
    if (c.scenario && (c.model_path || c.data_path)) config_error("give either a scenario or model and data files");
    if (!c.scenario && !(c.model_path && c.data_path)) config_error("experiment needs a scenario or model and data files");
    for (const auto* path : {&c.model_path, &c.data_path}) {
        if (*path && !std::filesystem::exists(**path)) config_error("file not found: " + (*path)->string());
    }

    json recipes = doc.contains("recipes") ? doc.at("recipes") : json::array();
    if (doc.contains("recipe")) recipes.push_back(doc.at("recipe"));
    if (!recipes.is_array() || recipes.empty()) config_error("experiment needs at least one recipe");
    for (const auto& r : recipes) {
        if (r.is_string()) {
            const auto kind = recipe_from_string(r.get<std::string>());
            if (kind == Recipe::FairLearning) config_error("fair_learning recipe needs a manifest");
            c.recipes.emplace_back(kind, std::nullopt);
            continue;
        }
        check_keys(r, {"recipe", "manifest"}, "recipe entry");
        const auto kind = recipe_from_string(get_or<std::string>(r, "recipe", ""));
        std::optional<InputManifest> manifest;
        if (r.contains("manifest")) {
            try {
                manifest = InputManifest::from_json(r.at("manifest"));
            } catch (const json::exception& e) {
                config_error(std::string("manifest: ") + e.what());
            }
        }
        if (kind == Recipe::FairLearning && !manifest) config_error("fair_learning recipe needs a manifest");
        c.recipes.emplace_back(kind, std::move(manifest));
    }

    if (doc.contains("audits")) {
        if (!doc.at("audits").is_array()) config_error("audits must be an array");
        for (const auto& a : doc.at("audits")) {
            check_keys(a, {"criterion", "attribute", "a", "a_prime", "paths"}, "audit entry");
            AuditSpec s;
            s.criterion = get_or<std::string>(a, "criterion", "cf");
            if (s.criterion != "cf" && s.criterion != "strict" && s.criterion != "path")
                config_error("unknown audit criterion '" + s.criterion + "'");
            s.attribute = get_or<std::string>(a, "attribute", "");
            if (!a.contains("a") || !a.contains("a_prime")) config_error("audit entry needs a and a_prime");
            s.a = get_or<double>(a, "a", 0.0);
            s.a_prime = get_or<double>(a, "a_prime", 0.0);
            s.paths = get_or<PathSet>(a, "paths", {});
            if (s.criterion == "path" && s.paths.empty()) config_error("path audit needs paths");
            c.audits.push_back(std::move(s));
        }
    }

    c.test_fraction = get_or<double>(doc, "test_fraction", 0.2);
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) config_error("test_fraction must lie in (0, 1)");
    c.audit_records = get_or<std::string>(doc, "audit_records", "test");
    if (c.audit_records != "test" && c.audit_records != "train") config_error("audit_records must be test or train");

    c.mcmc.seed = c.seed;
    if (doc.contains("mcmc")) {
        const auto& m = doc.at("mcmc");
        check_keys(m, {"chains", "burn_in", "kept", "thin", "proposal_std", "seed"}, "mcmc");
        c.mcmc.chains = get_or(m, "chains", c.mcmc.chains);
        c.mcmc.burn_in = get_or(m, "burn_in", c.mcmc.burn_in);
        c.mcmc.kept = get_or(m, "kept", c.mcmc.kept);
        c.mcmc.thin = get_or(m, "thin", c.mcmc.thin);
        c.mcmc.proposal_std = get_or(m, "proposal_std", c.mcmc.proposal_std);
        c.mcmc.seed = get_or(m, "seed", c.mcmc.seed);
    }
    try {
        c.mcmc.validate();
    } catch (const Error& e) {
        config_error(std::string("mcmc: ") + e.what());
    }
    if (doc.contains("latent")) {
        const auto& l = doc.at("latent");
        check_keys(l, {"iterations", "inner_steps", "inner_kept"}, "latent");
        c.latent.iterations = get_or(l, "iterations", c.latent.iterations);
        c.latent.inner_steps = get_or(l, "inner_steps", c.latent.inner_steps);
        c.latent.inner_kept = get_or(l, "inner_kept", c.latent.inner_kept);
    }
    if (doc.contains("audit")) {
        const auto& a = doc.at("audit");
        check_keys(a, {"draws_per_record", "max_records", "threshold", "ks_tolerance", "density_per_record"}, "audit");
        c.audit.draws_per_record = get_or(a, "draws_per_record", c.audit.draws_per_record);
        c.audit.max_records = get_or(a, "max_records", c.audit.max_records);
        c.audit.threshold = get_or(a, "threshold", c.audit.threshold);
        c.audit.ks_tolerance = get_or(a, "ks_tolerance", c.audit.ks_tolerance);
        c.audit.density_per_record = get_or(a, "density_per_record", c.audit.density_per_record);
    }
    if (c.audit.draws_per_record == 0 || c.audit.max_records == 0) config_error("audit sizes must be positive");
    c.output = resolve(base, get_or<std::string>(doc, "output", "cfair-out"));
    return c;
}

json ExperimentConfig::to_json() const {
    json doc;
    if (model_path) doc["model"] = model_path->generic_string();
    if (data_path) doc["data"] = data_path->generic_string();
    if (scenario) doc["scenario"] = scenario->to_json();
    doc["recipes"] = json::array();
    for (const auto& [r, manifest] : recipes) {
        json e{{"recipe", to_string(r)}};
        if (manifest) e["manifest"] = manifest->to_json();
        doc["recipes"].push_back(e);
    }
    doc["audits"] = json::array();
    for (const auto& a : audits) {
        json e{{"criterion", a.criterion}, {"attribute", a.attribute}, {"a", a.a}, {"a_prime", a.a_prime}};
        if (!a.paths.empty()) e["paths"] = a.paths;
        doc["audits"].push_back(e);
    }
    doc["seed"] = seed;
    doc["test_fraction"] = test_fraction;
    doc["audit_records"] = audit_records;
    doc["mcmc"] = {{"chains", mcmc.chains}, {"burn_in", mcmc.burn_in},           {"kept", mcmc.kept},
                   {"thin", mcmc.thin},     {"proposal_std", mcmc.proposal_std}, {"seed", mcmc.seed}};
    doc["latent"] = {{"iterations", latent.iterations}, {"inner_steps", latent.inner_steps},
                     {"inner_kept", latent.inner_kept}};
    doc["audit"] = {{"draws_per_record", audit.draws_per_record}, {"max_records", audit.max_records},
                    {"threshold", audit.threshold},               {"ks_tolerance", audit.ks_tolerance},
                    {"density_per_record", audit.density_per_record}};
    doc["output"] = output.generic_string();
    return doc;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    CausalModel model;
    Dataset data;
    if (config.scenario) {
        auto [m, d] = generate(*config.scenario);
        data = observed_columns(m, d);
        model = std::move(m);
    } else {
        model = load_model(*config.model_path);
        data = read_csv(*config.data_path);
    }
    require_valid(model);
    const VariableId outcome = outcome_of(model);
    if (!data.column_index(outcome)) throw Error(ErrorCode::UnknownVariable, "data has no outcome column '" + outcome + "'");

    auto audits = config.audits;
    for (auto& a : audits) {
        if (!a.attribute.empty()) continue;
        const auto prot = protected_in(model);
        if (prot.size() != 1) config_error("audit entry needs an attribute when the model has several protected variables");
        a.attribute = prot.front();
    }

    const std::uint64_t split_seed = combine_keys(config.seed, kSplitTag);
    const auto split = train_test_split(data, outcome, config.test_fraction, split_seed);
    const Dataset train = data.select_rows(split.train);
    const Dataset test = data.select_rows(split.test);
    const Dataset& audited = config.audit_records == "train" ? train : test;
    const bool binary = is_binary(data.column(outcome));

    ExperimentResult out;
    json& report = out.report;
    report["config"] = config.to_json();
    report["seeds"] = {{"seed", config.seed}, {"split", split_seed}, {"mcmc", config.mcmc.seed}};
    if (config.scenario) report["seeds"]["scenario"] = config.scenario->seed;
    report["outcome"] = outcome;
    report["split"] = {{"train", split.train.size()}, {"test", split.test.size()}, {"stratified", binary}};
    report["recipes"] = json::array();

    for (const auto& [recipe, manifest] : config.recipes) {
        RecipeOptions opts;
        opts.mcmc = config.mcmc;
        opts.latent = config.latent;
        opts.manifest = manifest;
        RecipeOutcome ro;
        ro.fit = fit_recipe(recipe, train, model, opts);
        const auto pred = predict_recipe(ro.fit, test, config.mcmc);
        const auto& truth = test.column(outcome);
        ro.rmse = rmse(pred, truth);
        if (binary) ro.log_loss = log_loss(pred, truth);
        json entry{{"recipe", to_string(recipe)}, {"predictor", ro.fit.predictor.to_json()}, {"fit_meta", ro.fit.meta},
                   {"test_rmse", ro.rmse}};
        if (binary) entry["test_log_loss"] = ro.log_loss;
        entry["audits"] = json::array();
        for (std::size_t i = 0; i < audits.size(); ++i) {
            auto r = run_audit(audits[i], ro.fit.predictor, ro.fit.model, audited, config.mcmc, config.audit);
            out.any_fail = out.any_fail || !r.pass;
            auto j = r.to_json();
            j["density_file"] = "density_" + std::string(to_string(recipe)) + "_" + std::to_string(i) + "_" +
                                audits[i].criterion + "_" + audits[i].attribute + ".csv";
            entry["audits"].push_back(j);
            ro.audits.push_back(std::move(r));
        }
        report["recipes"].push_back(entry);
        out.recipes.push_back(std::move(ro));
    }
    return out;
}

ExperimentResult run_experiment_to_disk(const ExperimentConfig& config) {
    auto result = run_experiment(config);
    std::error_code ec;
    std::filesystem::create_directories(config.output, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create directory " + config.output.string() + ": " + ec.message());

    // one row per recipe; every field numeric so the file reads back with parse_csv
    Dataset metrics;
    const bool binary = !result.recipes.empty() && !std::isnan(result.recipes.front().log_loss);
    std::vector<std::string> columns{"recipe_id", "test_rmse"};
    if (binary) columns.push_back("test_log_loss");
    for (std::size_t i = 0; i < config.audits.size(); ++i) {
        const auto& a = result.recipes.empty() ? FairnessReport{} : result.recipes.front().audits[i];
        const auto tag = "audit" + std::to_string(i) + "_" + a.criterion + "_" + a.attribute;
        for (const char* suffix : {"_statistic", "_mean_abs_shift", "_pass"}) columns.push_back(tag + suffix);
    }
    metrics.columns = columns;
    metrics.data.assign(columns.size(), {});
    for (std::size_t k = 0; k < result.recipes.size(); ++k) {
        const auto& ro = result.recipes[k];
        std::vector<double> row{static_cast<double>(ro.fit.recipe), ro.rmse};
        if (binary) row.push_back(ro.log_loss);
        const auto& entries = result.report["recipes"][k]["audits"];
        for (std::size_t i = 0; i < ro.audits.size(); ++i) {
            const auto& a = ro.audits[i];
            row.insert(row.end(), {a.aggregate, a.mean_abs_shift(), a.pass ? 1.0 : 0.0});
            write_text(config.output / entries[i]["density_file"].get<std::string>(), a.density_csv());
        }
        for (std::size_t c = 0; c < row.size(); ++c) metrics.data[c].push_back(row[c]);
    }
    write_csv(config.output / "metrics.csv", metrics);
    write_json(config.output / "report.json", result.report);
    return result;
}

}  // namespace cfair
