#include <map>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfair/counterfactual.hpp"
#include "cfair/error.hpp"
#include "cfair/experiment.hpp"
#include "cfair/io.hpp"
#include "cfair/parallel.hpp"
#include "cfair/scm.hpp"

namespace py = pybind11;
using namespace cfair;

namespace {

using Columns = std::map<std::string, std::vector<double>>;

Dataset to_dataset(const Columns& columns) {
    Dataset d;
    for (const auto& [name, values] : columns) d.add_column(name, values);
    return d;
}

Columns to_columns(const Dataset& d) {
    Columns out;
    for (std::size_t c = 0; c < d.columns.size(); ++c) out[d.columns[c]] = d.data[c];
    return out;
}

CausalModel parse_model(const std::string& text) { return model_from_json(Json::parse(text)); }

McmcConfig make_mcmc(std::uint64_t seed, std::size_t chains, std::size_t kept, std::size_t burn_in, std::size_t thin) {
    McmcConfig c;
    c.seed = seed;
    c.chains = chains;
    c.kept = kept;
    c.burn_in = burn_in;
    c.thin = thin;
    c.validate();
    return c;
}

ScenarioParams make_scenario(const std::string& kind, const std::map<std::string, double>& params, std::size_t n,
                             std::uint64_t seed) {
    ScenarioParams p;
    p.kind = scenario_from_string(kind);
    p.values = params;
    p.n = n;
    p.seed = seed;
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Counterfactual fairness toolkit";
    py::register_exception<Error>(m, "CfairError", PyExc_RuntimeError);

    m.def("set_threads", &set_thread_count, py::arg("n"));

    m.def(
        "validate_model",
        [](const std::string& model) {
            std::vector<std::pair<std::string, std::string>> issues;
            for (const auto& e : validate_model(parse_model(model)).errors)
                issues.emplace_back(std::string(to_string(e.code)), e.message);
            return issues;
        },
        py::arg("model"));

    m.def(
        "ancestral_sample",
        [](const std::string& model, std::size_t n, std::uint64_t seed) {
            return to_columns(ancestral_sample(parse_model(model), n, seed));
        },
        py::arg("model"), py::arg("n"), py::arg("seed") = 0);

    m.def(
        "generate_scenario",
        [](const std::string& kind, const std::map<std::string, double>& params, std::size_t n, std::uint64_t seed,
           bool include_latents) {
            auto [model, data] = generate(make_scenario(kind, params, n, seed));
            return std::make_pair(model_to_json(model).dump(),
                                  to_columns(include_latents ? data : observed_columns(model, data)));
        },
        py::arg("kind"), py::arg("params") = std::map<std::string, double>{}, py::arg("n") = 1000, py::arg("seed") = 0,
        py::arg("include_latents") = false);

    m.def(
        "oracle",
        [](const std::string& kind, const std::map<std::string, double>& params) {
            return oracle(make_scenario(kind, params, 1, 0)).to_json().dump();
        },
        py::arg("kind"), py::arg("params") = std::map<std::string, double>{});

    m.def(
        "counterfactual_sample",
        [](const std::string& model, const std::map<std::string, double>& evidence,
           const std::map<std::string, double>& intervention, std::size_t n_draws, std::uint64_t seed) {
            McmcConfig c;
            c.seed = seed;
            Evidence ev(evidence.begin(), evidence.end());
            Assignment as(intervention.begin(), intervention.end());
            return to_columns(counterfactual_sample(parse_model(model), ev, as, n_draws, c));
        },
        py::arg("model"), py::arg("evidence"), py::arg("intervention"), py::arg("n_draws") = 1000, py::arg("seed") = 0);

    m.def(
        "fit_recipe",
        [](const std::string& recipe, const std::string& model, const Columns& data,
           const std::optional<std::string>& manifest, std::uint64_t seed, std::size_t chains, std::size_t kept,
           std::size_t burn_in, std::size_t thin, std::size_t em_iterations) {
            RecipeOptions opts;
            opts.mcmc = make_mcmc(seed, chains, kept, burn_in, thin);
            opts.latent.iterations = em_iterations;
            if (manifest) opts.manifest = InputManifest::from_json(Json::parse(*manifest));
            const auto r = fit_recipe(recipe_from_string(recipe), to_dataset(data), parse_model(model), opts);
            Json fitted = model_to_json(r.model);
            fitted["fit_meta"] = r.meta;
            return std::make_pair(r.predictor.to_json().dump(), fitted.dump());
        },
        py::arg("recipe"), py::arg("model"), py::arg("data"), py::arg("manifest") = std::nullopt, py::arg("seed") = 0,
        py::arg("chains") = 2, py::arg("kept") = 100, py::arg("burn_in") = 500, py::arg("thin") = 5,
        py::arg("em_iterations") = 50);

    m.def(
        "predict",
        [](const std::string& predictor, const std::string& model, const Columns& data, std::uint64_t seed,
           std::size_t chains, std::size_t kept, std::size_t burn_in, std::size_t thin) {
            RecipeResult r;
            r.predictor = FairPredictor::from_json(Json::parse(predictor));
            r.model = parse_model(model);
            return predict_recipe(r, to_dataset(data), make_mcmc(seed, chains, kept, burn_in, thin));
        },
        py::arg("predictor"), py::arg("model"), py::arg("data"), py::arg("seed") = 0, py::arg("chains") = 2,
        py::arg("kept") = 100, py::arg("burn_in") = 500, py::arg("thin") = 5);

    m.def(
        "audit",
        [](const std::string& predictor, const std::string& model, const Columns& data, const std::string& attribute,
           double a, double a_prime, const std::string& criterion, const std::vector<std::vector<std::string>>& paths,
           std::size_t draws_per_record, std::size_t max_records, double threshold, std::uint64_t seed) {
            AuditSpec spec{criterion, attribute, a, a_prime, paths};
            AuditOptions opts;
            opts.draws_per_record = draws_per_record;
            opts.max_records = max_records;
            opts.threshold = threshold;
            McmcConfig c;
            c.seed = seed;
            const auto report = run_audit(spec, FairPredictor::from_json(Json::parse(predictor)), parse_model(model),
                                          to_dataset(data), c, opts);
            Json j = report.to_json();
            j["factual_density"] = report.factual_density;
            j["counterfactual_density"] = report.counterfactual_density;
            return j.dump();
        },
        py::arg("predictor"), py::arg("model"), py::arg("data"), py::arg("attribute"), py::arg("a"), py::arg("a_prime"),
        py::arg("criterion") = "cf", py::arg("paths") = std::vector<std::vector<std::string>>{},
        py::arg("draws_per_record") = 1000, py::arg("max_records") = 200, py::arg("threshold") = 0.05,
        py::arg("seed") = 0);

    m.def(
        "run_experiment",
        [](const std::string& config, const std::string& base_dir) {
            const auto cfg = ExperimentConfig::from_json(Json::parse(config), base_dir);
            return run_experiment_to_disk(cfg).report.dump();
        },
        py::arg("config"), py::arg("base_dir") = "");
}
