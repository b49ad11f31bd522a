#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfair/error.hpp"
#include "cfair/experiment.hpp"
#include "cfair/io.hpp"
#include "cfair/parallel.hpp"
#include "cfair/scm.hpp"

using namespace cfair;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitAuditFail = 2;
constexpr int kExitUsage = 64;

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool strict = false;
};

/// --seed wins over CFAIR_SEED; neither gives nullopt.
std::optional<std::uint64_t> resolve_seed(const Globals& g) {
    if (g.seed) return g.seed;
    if (const char* env = std::getenv("CFAIR_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw Error(ErrorCode::Config, std::string("CFAIR_SEED is not an unsigned integer: ") + env);
    }
    return std::nullopt;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string verdict(bool pass) { return pass ? "PASS" : "FAIL"; }

VariableId default_attribute(const CausalModel& model) {
    const auto prot = model.names_with_role(Role::Protected);
    if (prot.size() != 1) throw Error(ErrorCode::Config, "--attribute is required when the model has several protected variables");
    return prot.front();
}

struct McmcFlags {
    std::size_t chains = McmcConfig{}.chains;
    std::size_t burn_in = McmcConfig{}.burn_in;
    std::size_t kept = McmcConfig{}.kept;
    std::size_t thin = McmcConfig{}.thin;

    void attach(CLI::App* cmd) {
        cmd->add_option("--chains", chains, "MCMC chains per record")->capture_default_str();
        cmd->add_option("--burn-in", burn_in, "MCMC burn-in steps")->capture_default_str();
        cmd->add_option("--kept", kept, "draws kept per chain")->capture_default_str();
        cmd->add_option("--thin", thin, "MCMC thinning")->capture_default_str();
    }
    McmcConfig config(std::uint64_t seed) const {
        McmcConfig c;
        c.chains = chains;
        c.burn_in = burn_in;
        c.kept = kept;
        c.thin = thin;
        c.seed = seed;
        c.validate();
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual fairness toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "random seed (overrides CFAIR_SEED)");
    app.add_option("--threads", g.threads, "worker threads, 0 for all cores")->capture_default_str();
    app.add_flag("--strict", g.strict, "exit with code 2 when an audit fails");
    app.fallthrough();

    // validate
    auto* validate = app.add_subcommand("validate", "check a model specification");
    std::string validate_model_path;
    validate->add_option("model", validate_model_path, "model JSON")->required();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "draw samples from a model");
    std::string sim_model;
    std::size_t sim_n = 1000;
    std::string sim_out;
    bool sim_latents = false;
    simulate->add_option("model", sim_model, "model JSON")->required();
    simulate->add_option("--n", sim_n, "number of rows")->capture_default_str();
    simulate->add_option("--out", sim_out, "output CSV")->required();
    simulate->add_flag("--include-latents", sim_latents, "also write background columns");

    // scenario
    auto* scenario = app.add_subcommand("scenario", "generate a synthetic scenario");
    std::string sc_kind;
    std::vector<std::string> sc_params;
    std::size_t sc_n = 1000;
    std::string sc_out;
    bool sc_latents = false;
    scenario->add_option("kind", sc_kind, "red_car | high_crime | university | law_school | loan")->required();
    scenario->add_option("--param", sc_params, "parameter override key=value (repeatable)");
    scenario->add_option("--n", sc_n, "number of rows")->capture_default_str();
    scenario->add_option("--out", sc_out, "output directory")->required();
    scenario->add_flag("--include-latents", sc_latents, "also write background columns");

    // fit
    auto* fit = app.add_subcommand("fit", "fit a predictor recipe");
    std::string fit_model, fit_data, fit_recipe_name, fit_manifest, fit_out;
    std::size_t fit_em = LatentFitOptions{}.iterations;
    McmcFlags fit_mcmc;
    fit->add_option("model", fit_model, "model JSON")->required();
    fit->add_option("data", fit_data, "training CSV")->required();
    fit->add_option("--recipe", fit_recipe_name, "full | unaware | fair_k | fair_add | fair_learning")->required();
    fit->add_option("--manifest", fit_manifest, "input manifest JSON (fair_learning)");
    fit->add_option("--em-iterations", fit_em, "EM iterations (fair_k)")->capture_default_str();
    fit->add_option("--out", fit_out, "output directory")->required();
    fit_mcmc.attach(fit);

    // audit
    auto* audit = app.add_subcommand("audit", "audit a predictor for counterfactual fairness");
    std::string au_predictor, au_model, au_data, au_out, au_attribute, au_criterion = "cf";
    double au_a = 0.0, au_a_prime = 1.0;
    std::vector<std::string> au_paths;
    AuditOptions au_opts;
    McmcFlags au_mcmc;
    audit->add_option("predictor", au_predictor, "predictor JSON")->required();
    audit->add_option("model", au_model, "model JSON")->required();
    audit->add_option("data", au_data, "records CSV")->required();
    audit->add_option("--criterion", au_criterion, "cf | strict | path")
        ->check(CLI::IsMember({"cf", "strict", "path"}))
        ->capture_default_str();
    audit->add_option("--attribute", au_attribute, "protected attribute (default: the only one)");
    audit->add_option("--a", au_a, "factual value")->required();
    audit->add_option("--a-prime", au_a_prime, "counterfactual value")->required();
    audit->add_option("--path", au_paths, "unfair path as comma-separated names (repeatable)");
    audit->add_option("--draws-per-record", au_opts.draws_per_record)->capture_default_str();
    audit->add_option("--max-records", au_opts.max_records)->capture_default_str();
    audit->add_option("--threshold", au_opts.threshold)->capture_default_str();
    audit->add_option("--out", au_out, "output directory")->required();
    au_mcmc.attach(audit);

    // experiment
    auto* experiment = app.add_subcommand("experiment", "run a configured experiment");
    std::string ex_config, ex_out;
    experiment->add_option("config", ex_config, "experiment JSON")->required();
    experiment->add_option("--out", ex_out, "output directory (overrides the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        set_thread_count(g.threads);
        const auto seed = resolve_seed(g);

        if (*validate) {
            const auto model = load_model(validate_model_path);
            const auto result = validate_model(model);
            if (!result.ok()) {
                for (const auto& issue : result.errors) std::cout << to_string(issue.code) << ": " << issue.message << "\n";
                return kExitError;
            }
            std::cout << "ok:";
            for (const auto& v : result.topological_order) std::cout << " " << v;
            std::cout << "\n";
            return 0;
        }

        if (*simulate) {
            const auto model = load_model(sim_model);
            require_valid(model);
            auto data = ancestral_sample(model, sim_n, seed.value_or(0));
            write_csv(sim_out, sim_latents ? data : observed_columns(model, data));
            return 0;
        }

        if (*scenario) {
            ScenarioParams p;
            p.kind = scenario_from_string(sc_kind);
            p.n = sc_n;
            p.seed = seed.value_or(0);
            for (const auto& kv : sc_params) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::Config, "--param expects key=value, got '" + kv + "'");
                try {
                    std::size_t used = 0;
                    const std::string text = kv.substr(eq + 1);
                    p.values[kv.substr(0, eq)] = std::stod(text, &used);
                    if (used != text.size()) throw std::invalid_argument(text);
                } catch (const std::exception&) {
                    throw Error(ErrorCode::Config, "--param value is not a number: '" + kv + "'");
                }
            }
            auto [model, data] = generate(p);
            ensure_dir(sc_out);
            save_model(fs::path(sc_out) / "model.json", model, {{"scenario", p.to_json()}});
            write_csv(fs::path(sc_out) / "data.csv", sc_latents ? data : observed_columns(model, data));
            if (p.kind != ScenarioKind::LawSchool && p.kind != ScenarioKind::Loan)
                write_json(fs::path(sc_out) / "oracle.json", oracle(p).to_json());
            return 0;
        }

        if (*fit) {
            const auto model = load_model(fit_model);
            require_valid(model);
            const auto data = read_csv(fit_data);
            RecipeOptions opts;
            opts.mcmc = fit_mcmc.config(seed.value_or(0));
            opts.latent.iterations = fit_em;
            if (!fit_manifest.empty()) opts.manifest = InputManifest::from_json(read_json(fit_manifest));
            const auto result = fit_recipe(recipe_from_string(fit_recipe_name), data, model, opts);
            ensure_dir(fit_out);
            write_json(fs::path(fit_out) / "predictor.json", result.predictor.to_json());
            save_model(fs::path(fit_out) / "model.json", result.model, {{"fit_meta", result.meta}});
            std::cout << "fitted " << fit_recipe_name << " with inputs:";
            for (const auto& v : result.predictor.inputs()) std::cout << " " << v;
            std::cout << "\n";
            return 0;
        }

        if (*audit) {
            const auto predictor = FairPredictor::from_json(read_json(au_predictor));
            const auto model = load_model(au_model);
            require_valid(model);
            const auto data = read_csv(au_data);
            AuditSpec spec;
            spec.criterion = au_criterion;
            spec.attribute = au_attribute.empty() ? default_attribute(model) : au_attribute;
            spec.a = au_a;
            spec.a_prime = au_a_prime;
            for (const auto& text : au_paths) {
                Path path;
                std::stringstream in(text);
                for (std::string name; std::getline(in, name, ',');) path.push_back(name);
                spec.paths.push_back(path);
            }
            if (spec.criterion == "path" && spec.paths.empty()) throw Error(ErrorCode::Config, "--criterion path needs --path");
            const auto report = run_audit(spec, predictor, model, data, au_mcmc.config(seed.value_or(0)), au_opts);
            ensure_dir(au_out);
            write_json(fs::path(au_out) / "report.json", report.to_json());
            write_text(fs::path(au_out) / "density.csv", report.density_csv());
            std::cout << report.criterion << " " << report.attribute << ": " << verdict(report.pass)
                      << " statistic=" << format_double(report.aggregate) << "\n";
            return !report.pass && g.strict ? kExitAuditFail : 0;
        }

        if (*experiment) {
            if (!fs::exists(ex_config)) throw Error(ErrorCode::Config, "file not found: " + ex_config);
            auto doc = read_json(ex_config);
            if (seed) doc["seed"] = *seed;
            if (!ex_out.empty()) doc["output"] = fs::absolute(ex_out).generic_string();
            const auto config = ExperimentConfig::from_json(doc, fs::path(ex_config).parent_path());
            const auto result = run_experiment_to_disk(config);
            for (const auto& r : result.recipes) {
                std::cout << to_string(r.fit.recipe) << ": test_rmse=" << format_double(r.rmse);
                for (const auto& a : r.audits) std::cout << " " << a.criterion << "[" << a.attribute << "]=" << verdict(a.pass);
                std::cout << "\n";
            }
            return result.any_fail && g.strict ? kExitAuditFail : 0;
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}
