#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfair/estimators.hpp"
#include "cfair/fairlearn.hpp"
#include "cfair/metrics.hpp"
#include "cfair/scenarios.hpp"

namespace cfair {

enum class Recipe { Full, Unaware, FairK, FairAdd, FairLearning };

std::string_view to_string(Recipe recipe);
/// Throws Config on an unknown name.
Recipe recipe_from_string(std::string_view text);

struct RecipeResult {
    Recipe recipe = Recipe::Full;
    FairPredictor predictor;
    /// Model in which the predictor's inputs are defined: the input model, the
    /// fitted latent model (fair_k) or the additive-residual model (fair_add).
    CausalModel model;
    nlohmann::json meta = nlohmann::json::object();
};

struct RecipeOptions {
    McmcConfig mcmc;
    LatentFitOptions latent;
    /// Required for fair_learning.
    std::optional<InputManifest> manifest;
};

/// Head used for an outcome: logistic when its domain is {0, 1}.
Head head_for(const CausalModel& model, const VariableId& outcome);

RecipeResult fit_recipe(Recipe recipe, const Dataset& train, const CausalModel& model, const RecipeOptions& options);

/// Targets are the observed descendants of the protected variables, regressed
/// on the protected variables. The returned model keeps the protected
/// ancestry of `model` and writes each target T as fitted_T + eps_T, where
/// fitted_T is a table over the protected values (or linear when they are all
/// real-valued) and eps_T is a normal background.
CausalModel additive_residual_model(const Dataset& train, const CausalModel& model);

/// Predictions of a fitted recipe for every row of `data`.
std::vector<double> predict_recipe(const RecipeResult& result, const Dataset& data, const McmcConfig& config);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded split with round(test_fraction * count) test rows, taken per class
/// when the outcome column is binary. Indices ascending.
Split train_test_split(const Dataset& data, const VariableId& outcome, double test_fraction, std::uint64_t seed);

double rmse(std::span<const double> predictions, std::span<const double> truth);
/// Mean negative log-likelihood of binary labels; probabilities clipped to [1e-12, 1 - 1e-12].
double log_loss(std::span<const double> probabilities, std::span<const double> labels);

struct AuditSpec {
    std::string criterion = "cf";  // cf | strict | path
    VariableId attribute;
    double a = 0.0;
    double a_prime = 1.0;
    PathSet paths;  // path criterion only
};

FairnessReport run_audit(const AuditSpec& spec, const FairPredictor& predictor, const CausalModel& model,
                         const Dataset& data, const McmcConfig& config, const AuditOptions& options);

struct ExperimentConfig {
    std::optional<std::filesystem::path> model_path;
    std::optional<std::filesystem::path> data_path;
    std::optional<ScenarioParams> scenario;
    std::vector<std::pair<Recipe, std::optional<InputManifest>>> recipes;
    std::vector<AuditSpec> audits;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    std::string audit_records = "test";  // test | train
    McmcConfig mcmc;
    LatentFitOptions latent;
    AuditOptions audit;
    std::filesystem::path output = "cfair-out";

    /// Relative paths resolve against `base`. Throws Config on missing or
    /// inconsistent fields and on referenced files that do not exist.
    static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base = {});
    nlohmann::json to_json() const;
};

struct RecipeOutcome {
    RecipeResult fit;
    double rmse = 0.0;
    double log_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<FairnessReport> audits;
};

struct ExperimentResult {
    nlohmann::json report;
    std::vector<RecipeOutcome> recipes;
    bool any_fail = false;
};

/// Runs the experiment in memory.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Runs the experiment and writes report.json, metrics.csv and one density
/// CSV per recipe and audit into config.output.
ExperimentResult run_experiment_to_disk(const ExperimentConfig& config);

}  // namespace cfair
