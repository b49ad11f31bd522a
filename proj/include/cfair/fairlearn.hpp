#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfair/counterfactual.hpp"
#include "cfair/estimators.hpp"
#include "cfair/model.hpp"

namespace cfair {

struct InputManifest {
    std::vector<VariableId> background_inputs;
    std::vector<VariableId> observable_inputs;
    bool include_protected = false;
    /// Observables allowed despite descending from the protected set (e.g.
    /// admitted by a path-specific analysis).
    std::vector<VariableId> whitelist;

    nlohmann::json to_json() const;
    static InputManifest from_json(const nlohmann::json& doc);
};

/// Throws InvalidModel when the manifest breaks the non-descendant rule.
void validate_manifest(const InputManifest& manifest, const CausalModel& model);

enum class Head { Linear, Logistic };
std::string_view to_string(Head head);
Head head_from_string(std::string_view text);

struct FairPredictor {
    InputManifest manifest;
    Head head = Head::Linear;
    Encoding encoding;
    Eigen::VectorXd weights;
    std::vector<std::string> labels;
    // training diagnostics
    std::string recipe;
    std::vector<double> loss_trace;
    std::size_t m = 0;
    McmcConfig config;
    std::vector<VariableId> evidence;
    bool separation_warning = false;

    /// Input columns in design order: backgrounds, then observables sorted.
    std::vector<VariableId> inputs() const;
    /// `values` aligned with inputs(). Logistic heads return a probability.
    double predict(std::span<const double> values) const;
    /// Predictions for every row of `data`, which must contain inputs().
    std::vector<double> predict(const Dataset& data) const;

    nlohmann::json to_json() const;
    static FairPredictor from_json(const nlohmann::json& doc);
};

/// Predictor evaluated on full worlds of a compiled model.
class BoundPredictor {
public:
    BoundPredictor(const FairPredictor& predictor, const CompiledModel& model);
    double operator()(std::span<const double> world) const;

private:
    const FairPredictor* predictor_;
    std::vector<std::size_t> index_;
};

InputManifest level1_inputs(const CausalModel& model);

/// Role-based evidence for abduction: Protected and Observed variables that
/// `data` provides (outcomes excluded).
std::vector<VariableId> abduction_evidence(const CausalModel& model, const Dataset& data);

/// Posterior draws for the selected rows (all rows when empty). Models with a
/// single normal latent whose evidence children are observed use the
/// dedicated one-dimensional sampler; everything else goes through
/// abduct_records.
PosteriorDraws posterior_draws(const CausalModel& model, const Dataset& data, const std::vector<VariableId>& evidence,
                               const McmcConfig& config, const std::vector<std::size_t>& rows = {});

/// The unique Outcome variable of the model.
VariableId outcome_of(const CausalModel& model);

FairPredictor fair_learning(const Dataset& data, const CausalModel& model, const InputManifest& manifest, Head loss,
                            const McmcConfig& config, std::optional<VariableId> outcome = std::nullopt);

/// Monte Carlo average of the predictor over posterior draws for one record.
double fair_predict(const FairPredictor& predictor, const CausalModel& model, const Evidence& record,
                    const McmcConfig& config);

/// fair_predict for every row of `data` (record ids are row indices).
std::vector<double> fair_predict_all(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                                     const McmcConfig& config);

enum class BaselineKind { Full, Unaware };

FairPredictor baseline_fit(const Dataset& data, const CausalModel& model, BaselineKind kind, const VariableId& outcome,
                           Head head);

}  // namespace cfair
