#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfair/model.hpp"

namespace cfair {

enum class ScenarioKind { RedCar, HighCrime, University, LawSchool, Loan };

std::string_view to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(std::string_view text);

struct ScenarioParams {
    ScenarioKind kind = ScenarioKind::RedCar;
    std::map<std::string, double> values;  // overrides of scenario_defaults(kind)
    std::size_t n = 1000;
    std::uint64_t seed = 0;

    /// Defaults merged with overrides. Throws Config on unknown keys or
    /// out-of-range values.
    std::map<std::string, double> resolved() const;
    nlohmann::json to_json() const;
};

std::map<std::string, double> scenario_defaults(ScenarioKind kind);

CausalModel scenario_model(const ScenarioParams& params);

/// The scenario model and n ancestral samples of every variable (latents
/// included), columns in topological order.
std::pair<CausalModel, Dataset> generate(const ScenarioParams& params);

/// Columns of `data` whose role in `model` is not Background.
Dataset observed_columns(const CausalModel& model, const Dataset& data);

struct OracleValue {
    double value = 0.0;
    std::string formula;
};

struct OracleBundle {
    std::map<std::string, OracleValue> values;
    /// true = counterfactually fair
    std::map<std::string, bool> verdicts;

    nlohmann::json to_json() const;
};

/// Population quantities for the linear scenarios. Throws UnsupportedScenario
/// for law_school and loan.
OracleBundle oracle(const ScenarioParams& params);

}  // namespace cfair
