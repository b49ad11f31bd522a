#include "cfair/scenarios.hpp"

#include <cmath>

#include "cfair/error.hpp"
#include "cfair/scm.hpp"

namespace cfair {

using nlohmann::json;

std::string_view to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::RedCar: return "red_car";
        case ScenarioKind::HighCrime: return "high_crime";
        case ScenarioKind::University: return "university";
        case ScenarioKind::LawSchool: return "law_school";
        case ScenarioKind::Loan: return "loan";
    }
    return "red_car";
}

ScenarioKind scenario_from_string(std::string_view text) {
    for (auto k : {ScenarioKind::RedCar, ScenarioKind::HighCrime, ScenarioKind::University, ScenarioKind::LawSchool,
                   ScenarioKind::Loan}) {
        if (to_string(k) == text) return k;
    }
    throw Error(ErrorCode::UnsupportedScenario, "unknown scenario '" + std::string(text) + "'");
}

std::map<std::string, double> scenario_defaults(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::RedCar:
            return {{"alpha", 1}, {"beta", 1}, {"gamma", 1}, {"v_a", 1}, {"v_u", 1}, {"gaussian_a", 0}};
        case ScenarioKind::HighCrime:
            return {{"alpha", 1}, {"beta", 1}, {"gamma", 1}, {"theta", 1}, {"v_a", 1}, {"v_u", 1}, {"gaussian_a", 0}};
        case ScenarioKind::University:
            return {{"alpha", 1}, {"beta", 1}, {"gamma", 1}, {"eta", 1}, {"v_a", 1}, {"v_u", 1}, {"gaussian_a", 0}};
        case ScenarioKind::LawSchool:
            return {{"race_arity", 2},      {"race_minority", 0.33}, {"p_female", 0.5},
                    {"gpa_base", 2.0},      {"gpa_k", 0.5},          {"gpa_race", -0.4},
                    {"gpa_sex_male", 0.93}, {"gpa_sex_female", 1.06}, {"gpa_sigma", 0.15},
                    {"lsat_base", 1.2},     {"lsat_k", 0.25},        {"lsat_race", -0.3},
                    {"lsat_sex_male", 1.1}, {"lsat_sex_female", 1.1}, {"fya_k", 0.6},
                    {"fya_race", -1.0},     {"fya_sex", 0.05},       {"fya_sigma", 0.7}};
        case ScenarioKind::Loan:
            return {{"p_a", 0.5}, {"p_p", 0.5}, {"p_q", 0.5}, {"y_intercept", -1.0}, {"y_employed", 2.0}};
    }
    return {};
}

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw Error(ErrorCode::Config, message);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Variable var(const std::string& name, Role role, std::vector<double> domain = {}) {
    return Variable{name, role, Domain::of(std::move(domain))};
}

StructuralEquation linear(const std::string& child, std::vector<VariableId> parents, double intercept,
                          std::vector<double> weights, double noise) {
    return StructuralEquation{child, std::move(parents), LinearGaussian{intercept, std::move(weights), noise}, {}};
}

StructuralEquation bernoulli_root(const std::string& child, double p) {
    return StructuralEquation{child, {}, BernoulliLogit{logit(p), {}}, {}};
}

CausalModel linear_model(ScenarioKind kind, const std::map<std::string, double>& p) {
    const double alpha = p.at("alpha"), beta = p.at("beta"), gamma = p.at("gamma");
    const double s = std::sqrt(p.at("v_a"));
    const bool gaussian = p.at("gaussian_a") != 0.0;
    CausalModel m;
    m.variables = {var("U_A", Role::Background), var("U", Role::Background),
                   var("A", Role::Protected, gaussian ? std::vector<double>{} : std::vector<double>{-s, s}),
                   var("X", Role::Observed), var("Y", Role::Outcome)};
    if (gaussian) m.priors["U_A"] = NormalPrior{0.0, s};
    else m.priors["U_A"] = CategoricalPrior{{-s, s}, {0.5, 0.5}};
    m.priors["U"] = NormalPrior{0.0, std::sqrt(p.at("v_u"))};
    m.equations = {linear("A", {"U_A"}, 0, {1}, 0), linear("X", {"A", "U"}, 0, {alpha, beta}, 0)};
    switch (kind) {
        case ScenarioKind::HighCrime: m.equations.push_back(linear("Y", {"U", "X"}, 0, {gamma, p.at("theta")}, 0)); break;
        case ScenarioKind::University: m.equations.push_back(linear("Y", {"U", "A"}, 0, {gamma, p.at("eta")}, 0)); break;
        default: m.equations.push_back(linear("Y", {"U"}, 0, {gamma}, 0)); break;
    }
    return m;
}

CausalModel law_school_model(const std::map<std::string, double>& p) {
    const auto arity = static_cast<std::size_t>(p.at("race_arity"));
    std::vector<double> levels;
    for (std::size_t r = 0; r < arity; ++r) levels.push_back(static_cast<double>(r));
    CausalModel m;
    m.variables.push_back(var("K", Role::Background));
    m.priors["K"] = NormalPrior{};
    if (arity > 2) {
        m.variables.push_back(var("U_R", Role::Background, levels));
        std::vector<double> probs(arity, p.at("race_minority") / static_cast<double>(arity - 1));
        probs[0] = 1.0 - p.at("race_minority");
        m.priors["U_R"] = CategoricalPrior{levels, probs};
    }
    m.variables.push_back(var("R", Role::Protected, levels));
    m.variables.push_back(var("S", Role::Protected, {0, 1}));
    m.variables.push_back(var("GPA", Role::Observed));
    m.variables.push_back(var("LSAT", Role::Observed));
    m.variables.push_back(var("FYA", Role::Outcome));
    if (arity > 2) {
        DeterministicTable identity;
        for (double r : levels) identity.entries[{r}] = r;
        m.equations.push_back(StructuralEquation{"R", {"U_R"}, identity, {}});
    } else {
        m.equations.push_back(bernoulli_root("R", p.at("race_minority")));
    }
    m.equations.push_back(bernoulli_root("S", p.at("p_female")));
    // S = 0 is male, S = 1 female: the male effect is folded into the intercept
    m.equations.push_back(linear("GPA", {"K", "R", "S"}, p.at("gpa_base") + p.at("gpa_sex_male"),
                                 {p.at("gpa_k"), p.at("gpa_race"), p.at("gpa_sex_female") - p.at("gpa_sex_male")},
                                 p.at("gpa_sigma")));
    m.equations.push_back(StructuralEquation{
        "LSAT", {"K", "R", "S"},
        PoissonLogLink{p.at("lsat_base") + p.at("lsat_sex_male"),
                       {p.at("lsat_k"), p.at("lsat_race"), p.at("lsat_sex_female") - p.at("lsat_sex_male")}},
        {}});
    m.equations.push_back(
        linear("FYA", {"K", "R", "S"}, 0.0, {p.at("fya_k"), p.at("fya_race"), p.at("fya_sex")}, p.at("fya_sigma")));
    return m;
}

CausalModel loan_model(const std::map<std::string, double>& p) {
    CausalModel m;
    m.variables = {var("P", Role::Background, {0, 1}), var("Q", Role::Background, {0, 1}),
                   var("A", Role::Protected, {0, 1}), var("Employed", Role::Observed, {0, 1}),
                   var("Y", Role::Outcome, {0, 1})};
    m.priors["P"] = CategoricalPrior{{0, 1}, {1 - p.at("p_p"), p.at("p_p")}};
    m.priors["Q"] = CategoricalPrior{{0, 1}, {1 - p.at("p_q"), p.at("p_q")}};
    // employed iff Q and (P = 0 or A); the A = 0 branch flips exactly when P = Q = 1
    DeterministicTable employed;
    for (double a : {0.0, 1.0}) {
        for (double pp : {0.0, 1.0}) {
            for (double q : {0.0, 1.0}) employed.entries[{a, pp, q}] = (q > 0 && (pp == 0 || a != 0)) ? 1.0 : 0.0;
        }
    }
    m.equations = {bernoulli_root("A", p.at("p_a")), StructuralEquation{"Employed", {"A", "P", "Q"}, employed, {}},
                   StructuralEquation{"Y", {"Employed"}, BernoulliLogit{p.at("y_intercept"), {p.at("y_employed")}}, {}}};
    return m;
}

}  // namespace

std::map<std::string, double> ScenarioParams::resolved() const {
    auto out = scenario_defaults(kind);
    for (const auto& [key, value] : values) {
        require(out.contains(key), "unknown parameter '" + key + "' for scenario " + std::string(to_string(kind)));
        require(std::isfinite(value), "parameter '" + key + "' must be finite");
        out[key] = value;
    }
    for (const auto& [key, value] : out) {
        if (key.rfind("v_", 0) == 0 || key.ends_with("_sigma")) require(value > 0.0, "'" + key + "' must be positive");
        if (key.rfind("p_", 0) == 0 || key == "race_minority") {
            require(value > 0.0 && value < 1.0, "probability '" + key + "' must lie strictly between 0 and 1");
        }
    }
    if (kind == ScenarioKind::LawSchool) {
        const double arity = out.at("race_arity");
        require(arity >= 2 && arity == std::floor(arity) && arity <= 64, "race_arity must be an integer in [2, 64]");
    }
    if (out.contains("gaussian_a")) require(out.at("gaussian_a") == 0 || out.at("gaussian_a") == 1, "gaussian_a is 0 or 1");
    return out;
}

json ScenarioParams::to_json() const {
    return json{{"kind", std::string(to_string(kind))}, {"params", resolved()}, {"n", n}, {"seed", seed}};
}

CausalModel scenario_model(const ScenarioParams& params) {
    const auto p = params.resolved();
    switch (params.kind) {
        case ScenarioKind::LawSchool: return law_school_model(p);
        case ScenarioKind::Loan: return loan_model(p);
        default: return linear_model(params.kind, p);
    }
}

std::pair<CausalModel, Dataset> generate(const ScenarioParams& params) {
    CausalModel m = scenario_model(params);
    require_valid(m);
    Dataset d = ancestral_sample(m, params.n, params.seed);
    return {std::move(m), std::move(d)};
}

Dataset observed_columns(const CausalModel& model, const Dataset& data) {
    Dataset out;
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        const auto& name = data.columns[c];
        if (model.has(name) && model.variable(name).role == Role::Background) continue;
        out.add_column(name, data.data[c]);
    }
    return out;
}

json OracleBundle::to_json() const {
    json vals = json::object();
    for (const auto& [key, v] : values) vals[key] = {{"value", v.value}, {"formula", v.formula}};
    return json{{"values", vals}, {"verdicts", verdicts}};
}

OracleBundle oracle(const ScenarioParams& params) {
    if (params.kind == ScenarioKind::LawSchool || params.kind == ScenarioKind::Loan) {
        throw Error(ErrorCode::UnsupportedScenario,
                    std::string(to_string(params.kind)) + " has no closed-form oracle; use simulation");
    }
    const auto p = params.resolved();
    const double alpha = p.at("alpha"), beta = p.at("beta"), gamma = p.at("gamma");
    const double va = p.at("v_a"), vu = p.at("v_u");
    const double theta = params.kind == ScenarioKind::HighCrime ? p.at("theta") : 0.0;
    const double eta = params.kind == ScenarioKind::University ? p.at("eta") : 0.0;
    const double var_x = alpha * alpha * va + beta * beta * vu;

    OracleBundle b;
    auto put = [&](const std::string& key, double value, const std::string& formula) { b.values[key] = {value, formula}; };
    put("var_x", var_x, "alpha^2 v_a + beta^2 v_u");
    // Y = gamma U + theta X + eta A with U = (X - alpha A) / beta
    const double cov_xy = beta * gamma * vu + theta * var_x + eta * alpha * va;
    put("unaware_slope", cov_xy / var_x, "(beta gamma v_u + theta var_x + eta alpha v_a) / var_x");
    const double wx = gamma / beta + theta;
    const double wa = eta - gamma * alpha / beta;
    put("full_weight_x", wx, "gamma / beta + theta");
    put("full_weight_a", wa, "eta - gamma alpha / beta");
    put("full_coef_u", wx * beta, "(gamma / beta + theta) beta");
    put("full_coef_a", theta * alpha + eta, "theta alpha + eta");
    put("fair_weight_u", gamma + theta * beta, "gamma + theta beta");
    put("unaware_shift_per_unit_a", alpha * cov_xy / var_x, "alpha unaware_slope");
    put("full_shift_per_unit_a", theta * alpha + eta, "theta alpha + eta");
    if (params.kind == ScenarioKind::HighCrime) {
        put("quoted_coef_u", gamma - alpha * alpha * theta * va / (beta * vu), "gamma - alpha^2 theta v_a / (beta v_u)");
        put("quoted_coef_a", alpha * theta, "alpha theta");
    } else if (params.kind == ScenarioKind::University) {
        put("quoted_coef_u", gamma - alpha * eta * va / (beta * vu), "gamma - alpha eta v_a / (beta v_u)");
        put("quoted_coef_a", eta, "eta");
    }
    b.verdicts["full"] = theta * alpha + eta == 0.0;
    b.verdicts["unaware"] = alpha == 0.0 || cov_xy == 0.0;
    b.verdicts["fair_learning"] = true;
    return b;
}

}  // namespace cfair
