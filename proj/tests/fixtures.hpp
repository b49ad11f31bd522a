#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "cfair/model.hpp"

namespace fixtures {

using namespace cfair;

inline Variable var(const std::string& name, Role role, std::vector<double> domain = {}) {
    return Variable{name, role, Domain::of(std::move(domain))};
}

inline StructuralEquation lg(const std::string& child, std::vector<VariableId> parents, double intercept,
                             std::vector<double> weights, double noise) {
    return StructuralEquation{child, std::move(parents), LinearGaussian{intercept, std::move(weights), noise}, {}};
}

/// A -> X <- U -> Y with A = U_A, U_A uniform on {-sqrt(vA), +sqrt(vA)}.
inline CausalModel red_car(double alpha = 1, double beta = 1, double gamma = 1, double vA = 1, double vU = 1) {
    CausalModel m;
    m.variables = {var("U_A", Role::Background), var("U", Role::Background), var("A", Role::Protected),
                   var("X", Role::Observed), var("Y", Role::Outcome)};
    const double s = std::sqrt(vA);
    m.priors["U_A"] = CategoricalPrior{{-s, s}, {0.5, 0.5}};
    m.priors["U"] = NormalPrior{0.0, std::sqrt(vU)};
    m.equations = {lg("A", {"U_A"}, 0, {1}, 0), lg("X", {"A", "U"}, 0, {alpha, beta}, 0), lg("Y", {"U"}, 0, {gamma}, 0)};
    return m;
}

/// X = U + eps, U ~ N(0,1), eps ~ N(0,1)
inline CausalModel noisy_pair() {
    CausalModel m;
    m.variables = {var("U", Role::Background), var("X", Role::Observed)};
    m.priors["U"] = NormalPrior{};
    m.equations = {lg("X", {"U"}, 0, {1}, 1)};
    return m;
}

/// A = U_A; Z = 0.5 U + 0.8 eZ (unobserved); X = A + Z + 0.6 eX; Y = Z + 0.3 eY.
inline CausalModel hidden_chain() {
    CausalModel m;
    m.variables = {var("U_A", Role::Background), var("U", Role::Background), var("A", Role::Protected),
                   var("Z", Role::Observed), var("X", Role::Observed), var("Y", Role::Outcome)};
    m.priors["U_A"] = CategoricalPrior{{-1, 1}, {0.3, 0.7}};
    m.priors["U"] = NormalPrior{0.2, 1.5};
    m.equations = {lg("A", {"U_A"}, 0, {1}, 0), lg("Z", {"U"}, 0.1, {0.5}, 0.8), lg("X", {"A", "Z"}, 0, {1, 1}, 0.6),
                   lg("Y", {"Z"}, 0, {1}, 0.3)};
    return m;
}

/// Loan model: A -> Employed <- (P, Q); Employed -> Y.
inline CausalModel loan(double p_a = 0.5, double p_p = 0.5, double p_q = 0.5) {
    CausalModel m;
    m.variables = {var("P", Role::Background, {0, 1}), var("Q", Role::Background, {0, 1}),
                   var("A", Role::Protected, {0, 1}), var("Employed", Role::Observed, {0, 1}),
                   var("Y", Role::Outcome, {0, 1})};
    m.priors["P"] = CategoricalPrior{{0, 1}, {1 - p_p, p_p}};
    m.priors["Q"] = CategoricalPrior{{0, 1}, {1 - p_q, p_q}};
    DeterministicTable t;
    for (double a : {0.0, 1.0})
        for (double p : {0.0, 1.0})
            for (double q : {0.0, 1.0}) t.entries[{a, p, q}] = (q > 0 && (p == 0 || a != 0)) ? 1.0 : 0.0;
    m.equations = {
        StructuralEquation{"A", {}, BernoulliLogit{std::log(p_a / (1 - p_a)), {}}, {}},
        StructuralEquation{"Employed", {"A", "P", "Q"}, t, {}},
        StructuralEquation{"Y", {"Employed"}, BernoulliLogit{0.5, {-2.0}}, {}},
    };
    return m;
}

/// Level-2 law-school template: K -> GPA, LSAT, FYA with binary R and S.
inline CausalModel law_level2(double wgk = 0.5, double sigma_g = 0.15) {
    CausalModel m;
    m.variables = {var("K", Role::Background), var("R", Role::Protected, {0, 1}), var("S", Role::Protected, {0, 1}),
                   var("GPA", Role::Observed), var("LSAT", Role::Observed), var("FYA", Role::Outcome)};
    m.priors["K"] = NormalPrior{};
    m.equations = {StructuralEquation{"R", {}, BernoulliLogit{-0.7, {}}, {}},
                   StructuralEquation{"S", {}, BernoulliLogit{0.0, {}}, {}},
                   lg("GPA", {"K", "R", "S"}, 3.0, {wgk, -0.4, 0.13}, sigma_g),
                   StructuralEquation{"LSAT", {"K", "R", "S"}, PoissonLogLink{2.3, {0.25, -0.3, 0.0}}, {}},
                   lg("FYA", {"K", "R", "S"}, 0.0, {0.65, -0.5, 0.05}, 0.7)};
    return m;
}

inline double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

inline double cov(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / (a.size() - 1);
}

inline double var_of(const std::vector<double>& v) { return cov(v, v); }

inline double corr(const std::vector<double>& a, const std::vector<double>& b) {
    return cov(a, b) / std::sqrt(var_of(a) * var_of(b));
}

}  // namespace fixtures
