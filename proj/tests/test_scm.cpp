#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cfair/io.hpp"
#include "cfair/parallel.hpp"
#include "cfair/scm.hpp"
#include "fixtures.hpp"

using namespace cfair;
using namespace fixtures;

namespace {

CausalModel chain() {
    CausalModel m;
    m.variables = {var("A", Role::Protected), var("X", Role::Observed), var("Y", Role::Outcome),
                   var("U", Role::Background)};
    m.priors["U"] = NormalPrior{};
    m.equations = {lg("A", {}, 0, {}, 1), lg("X", {"A", "U"}, 0, {1, 1}, 0.5), lg("Y", {"X"}, 0, {1}, 1)};
    return m;
}

double ks_oracle(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= t) ++i;
        while (j < b.size() && b[j] <= t) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

}  // namespace

TEST_CASE("validate_model orders backgrounds first and parents before children") {
    auto r = validate_model(chain());
    REQUIRE(r.ok());
    CHECK(r.topological_order == std::vector<VariableId>{"U", "A", "X", "Y"});
}

TEST_CASE("validate_model detects cycles through the protected attribute") {
    auto m = chain();
    m.equations[0] = lg("A", {"Y"}, 0, {1}, 1);
    CHECK(validate_model(m).has(ErrorCode::CycleDetected));
    m.equations[0] = lg("A", {"X"}, 0, {1}, 1);
    CHECK(validate_model(m).has(ErrorCode::CycleDetected));
    // an extra edge that keeps the graph acyclic
    auto ok = chain();
    ok.equations[2] = lg("Y", {"X", "U"}, 0, {1, 1}, 1);
    CHECK(validate_model(ok).ok());
}

TEST_CASE("validate_model reports every violation") {
    auto m = chain();
    m.equations[1] = lg("X", {"A", "U"}, 0, {1}, 0.5);
    auto r = validate_model(m);
    CHECK(r.has(ErrorCode::WeightArityMismatch));

    m = chain();
    m.equations[2] = lg("Y", {"Nope"}, 0, {1}, 1);
    m.equations.erase(m.equations.begin());  // A loses its equation
    m.equations.push_back(lg("U", {"X"}, 0, {1}, 0));
    r = validate_model(m);
    CHECK(r.has(ErrorCode::DanglingParent));
    CHECK(r.has(ErrorCode::MissingEquation));
    CHECK(r.has(ErrorCode::BackgroundHasParents));
    CHECK(r.errors.size() >= 3);
    CHECK(r.topological_order.empty());
}

TEST_CASE("validate_model checks names, duplicates, priors and tables") {
    auto m = chain();
    m.variables.push_back(var("X", Role::Observed));
    CHECK(validate_model(m).has(ErrorCode::DuplicateVariable));

    m = chain();
    m.variables[0].name = "9bad";
    CHECK(validate_model(m).has(ErrorCode::InvalidName));

    m = chain();
    m.priors["U"] = CategoricalPrior{{0, 1}, {0.5, 0.5 + 1e-9}};
    CHECK(validate_model(m).has(ErrorCode::InvalidPrior));
    m.priors["U"] = CategoricalPrior{{0, 1}, {0.5, 0.5 + 1e-13}};
    CHECK(validate_model(m).ok());

    m = chain();
    m.equations[1] = lg("X", {"A", "U"}, 0, {1, 1}, -1);
    CHECK_FALSE(validate_model(m).ok());

    auto l = loan();
    auto& table = std::get<DeterministicTable>(l.equations[1].family);
    table.entries.erase(table.entries.begin());
    CHECK(validate_model(l).has(ErrorCode::InvalidEquation));
}

TEST_CASE("ancestral_sample matches structural moments") {
    const auto d = ancestral_sample(red_car(), 1000000, 11);
    CHECK(d.columns.front() == "U_A");
    const double vx = var_of(d.column("X"));
    // Var(X) = alpha^2 vA + beta^2 vU
    CHECK(vx >= 1.99);
    CHECK(vx <= 2.01);

    CausalModel p;
    p.variables = {var("N", Role::Observed)};
    p.equations = {StructuralEquation{"N", {}, PoissonLogLink{0.0, {}}, {}}};
    const auto pd = ancestral_sample(p, 1000000, 3);
    const double pm = mean(pd.column("N"));
    CHECK(pm >= 0.99);
    CHECK(pm <= 1.01);
}

TEST_CASE("ancestral_sample is deterministic and thread independent") {
    const auto m = chain();
    const auto a = ancestral_sample(m, 1, 5);
    const auto b = ancestral_sample(m, 1, 5);
    CHECK(a.data == b.data);
    const auto big1 = ancestral_sample(m, 5000, 42);
    set_thread_count(4);
    const auto big2 = ancestral_sample(m, 5000, 42);
    set_thread_count(0);
    CHECK(big1.data == big2.data);
    CHECK(format_csv(big1) == format_csv(big2));
}

TEST_CASE("sampled conditionals follow each equation family") {
    CausalModel m;
    m.variables = {var("K", Role::Background), var("R", Role::Protected, {0, 1}), var("G", Role::Observed),
                   var("L", Role::Observed)};
    m.priors["K"] = NormalPrior{};
    m.equations = {StructuralEquation{"R", {}, BernoulliLogit{-0.7, {}}, {}}, lg("G", {"K", "R"}, 1.0, {0.5, -0.4}, 0.3),
                   StructuralEquation{"L", {"K", "R"}, PoissonLogLink{1.5, {0.25, -0.3}}, {}}};
    const std::size_t n = 1000000;
    const auto d = ancestral_sample(m, n, 9);
    const auto &K = d.column("K"), &R = d.column("R"), &G = d.column("G"), &L = d.column("L");
    double sg = 0, sg2 = 0, sl = 0, sl2 = 0, sr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double eg = G[i] - (1.0 + 0.5 * K[i] - 0.4 * R[i]);
        sg += eg;
        sg2 += eg * eg;
        const double rate = std::exp(1.5 + 0.25 * K[i] - 0.3 * R[i]);
        const double el = (L[i] - rate) / std::sqrt(rate);
        sl += el;
        sl2 += el * el;
        sr += R[i];
    }
    const double se = 1.0 / std::sqrt(double(n));
    CHECK(std::abs(sg / n) <= 3 * 0.3 * se);
    CHECK(std::abs(sg2 / n - 0.09) <= 3 * 0.09 * std::sqrt(2.0) * se);
    CHECK(std::abs(sl / n) <= 3 * se);
    CHECK(std::abs(sl2 / n - 1.0) <= 0.01);
    const double p = 1 / (1 + std::exp(0.7));
    CHECK(std::abs(sr / n - p) <= 3 * std::sqrt(p * (1 - p)) * se);
}

TEST_CASE("poisson_quantile inverts the cumulative distribution") {
    for (double rate : {0.3, 4.0, 57.0, 900.0}) {
        for (double u : {1e-6, 0.2, 0.5, 0.97, 1 - 1e-9}) {
            const double k = poisson_quantile(rate, u);
            double cdf = 0, below = 0;
            for (double j = 0; j <= k; ++j) {
                below = cdf;
                cdf += std::exp(j * std::log(rate) - rate - std::lgamma(j + 1));
            }
            CHECK(cdf >= u - 1e-9);
            CHECK(below < u + 1e-9);
        }
    }
}

TEST_CASE("intervene replaces equations with constants") {
    auto m = red_car();
    const auto d = ancestral_sample(intervene(m, {{"A", 1.0}}), 1000, 1);
    for (double a : d.column("A")) CHECK(a == 1.0);
    CHECK_THROWS_AS(intervene(m, {{"U", 0.0}}), Error);
    try {
        intervene(m, {{"U", 0.0}});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InterveneOnBackground);
    }

    const auto c = chain();
    const auto cut = ancestral_sample(intervene(c, {{"X", 0.3}}), 1000000, 2);
    CHECK(std::abs(corr(cut.column("A"), cut.column("Y"))) <= 0.01);
}

TEST_CASE("intervene is idempotent and commutes across disjoint assignments") {
    const auto c = chain();
    const auto once = intervene(c, {{"X", 2.0}});
    const auto twice = intervene(once, {{"X", 2.0}});
    CHECK(model_to_json(once) == model_to_json(twice));
    const auto ab = intervene(intervene(c, {{"A", 1.0}}), {{"Y", 3.0}});
    const auto ba = intervene(intervene(c, {{"Y", 3.0}}), {{"A", 1.0}});
    CHECK(model_to_json(ab) == model_to_json(ba));
}

TEST_CASE("non_descendants") {
    CausalModel fig;
    fig.variables = {var("U", Role::Background), var("A", Role::Protected), var("X", Role::Observed),
                     var("Y", Role::Outcome)};
    fig.priors["U"] = NormalPrior{};
    fig.equations = {lg("A", {}, 0, {}, 1), lg("X", {"A", "U"}, 0, {1, 1}, 0), lg("Y", {"U"}, 0, {1}, 0)};
    CHECK(non_descendants(fig, {"A"}) == std::set<VariableId>{"U", "Y"});
    CHECK(non_descendants(loan(), {"A"}) == std::set<VariableId>{"P", "Q"});
    CHECK(non_descendants(fig, {}).size() == 4);
    CHECK_THROWS_AS(non_descendants(fig, {"Z"}), Error);

    const auto desc = descendants(fig, {"A"});
    const auto nd = non_descendants(fig, {"A"});
    for (const auto& v : fig.variables) CHECK(desc.count(v.name) + nd.count(v.name) == 1);
}

TEST_CASE("twin network of the loan model flips employment for prejudiced qualified applicants") {
    const auto twin = twin_network(loan(), {{"A", 0.0}}, {{"A", 1.0}});
    CHECK(twin.has("Employed@f"));
    CHECK(twin.has("Employed@f'"));
    CHECK(twin.has("P"));
    CHECK_FALSE(twin.has("P@f"));
    const auto w = evaluate_world(twin, {{"P", 1.0}, {"Q", 1.0}}, 3);
    CHECK(w.at("Employed@f") == 0.0);
    CHECK(w.at("Employed@f'") == 1.0);
    const auto w2 = evaluate_world(twin, {{"P", 0.0}, {"Q", 1.0}}, 3);
    CHECK(w2.at("Employed@f") == w2.at("Employed@f'"));
}

TEST_CASE("twin network without downstream variables copies only the intervened node") {
    CausalModel m;
    m.variables = {var("U", Role::Background), var("A", Role::Protected), var("Y", Role::Outcome)};
    m.priors["U"] = NormalPrior{};
    m.equations = {lg("A", {}, 0, {}, 1), lg("Y", {"U"}, 0, {1}, 1)};
    const auto twin = twin_network(m, {{"A", 0.0}}, {{"A", 1.0}});
    CHECK(twin.variables.size() == m.variables.size() + 1);
    CHECK(twin.has("Y"));
    CHECK_THROWS_AS(twin_network(m, {{"U", 0.0}}, {{"U", 1.0}}), Error);
    CHECK_THROWS_AS(twin_network(m, {{"A", 0.0}}, {{"Y", 1.0}}), Error);
}

TEST_CASE("twin network branches differ only through the intervention") {
    const double alpha = 1.7, a = -1.0, ap = 1.0;
    const auto twin = twin_network(red_car(alpha, 0.8, 1.2), {{"A", a}}, {{"A", ap}});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto w = evaluate_world(twin, {}, seed);
        CHECK(w.at("X@f") - w.at("X@f'") == doctest::Approx(alpha * (a - ap)).epsilon(1e-12));
        CHECK(w.at("Y") == w.at("Y"));
    }
}

TEST_CASE("each twin branch reproduces the intervened model in distribution") {
    auto m = chain();
    const auto twin = twin_network(m, {{"A", 0.5}}, {{"A", -1.0}});
    const auto td = ancestral_sample(twin, 100000, 17);
    const auto fd = ancestral_sample(intervene(m, {{"A", 0.5}}), 100000, 18);
    const auto cd = ancestral_sample(intervene(m, {{"A", -1.0}}), 100000, 19);
    CHECK(ks_oracle(td.column("Y@f"), fd.column("Y")) <= 0.02);
    CHECK(ks_oracle(td.column("Y@f'"), cd.column("Y")) <= 0.02);
}

TEST_CASE("model documents and datasets round-trip") {
    for (const auto& m : {red_car(1.5, 0.5, 2.0), loan(0.3, 0.6, 0.4), chain()}) {
        const auto back = model_from_json(Json::parse(model_to_json(m).dump()));
        CHECK(model_to_json(back) == model_to_json(m));
    }
    const auto d = ancestral_sample(chain(), 50, 8);
    const auto text = format_csv(d);
    const auto parsed = parse_csv(text);
    CHECK(parsed.columns == d.columns);
    CHECK(parsed.data == d.data);
    CHECK(format_csv(parsed) == text);
    CHECK_THROWS_AS(parse_csv("a,b\r\n1\r\n"), Error);
    CHECK_THROWS_AS(parse_csv("a,b\r\n1,x\r\n"), Error);
    CHECK(parse_csv("\"a,1\",b\n1,2\n").columns.front() == "a,1");
}

TEST_CASE("malformed model documents are parse errors") {
    CHECK_THROWS_AS(model_from_json(Json::parse(R"({"variables": [{"name": "A"}]})")), Error);
    CHECK_THROWS_AS(model_from_json(Json::parse(
                        R"({"variables": [{"name": "A", "role": "protected"}], "equations": [{"child": "A", "family": "spline"}]})")),
                    Error);
}
