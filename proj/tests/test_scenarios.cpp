#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "cfair/error.hpp"
#include "cfair/fairlearn.hpp"
#include "cfair/metrics.hpp"
#include "cfair/scenarios.hpp"
#include "cfair/scm.hpp"

using namespace cfair;

namespace {

ScenarioParams params(ScenarioKind kind, std::map<std::string, double> values = {}, std::size_t n = 20000,
                      std::uint64_t seed = 11) {
    ScenarioParams p;
    p.kind = kind;
    p.values = std::move(values);
    p.n = n;
    p.seed = seed;
    return p;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double cov(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / static_cast<double>(a.size());
}

/// Least squares of y on [1, columns...], solved by QR.
Eigen::VectorXd ols(const std::vector<const std::vector<double>*>& columns, const std::vector<double>& y) {
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()) + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < columns.size(); ++j)
        x.col(static_cast<Eigen::Index>(j) + 1) = Eigen::Map<const Eigen::VectorXd>(columns[j]->data(), n);
    return x.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), n));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

McmcConfig quick_mcmc() {
    McmcConfig c;
    c.burn_in = 100;
    c.kept = 20;
    c.thin = 1;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("scenario names round trip") {
    for (auto kind : {ScenarioKind::RedCar, ScenarioKind::HighCrime, ScenarioKind::University, ScenarioKind::LawSchool,
                      ScenarioKind::Loan})
        CHECK(scenario_from_string(to_string(kind)) == kind);
    CHECK_THROWS_AS(scenario_from_string("nonexistent"), Error);
    try {
        scenario_from_string("nonexistent");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedScenario);
    }
}

TEST_CASE("parameter validation") {
    auto bad = [](ScenarioKind kind, std::map<std::string, double> values) {
        try {
            params(kind, std::move(values)).resolved();
        } catch (const Error& e) {
            return e.code() == ErrorCode::Config;
        }
        return false;
    };
    CHECK(bad(ScenarioKind::RedCar, {{"theta", 1}}));
    CHECK(bad(ScenarioKind::RedCar, {{"v_u", 0}}));
    CHECK(bad(ScenarioKind::RedCar, {{"alpha", std::nan("")}}));
    CHECK(bad(ScenarioKind::Loan, {{"p_a", 1.0}}));
    CHECK(bad(ScenarioKind::LawSchool, {{"race_arity", 2.5}}));
    CHECK(bad(ScenarioKind::LawSchool, {{"gpa_sigma", -1}}));
    CHECK(params(ScenarioKind::HighCrime, {{"theta", 2}}).resolved().at("theta") == 2.0);
}

TEST_CASE("generation is deterministic in the seed") {
    auto [m1, d1] = generate(params(ScenarioKind::LawSchool, {}, 500, 4));
    auto [m2, d2] = generate(params(ScenarioKind::LawSchool, {}, 500, 4));
    auto [m3, d3] = generate(params(ScenarioKind::LawSchool, {}, 500, 5));
    CHECK(d1.columns == d2.columns);
    CHECK(d1.data == d2.data);
    CHECK(d1.data != d3.data);
    auto observed = observed_columns(m1, d1);
    CHECK(!observed.column_index("K"));
    CHECK(observed.column_index("GPA"));
    CHECK(observed.rows() == 500);
}

TEST_CASE("red car regression slope matches the closed form") {
    auto [model, data] = generate(params(ScenarioKind::RedCar, {}, 200000));
    const auto& x = data.column("X");
    const auto& y = data.column("Y");
    const auto bundle = oracle(params(ScenarioKind::RedCar));
    // alpha = beta = gamma = v_a = v_u = 1: lambda = 1/2
    CHECK(bundle.values.at("unaware_slope").value == doctest::Approx(0.5));
    CHECK(cov(x, y) / cov(x, x) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("linear scenarios: full least squares weights equal the oracle") {
    for (auto [kind, values] : std::vector<std::pair<ScenarioKind, std::map<std::string, double>>>{
             {ScenarioKind::RedCar, {{"alpha", 2}, {"beta", 0.5}, {"gamma", 1.5}}},
             {ScenarioKind::HighCrime, {{"alpha", 0.5}, {"theta", 2}, {"v_a", 2}}},
             {ScenarioKind::University, {{"beta", 2}, {"eta", -1}, {"v_u", 0.5}}}}) {
        auto p = params(kind, values, 5000);
        auto [model, data] = generate(p);
        const auto b = oracle(p);
        const auto w = ols({&data.column("X"), &data.column("A")}, data.column("Y"));
        CHECK(w[1] == doctest::Approx(b.values.at("full_weight_x").value).epsilon(1e-6));
        CHECK(w[2] == doctest::Approx(b.values.at("full_weight_a").value).epsilon(1e-6));
        const auto u = ols({&data.column("U"), &data.column("A")}, data.column("Y"));
        CHECK(u[1] == doctest::Approx(b.values.at("full_coef_u").value).epsilon(1e-6));
        CHECK(u[2] == doctest::Approx(b.values.at("full_coef_a").value).epsilon(1e-6));
        const auto slope = cov(data.column("X"), data.column("Y")) / cov(data.column("X"), data.column("X"));
        CHECK(slope == doctest::Approx(b.values.at("unaware_slope").value).epsilon(0.05));
    }
}

TEST_CASE("oracle rejects non-linear scenarios") {
    for (auto kind : {ScenarioKind::LawSchool, ScenarioKind::Loan}) {
        try {
            oracle(params(kind));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::UnsupportedScenario);
        }
    }
}

TEST_CASE("loan frequencies match enumeration") {
    const double pa = 0.4, pp = 0.6, pq = 0.7, b0 = -1.0, b1 = 2.0;
    auto p = params(ScenarioKind::Loan, {{"p_a", pa}, {"p_p", pp}, {"p_q", pq}}, 40000);
    auto [model, data] = generate(p);
    double employed = 0.0, approved = 0.0;
    for (int a : {0, 1})
        for (int pv : {0, 1})
            for (int q : {0, 1}) {
                const double w = (a ? pa : 1 - pa) * (pv ? pp : 1 - pp) * (q ? pq : 1 - pq);
                const bool e = q == 1 && (pv == 0 || a == 1);
                employed += w * e;
                approved += w * sigmoid(b0 + b1 * e);
            }
    const double n = static_cast<double>(data.rows());
    CHECK(std::abs(mean(data.column("Employed")) - employed) < 4 * std::sqrt(employed * (1 - employed) / n));
    CHECK(std::abs(mean(data.column("Y")) - approved) < 4 * std::sqrt(approved * (1 - approved) / n));

    for (double pv : {0.0, 1.0})
        for (double q : {0.0, 1.0}) {
            const auto w0 = evaluate_world(intervene(model, {{"A", 0.0}}), {{"P", pv}, {"Q", q}});
            const auto w1 = evaluate_world(intervene(model, {{"A", 1.0}}), {{"P", pv}, {"Q", q}});
            CHECK((w0.at("Employed") != w1.at("Employed")) == (pv == 1.0 && q == 1.0));
        }
}

TEST_CASE("law school equations carry the sex-specific weights") {
    auto p = params(ScenarioKind::LawSchool, {}, 60000);
    auto [model, data] = generate(p);
    // GPA given K, R, S is linear-Gaussian: regression recovers the male baseline and female offset
    const auto g = ols({&data.column("K"), &data.column("R"), &data.column("S")}, data.column("GPA"));
    CHECK(g[0] == doctest::Approx(2.0 + 0.93).epsilon(0.01));
    CHECK(g[1] == doctest::Approx(0.5).epsilon(0.01));
    CHECK(g[2] == doctest::Approx(-0.4).epsilon(0.02));
    CHECK(g[3] == doctest::Approx(1.06 - 0.93).scale(1).epsilon(0.01));
    // equal LSAT sex weights: mean LSAT does not depend on S
    std::vector<double> by_sex[2];
    for (std::size_t i = 0; i < data.rows(); ++i)
        by_sex[static_cast<int>(data.column("S")[i])].push_back(data.column("LSAT")[i]);
    CHECK(std::abs(mean(by_sex[0]) - mean(by_sex[1])) < 0.15);
    const auto& lsat = data.column("LSAT");
    CHECK(std::all_of(lsat.begin(), lsat.end(), [](double v) { return v >= 0 && v == std::floor(v); }));
    CHECK(mean(data.column("R")) == doctest::Approx(0.33).epsilon(0.05));

    auto [m3, d3] = generate(params(ScenarioKind::LawSchool, {{"race_arity", 3}}, 3000));
    CHECK(d3.column_index("U_R"));
    for (double r : d3.column("R")) CHECK((r == 0 || r == 1 || r == 2));
}

TEST_CASE("oracle verdicts agree with audits") {
    struct Case {
        ScenarioKind kind;
        std::map<std::string, double> values;
    };
    for (const auto& c : std::vector<Case>{{ScenarioKind::RedCar, {}},
                                          {ScenarioKind::HighCrime, {}},
                                          {ScenarioKind::HighCrime, {{"alpha", 0}}},
                                          {ScenarioKind::University, {{"eta", 0.5}}}}) {
        auto p = params(c.kind, c.values, 2000);
        auto [model, full_data] = generate(p);
        const auto data = observed_columns(model, full_data);
        const auto b = oracle(p);
        AuditOptions opts;
        opts.draws_per_record = 50;
        opts.max_records = 20;
        const double s = std::sqrt(p.resolved().at("v_a"));
        for (auto [kind, name] : {std::pair{BaselineKind::Full, "full"}, std::pair{BaselineKind::Unaware, "unaware"}}) {
            const auto predictor = baseline_fit(data, model, kind, "Y", Head::Linear);
            const auto report = strict_cf_check(predictor, model, data, "A", -s, s, quick_mcmc(), opts);
            CHECK_MESSAGE(report.pass == b.verdicts.at(name), to_string(c.kind), " ", name);
        }
    }
}
