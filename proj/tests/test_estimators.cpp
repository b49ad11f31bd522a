#include <doctest.h>

#include <cmath>

#include "cfair/estimators.hpp"
#include "cfair/parallel.hpp"
#include "cfair/scm.hpp"
#include "fixtures.hpp"

using namespace cfair;
using namespace fixtures;

namespace {

Eigen::VectorXd vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

double weight_of(const CausalModel& m, const std::string& child, const std::string& parent) {
    const auto* eq = m.equation_for(child);
    const auto pos = std::find(eq->parents.begin(), eq->parents.end(), parent) - eq->parents.begin();
    return std::visit(
        [&](const auto& f) -> double {
            if constexpr (std::is_same_v<std::decay_t<decltype(f)>, DeterministicTable>) return NAN;
            else return f.weights[pos];
        },
        eq->family);
}

double intercept_of(const CausalModel& m, const std::string& child) {
    return std::visit(
        [&](const auto& f) -> double {
            if constexpr (std::is_same_v<std::decay_t<decltype(f)>, DeterministicTable>) return NAN;
            else return f.intercept;
        },
        m.equation_for(child)->family);
}

}  // namespace

TEST_CASE("OLS recovers the red car population regressions") {
    const double alpha = 1, beta = 1, gamma = 1, vA = 1, vU = 1;
    const auto d = ancestral_sample(red_car(alpha, beta, gamma, vA, vU), 1000000, 31);
    const Eigen::VectorXd y = vec(d.column("Y"));
    const auto unaware = ols_fit(design_matrix(d, make_encoding({"X"}, nullptr)), y);
    const double lambda = beta * gamma * vU / (alpha * alpha * vA + beta * beta * vU);
    CHECK(std::abs(unaware.weights(1) - lambda) <= 0.01);
    const auto full = ols_fit(design_matrix(d, make_encoding({"X", "A"}, nullptr)), y);
    CHECK(std::abs(full.weights(1) - gamma / beta) <= 0.01);
    CHECK(std::abs(full.weights(2) + alpha * gamma / beta) <= 0.01);
    CHECK(full.residual_std <= 1e-6);
}

TEST_CASE("OLS input checks") {
    DesignMatrix dm{Eigen::MatrixXd::Ones(3, 2), {"a", "b"}};
    CHECK_THROWS_AS(ols_fit(dm, Eigen::VectorXd::Zero(2)), Error);
    // collinear columns are resolved by the ridge jitter
    const auto fit = ols_fit(dm, Eigen::VectorXd::Constant(3, 2.0));
    CHECK(fit.weights.sum() == doctest::Approx(2.0));
}

TEST_CASE("logistic regression by IRLS") {
    const std::size_t n = 100000;
    KeyedRng rng(77);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y_null(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
        y_null(i) = i % 2;
        const double p = 1 / (1 + std::exp(-(0.5 - 1.0 * X(i, 1))));
        y(i) = rng.uniform() < p ? 1 : 0;
    }
    DesignMatrix dm{X, {"(intercept)", "x"}};
    const auto null_fit = logistic_fit(dm, y_null);
    CHECK(std::abs(null_fit.weights(0)) <= 0.02);
    CHECK(std::abs(null_fit.weights(1)) <= 0.02);
    const auto fit = logistic_fit(dm, y);
    CHECK(std::abs(fit.weights(0) - 0.5) <= 0.05);
    CHECK(std::abs(fit.weights(1) + 1.0) <= 0.05);
    CHECK_FALSE(fit.separation_warning);
    for (std::size_t i = 1; i < fit.loss_trace.size(); ++i) CHECK(fit.loss_trace[i] <= fit.loss_trace[i - 1] + 1e-12);

    CHECK_THROWS_AS(logistic_fit(dm, Eigen::VectorXd::Ones(n)), Error);
    // perfectly separated data is flagged, not rejected
    Eigen::VectorXd sep(n);
    for (std::size_t i = 0; i < n; ++i) sep(i) = X(i, 1) > 0;
    CHECK(logistic_fit(dm, sep).separation_warning);
}

TEST_CASE("one-hot encoding drops the smallest level") {
    CausalModel m;
    m.variables = {var("R", Role::Protected, {2, 0, 1}), var("X", Role::Observed)};
    const auto enc = make_encoding({"R", "X"}, &m);
    CHECK(enc.labels() == std::vector<std::string>{"(intercept)", "R=1", "R=2", "X"});
    std::vector<double> out(4);
    const std::vector<double> row{2, 0.5};
    enc.encode(row, out);
    CHECK(out == std::vector<double>{1, 0, 1, 0.5});
    const std::vector<double> bad{3, 0.5};
    CHECK_THROWS_AS(enc.encode(bad, out), Error);
    CHECK(Encoding::from_json(enc.to_json()).labels() == enc.labels());
}

TEST_CASE("level 3 residuals are orthogonal to the regressors") {
    CausalModel m;
    m.variables = {var("E1", Role::Background), var("E2", Role::Background), var("R", Role::Protected, {0, 1}),
                   var("S", Role::Protected, {0, 1}), var("GPA", Role::Observed), var("LSAT", Role::Observed),
                   var("Z", Role::Observed)};
    m.priors["E1"] = NormalPrior{};
    m.priors["E2"] = NormalPrior{};
    const double rho = 0.5;
    m.equations = {StructuralEquation{"R", {}, BernoulliLogit{-0.5, {}}, {}},
                   StructuralEquation{"S", {}, BernoulliLogit{0.2, {}}, {}},
                   lg("GPA", {"R", "S", "E1"}, 3.0, {-0.4, 0.13, 0.2}, 0),
                   lg("LSAT", {"R", "S", "E1", "E2"}, 30, {-3, 1, 4 * rho, 4 * std::sqrt(1 - rho * rho)}, 0),
                   lg("Z", {}, 2.0, {}, 1.0)};
    const std::size_t n = 100000;
    const auto d = ancestral_sample(m, n, 5);
    const auto res = level3_residuals(d, {"GPA", "LSAT", "Z"}, {"R", "S"}, &m);
    const auto& eg = res.column("eps_GPA");
    CHECK(std::abs(corr(eg, d.column("R"))) <= 0.01);
    double ip_r = 0, ip_1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ip_r += eg[i] * d.column("R")[i];
        ip_1 += eg[i];
    }
    CHECK(std::abs(ip_r) <= 1e-6 * n);
    CHECK(std::abs(ip_1) <= 1e-6 * n);
    CHECK(std::abs(corr(eg, res.column("eps_LSAT")) - rho) <= 0.02);
    const double zbar = mean(d.column("Z"));
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(res.column("eps_Z")[i] - (d.column("Z")[i] - zbar)));
    CHECK(worst <= 0.02);
    CHECK_THROWS_AS(level3_residuals(d, {"R"}, {"S"}, &m), Error);
}

TEST_CASE("Monte Carlo EM recovers the single-latent template") {
    for (double sign : {1.0, -1.0}) {
        const auto truth = law_level2(0.5 * sign);
        const auto d = ancestral_sample(truth, 3000, 101);
        McmcConfig cfg;
        cfg.seed = 9;
        const auto fit = fit_level2_latent(d, truth, cfg);
        for (const auto& child : {"GPA", "LSAT", "FYA"}) {
            for (const auto& parent : {"K", "R", "S"}) {
                const double w_true = weight_of(truth, child, parent) * (std::string(parent) == "K" ? sign : 1.0);
                CHECK(std::abs(weight_of(fit.model, child, parent) - w_true) <= 0.1);
            }
            CHECK(std::abs(intercept_of(fit.model, child) - intercept_of(truth, child)) <= 0.1);
        }
        CHECK(weight_of(fit.model, "GPA", "K") > 0);
        std::vector<double> kmean(d.rows());
        for (std::size_t i = 0; i < d.rows(); ++i) kmean[i] = fit.draws.row(i).mean();
        CHECK(sign * corr(kmean, d.column("K")) >= 0.8);
        CHECK(fit.mean_acceptance > 0.15);
        const std::vector<VariableId> ev{"GPA", "LSAT", "FYA"};
        const auto held = ancestral_sample(truth, 2000, 202);
        const double ll_fit = single_latent_loglik(fit.model, held, ev);
        const double ll_true = single_latent_loglik(truth, held, ev);
        CHECK(std::abs(ll_fit - ll_true) <= 0.02 * std::abs(ll_true));
    }
}

TEST_CASE("fit is deterministic and schedule independent") {
    const auto truth = law_level2();
    const auto d = ancestral_sample(truth, 300, 4);
    McmcConfig cfg;
    cfg.kept = 10;
    LatentFitOptions opt;
    opt.iterations = 5;
    const auto a = fit_level2_latent(d, truth, cfg, opt);
    set_thread_count(3);
    const auto b = fit_level2_latent(d, truth, cfg, opt);
    set_thread_count(0);
    CHECK(a.draws == b.draws);
    CHECK(weight_of(a.model, "GPA", "K") == weight_of(b.model, "GPA", "K"));
}
