#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cfair/error.hpp"
#include "cfair/experiment.hpp"
#include "cfair/io.hpp"
#include "cfair/scm.hpp"

using namespace cfair;
namespace fs = std::filesystem;

namespace {

McmcConfig quick_mcmc() {
    McmcConfig c;
    c.chains = 2;
    c.burn_in = 100;
    c.kept = 20;
    c.thin = 2;
    c.seed = 9;
    return c;
}

ScenarioParams law(std::size_t n, std::uint64_t seed = 3) {
    ScenarioParams p;
    p.kind = ScenarioKind::LawSchool;
    p.n = n;
    p.seed = seed;
    return p;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cfair_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Parse;
}

}  // namespace

TEST_CASE("split is stratified, disjoint and seeded") {
    Dataset d;
    std::vector<double> y(103);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 4 == 0 ? 1.0 : 0.0;
    d.add_column("Y", y);
    const auto s = train_test_split(d, "Y", 0.2, 5);
    const auto positives = std::count(y.begin(), y.end(), 1.0);
    const auto negatives = static_cast<long>(y.size()) - positives;
    const auto test_pos = std::count_if(s.test.begin(), s.test.end(), [&](auto i) { return y[i] == 1.0; });
    CHECK(test_pos == std::lround(0.2 * positives));
    CHECK(static_cast<long>(s.test.size()) - test_pos == std::lround(0.2 * negatives));
    CHECK(s.train.size() + s.test.size() == y.size());
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(std::is_sorted(s.test.begin(), s.test.end()));
    CHECK(train_test_split(d, "Y", 0.2, 5).test == s.test);
    CHECK(train_test_split(d, "Y", 0.2, 6).test != s.test);

    Dataset c;
    std::vector<double> z(50);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.5 * static_cast<double>(i);
    c.add_column("Y", z);
    CHECK(train_test_split(c, "Y", 0.2, 1).test.size() == 10);
}

TEST_CASE("loss helpers") {
    const std::vector<double> p{0.5, 1.0, 3.0}, t{0.0, 1.0, 1.0};
    CHECK(rmse(p, t) == doctest::Approx(std::sqrt((0.25 + 0 + 4) / 3.0)));
    const std::vector<double> q{0.8, 0.3}, l{1.0, 0.0};
    CHECK(log_loss(q, l) == doctest::Approx(-(std::log(0.8) + std::log(0.7)) / 2));
}

TEST_CASE("additive residual model reproduces the residuals") {
    auto [model, full] = generate(law(2000));
    const auto data = observed_columns(model, full);
    const auto l3 = additive_residual_model(data, model);
    CHECK(l3.has("eps_GPA"));
    CHECK(l3.has("eps_LSAT"));
    CHECK(!l3.has("K"));
    CHECK(!l3.has("FYA"));
    // independent path: per-target least squares residuals
    const auto resid = level3_residuals(data, {"GPA", "LSAT"}, {"R", "S"}, &model);
    const std::vector<std::size_t> rows{0, 7, 123};
    const auto draws = posterior_draws(l3, data, abduction_evidence(l3, data), quick_mcmc(), rows);
    const auto eps_gpa = *l3.index_of("eps_GPA");
    const auto eps_lsat = *l3.index_of("eps_LSAT");
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& lat = draws.records[k].latent;
        CHECK(lat(0, static_cast<Eigen::Index>(eps_gpa)) ==
              doctest::Approx(resid.column("eps_GPA")[rows[k]]).epsilon(1e-6));
        CHECK(lat(lat.rows() - 1, static_cast<Eigen::Index>(eps_lsat)) ==
              doctest::Approx(resid.column("eps_LSAT")[rows[k]]).epsilon(1e-6));
    }
}

TEST_CASE("law school recipes: fair recipes pass the race audit, baselines fail") {
    auto [model, full] = generate(law(1500));
    const auto data = observed_columns(model, full);
    const auto split = train_test_split(data, "FYA", 0.2, 1);
    const auto train = data.select_rows(split.train), test = data.select_rows(split.test);
    RecipeOptions opts;
    opts.mcmc = quick_mcmc();
    opts.latent.iterations = 15;
    AuditOptions audit;
    audit.draws_per_record = 100;
    audit.max_records = 30;
    const AuditSpec race{"cf", "R", 0.0, 1.0, {}};
    for (auto recipe : {Recipe::Full, Recipe::Unaware, Recipe::FairK, Recipe::FairAdd}) {
        const auto r = fit_recipe(recipe, train, model, opts);
        CHECK(r.predictor.recipe == to_string(recipe));
        const auto pred = predict_recipe(r, test, opts.mcmc);
        CHECK(pred.size() == test.rows());
        CHECK(std::isfinite(rmse(pred, test.column("FYA"))));
        const auto report = run_audit(race, r.predictor, r.model, test, opts.mcmc, audit);
        const bool fair = recipe == Recipe::FairK || recipe == Recipe::FairAdd;
        CHECK_MESSAGE(report.pass == fair, to_string(recipe), " statistic ", report.aggregate);
    }
    CHECK_THROWS_AS(fit_recipe(Recipe::FairLearning, train, model, opts), Error);
}

TEST_CASE("experiment config validation") {
    const auto dir = scratch("config");
    using nlohmann::json;
    auto code = [&](const char* text) {
        return code_of([&] { ExperimentConfig::from_json(json::parse(text), dir); });
    };
    CHECK(code(R"({"model": "missing.json", "data": "d.csv", "recipes": ["full"]})") == ErrorCode::Config);
    CHECK(code(R"({"scenario": {"kind": "red_car"}, "recipes": ["fast"]})") == ErrorCode::Config);
    CHECK(code(R"({"scenario": {"kind": "red_car"}, "recipes": ["full"], "colour": 1})") == ErrorCode::Config);
    CHECK(code(R"({"scenario": {"kind": "red_car"}, "recipes": ["fair_learning"]})") == ErrorCode::Config);
    CHECK(code(R"({"scenario": {"kind": "red_car"}, "recipes": []})") == ErrorCode::Config);
    CHECK(code(R"({"scenario": {"kind": "red_car"}, "recipes": ["full"], "audits": [{"a": 1}]})") == ErrorCode::Config);
    CHECK(code(R"({"scenario": {"kind": "mars"}, "recipes": ["full"]})") == ErrorCode::UnsupportedScenario);
    const auto ok = ExperimentConfig::from_json(
        json::parse(R"({"scenario": {"kind": "red_car", "n": 500}, "recipes": ["full"], "seed": 4, "output": "out"})"), dir);
    CHECK(ok.output == dir / "out");
    CHECK(ExperimentConfig::from_json(ok.to_json()).to_json() == ok.to_json());
}

TEST_CASE("experiment writes parseable, deterministic outputs") {
    const auto dir = scratch("run");
    using nlohmann::json;
    auto doc = json::parse(R"({
        "scenario": {"kind": "red_car", "n": 800},
        "recipes": ["full", "unaware"],
        "audits": [{"criterion": "cf", "a": -1.0, "a_prime": 1.0}],
        "seed": 12,
        "mcmc": {"burn_in": 50, "kept": 20, "thin": 1},
        "audit": {"draws_per_record": 50, "max_records": 20},
        "output": "a"
    })");
    const auto first = run_experiment_to_disk(ExperimentConfig::from_json(doc, dir));
    doc["output"] = "b";
    run_experiment_to_disk(ExperimentConfig::from_json(doc, dir));
    CHECK(first.any_fail);
    CHECK(first.recipes[0].audits[0].pass);
    CHECK(!first.recipes[1].audits[0].pass);

    const auto metrics = read_csv(dir / "a" / "metrics.csv");
    CHECK(metrics.rows() == 2);
    CHECK(metrics.column("recipe_id") == std::vector<double>{0.0, 1.0});
    CHECK(metrics.column("audit0_cf_A_pass") == std::vector<double>{1.0, 0.0});
    const auto report = read_json(dir / "a" / "report.json");
    CHECK(report.at("seeds").at("seed") == 12);
    CHECK(report.at("recipes").size() == 2);
    const auto predictor = FairPredictor::from_json(report.at("recipes")[1].at("predictor"));
    CHECK(predictor.recipe == "unaware");
    const auto density = read_csv(dir / "a" / report.at("recipes")[1].at("audits")[0].at("density_file").get<std::string>());
    CHECK(density.rows() == 20 * 50);
    // identical except the output directory recorded in the config
    CHECK(read_text(dir / "a" / "metrics.csv") == read_text(dir / "b" / "metrics.csv"));
    auto ra = read_json(dir / "a" / "report.json"), rb = read_json(dir / "b" / "report.json");
    ra["config"].erase("output");
    rb["config"].erase("output");
    CHECK(ra == rb);
}
