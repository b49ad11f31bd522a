import csv
import json
import math

import pytest

import cfair


def slope(x, y):
    mx = sum(x) / len(x)
    my = sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    return sxy / sxx


def test_scenario_is_deterministic_and_observed_only():
    model, data = cfair.generate_scenario("red_car", n=500, seed=3)
    _, again = cfair.generate_scenario("red_car", n=500, seed=3)
    assert data == again
    assert set(data) == {"A", "X", "Y"}
    assert cfair.validate_model(model) == []
    _, full = cfair.generate_scenario("red_car", n=10, seed=3, include_latents=True)
    assert "U" in full


def test_red_car_unaware_slope_matches_covariance_ratio():
    # With unit parameters Cov(X, Y) / Var(X) = 1 / 2.
    _, data = cfair.generate_scenario("red_car", n=40000, seed=11)
    assert slope(data["X"], data["Y"]) == pytest.approx(0.5, abs=0.02)


def test_validate_reports_cycle():
    model, _ = cfair.generate_scenario("red_car", n=1)
    for eq in model["equations"]:
        if eq["child"] == "A":
            eq["parents"].append("X")
            eq["params"]["weights"].append(1.0)
    codes = [code for code, _ in cfair.validate_model(model)]
    assert "CycleDetected" in codes


def test_counterfactual_shift_on_zero_noise_descendant():
    model, _ = cfair.generate_scenario("red_car", n=1)
    draws = cfair.counterfactual_sample(model, {"A": -1.0, "X": 0.3}, {"A": 1.0}, n_draws=200, seed=5)
    # X = alpha A + beta U with U pinned by the evidence, so X moves by alpha * 2.
    assert all(x == pytest.approx(2.3, abs=1e-9) for x in draws["X"])
    assert all(a == 1.0 for a in draws["A"])


def test_unaware_fails_and_fair_add_passes_audit():
    model, data = cfair.generate_scenario("red_car", n=2000, seed=7)
    unaware, unaware_model = cfair.fit_recipe("unaware", model, data, seed=7)
    report = cfair.audit(unaware, unaware_model, data, "A", -1.0, 1.0, draws_per_record=100, max_records=40, seed=7)
    assert report["verdict"] == "FAIL"

    fair, fair_model = cfair.fit_recipe("fair_add", model, data, seed=7)
    report = cfair.audit(fair, fair_model, data, "A", -1.0, 1.0, draws_per_record=100, max_records=40, seed=7)
    assert report["verdict"] == "PASS"
    assert len(report["factual_density"]) == len(report["counterfactual_density"]) > 0

    preds = cfair.predict(fair, fair_model, data)
    assert len(preds) == len(data["Y"])
    assert all(math.isfinite(p) for p in preds)


def test_oracle_linear_scenario():
    result = cfair.oracle("red_car")
    assert "unaware_slope" in json.dumps(result)


def test_errors_carry_code():
    with pytest.raises(cfair.CfairError, match="UnsupportedScenario"):
        cfair.generate_scenario("no_such_scenario")
    with pytest.raises(cfair.CfairError):
        cfair.fit_recipe("fair_learning", *cfair.generate_scenario("red_car", n=50))


def test_run_experiment_writes_outputs(tmp_path):
    config = {
        "scenario": {"kind": "red_car", "n": 600},
        "recipes": ["full", "fair_add"],
        "audits": [{"criterion": "cf", "attribute": "A", "a": -1, "a_prime": 1}],
        "audit": {"draws_per_record": 50, "max_records": 20},
        "seed": 2,
        "output": str(tmp_path / "out"),
    }
    report = cfair.run_experiment(config)
    assert [r["recipe"] for r in report["recipes"]] == ["full", "fair_add"]
    with open(tmp_path / "out" / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["recipe_id"]) for r in rows] == [0.0, 3.0]
    assert (tmp_path / "out" / "report.json").exists()
