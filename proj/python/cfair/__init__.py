"""Counterfactual fairness toolkit.

Models, predictors and reports cross the boundary as JSON; this wrapper
accepts and returns plain dicts. Datasets are dicts of column name to list.
"""

import json

from . import _core
from ._core import CfairError, ancestral_sample as _ancestral_sample, set_threads

__all__ = [
    "CfairError",
    "set_threads",
    "validate_model",
    "ancestral_sample",
    "generate_scenario",
    "oracle",
    "counterfactual_sample",
    "fit_recipe",
    "predict",
    "audit",
    "run_experiment",
]


def _dump(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def validate_model(model):
    """List of (error code, message); empty when the model is valid."""
    return _core.validate_model(_dump(model))


def ancestral_sample(model, n, seed=0):
    return _ancestral_sample(_dump(model), n, seed)


def generate_scenario(kind, params=None, n=1000, seed=0, include_latents=False):
    """Returns (model dict, data dict) for a built-in scenario."""
    model, data = _core.generate_scenario(kind, params or {}, n, seed, include_latents)
    return json.loads(model), data


def oracle(kind, params=None):
    return json.loads(_core.oracle(kind, params or {}))


def counterfactual_sample(model, evidence, intervention, n_draws=1000, seed=0):
    return _core.counterfactual_sample(_dump(model), evidence, intervention, n_draws, seed)


def fit_recipe(recipe, model, data, manifest=None, seed=0, chains=2, kept=100, burn_in=500, thin=5,
               em_iterations=50):
    """Returns (predictor dict, model dict). The model is the one the predictor's inputs live in."""
    predictor, fitted = _core.fit_recipe(recipe, _dump(model), data, None if manifest is None else _dump(manifest),
                                         seed, chains, kept, burn_in, thin, em_iterations)
    return json.loads(predictor), json.loads(fitted)


def predict(predictor, model, data, seed=0, chains=2, kept=100, burn_in=500, thin=5):
    return _core.predict(_dump(predictor), _dump(model), data, seed, chains, kept, burn_in, thin)


def audit(predictor, model, data, attribute, a, a_prime, criterion="cf", paths=None, draws_per_record=1000,
          max_records=200, threshold=0.05, seed=0):
    """Fairness report dict with factual and counterfactual density samples."""
    return json.loads(_core.audit(_dump(predictor), _dump(model), data, attribute, a, a_prime, criterion,
                                  paths or [], draws_per_record, max_records, threshold, seed))


def run_experiment(config, base_dir=""):
    """Runs an experiment config and writes its outputs; returns the report dict."""
    return json.loads(_core.run_experiment(_dump(config), str(base_dir)))
