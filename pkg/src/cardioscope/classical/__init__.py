"""Classical classifiers on the 193-feature vectors and their named presets."""

from __future__ import annotations

from ..errors import ConfigInvalid
from .boosting import GradientBoosting
from .forest import RandomForest
from .svm import SVC, smo_solve
from .tree import ClassWeights, DecisionTree, entropy

# name -> (model kind, SMOTE first?, hyperparameters)
PRESETS = {
    "dt": ("tree", False, {"criterion": "entropy", "max_depth": 40, "max_leaf_nodes": 40,
                           "class_weights": "5:1"}),
    "dt-smote": ("tree", True, {"criterion": "entropy", "max_depth": 60, "max_leaf_nodes": 40}),
    "svm": ("svm", False, {"C": 0.07, "gamma": "auto", "class_weights": "19:3"}),
    "svm-smote": ("svm", True, {"C": 70.0, "gamma": "auto"}),
    "rf": ("forest", False, {"criterion": "entropy", "n_estimators": 400, "max_depth": 10,
                             "max_leaf_nodes": 50, "class_weights": "5:1"}),
    "rf-smote": ("forest", True, {"criterion": "entropy", "n_estimators": 100, "max_depth": 10,
                                  "max_leaf_nodes": 64}),
    "gb": ("boosting", False, {"n_estimators": 400, "max_depth": 7, "learning_rate": 0.1}),
    "gb-smote": ("boosting", True, {"n_estimators": 400, "max_depth": 6, "learning_rate": 0.1}),
}

_BUILDERS = {"tree": DecisionTree, "svm": SVC, "forest": RandomForest, "boosting": GradientBoosting}


def preset(name: str) -> tuple[str, bool, dict]:
    if name not in PRESETS:
        raise ConfigInvalid(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kind, smote, params = PRESETS[name]
    return kind, smote, dict(params)


def build_model(kind: str, params: dict, seed: int = 0):
    if kind not in _BUILDERS:
        raise ConfigInvalid(f"unknown model kind {kind!r}")
    params = dict(params)
    if kind in ("tree", "forest", "boosting"):
        params.setdefault("seed", seed)
    try:
        return _BUILDERS[kind](**params)
    except TypeError as exc:
        raise ConfigInvalid(f"bad hyperparameters for {kind}: {exc}") from None


def model_to_dict(kind: str, model) -> dict:
    return {"kind": kind, "model": model.to_dict()}


def model_from_dict(d: dict):
    return _BUILDERS[d["kind"]].from_dict(d["model"])


__all__ = ["DecisionTree", "RandomForest", "GradientBoosting", "SVC", "ClassWeights", "entropy",
           "smo_solve", "PRESETS", "preset", "build_model", "model_to_dict", "model_from_dict"]
