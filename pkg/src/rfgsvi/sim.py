"""Structural-equation DGPs with known DAGs and the Monte Carlo comparison driver."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .cart import grow_tree, cart_vi
from .condvi import cf_vi
from .dataset import Dataset
from .forest import ForestParams, fit_forest, rf_vi_mda
from .gsa import rf_gs_vi
from .projected import sobol_mda_vi
from .report import METHODS, ViReport
from .rng import RngSeed

log = logging.getLogger(__name__)

# direct parents of Y, 0-based
CORRECT_SETS = {1: frozenset({1, 2, 3}), 2: frozenset({2, 3}), 3: frozenset({1, 2})}


@dataclass(frozen=True)
class DgpSpec:
    scenario: int
    n: int = 1000
    a: float = 3.0
    b: float = 3.0
    c: float = 2.0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.scenario not in CORRECT_SETS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected 1, 2 or 3")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.noise_sd > 0:
            raise ValueError(f"noise_sd must be > 0, got {self.noise_sd}")

    @property
    def p(self) -> int:
        return 5 if self.scenario == 2 else 4

    @property
    def correct_set(self) -> frozenset[int]:
        return CORRECT_SETS[self.scenario]


def generate_dgp(spec: DgpSpec, rng: RngSeed) -> Dataset:
    """Draw one dataset. Each noise term has its own stream, so e.g. Y never consumes eps_4.

    Normal variates come from numpy's ziggurat ``standard_normal`` on a Philox stream.
    """
    n, a, b, c = spec.n, spec.a, spec.b, spec.c

    def eps(name):
        return spec.noise_sd * rng.child("eps", name).generator().standard_normal(n)

    x1 = eps("X1")
    if spec.scenario == 1:
        x2, x3, x4 = (a * x1 + eps(f"X{j}") for j in (2, 3, 4))
        y = b * x2 + b * x3 + b * x4 + eps("Y")
        cols = [x1, x2, x3, x4]
    elif spec.scenario == 2:
        x2 = a * x1 + eps("X2")
        x3 = a * x2 + eps("X3")
        x4 = a * x2 + eps("X4")
        x5 = a * x2 + eps("X5")
        y = b * x3 + b * x4 + eps("Y")
        cols = [x1, x2, x3, x4, x5]
    else:
        x2 = a * x1 + eps("X2")
        x3 = eps("X3")
        y = b * x2 + b * x3 + eps("Y")
        x4 = c * x2 + c * y + eps("X4")
        cols = [x1, x2, x3, x4]
    return Dataset.from_arrays(np.column_stack(cols), y)


def rank_correct_first(report: ViReport, correct_set) -> bool:
    correct_set = set(correct_set)
    if not correct_set:
        raise ValueError("correct set must be nonempty")
    return int(report.ranking[0]) in correct_set


@dataclass(frozen=True)
class MethodParams:
    forest: ForestParams = ForestParams()
    cart_min_node: int = 5
    cf_threshold: float = 0.2
    cf_bins: int = 4
    cf_all: bool = False
    aggregate: str = "forest"
    gsa_L: int = 30
    gsa_forest: ForestParams = ForestParams()
    gsa_seeding: str = "common"
    gsa_empty_model: str = "exclude"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MethodParams:
        d = dict(d)
        d["forest"] = ForestParams(**d["forest"])
        d["gsa_forest"] = ForestParams(**d["gsa_forest"])
        return cls(**d)


def score_methods(data: Dataset, methods, params: MethodParams, rng: RngSeed) -> dict[str, ViReport]:
    """Run each requested estimator once on ``data``; forest-based ones share one forest."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    out = {}
    forest = None
    if {"RF_MDA", "CF", "SOBOL_MDA"} & set(methods):
        forest = fit_forest(data, params.forest, rng.child("forest"))
    for m in METHODS:
        if m not in methods:
            continue
        if m == "CART":
            out[m] = cart_vi(grow_tree(data, min_node=params.cart_min_node), data.feature_names)
        elif m == "RF_MDA":
            out[m] = rf_vi_mda(forest, data, rng.child("mda"), params.aggregate)
        elif m == "CF":
            out[m] = cf_vi(forest, data, params.cf_threshold, params.cf_bins, rng.child("cf"),
                           condition_on_all=params.cf_all, aggregate=params.aggregate)
        elif m == "SOBOL_MDA":
            out[m] = sobol_mda_vi(forest, data, params.aggregate)
        elif m == "RF_GS":
            out[m] = rf_gs_vi(data, params.gsa_L, params.gsa_forest, rng.child("gsa"),
                                 params.gsa_seeding, params.gsa_empty_model)
    return out


@dataclass(eq=False)
class McSummary:
    method: str
    per_feature_mean: np.ndarray
    per_feature_sd: np.ndarray
    correct_first_proportion: float
    replications: int
    scores: np.ndarray = field(repr=False)  # replications x p

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "replications": self.replications,
            "per_feature_mean": self.per_feature_mean.tolist(),
            "per_feature_sd": self.per_feature_sd.tolist(),
            "correct_first_proportion": self.correct_first_proportion,
        }


def _replicate(spec: DgpSpec, methods, params: MethodParams, rng: RngSeed, r: int) -> dict[str, np.ndarray]:
    rep = rng.child("replication", r)
    data = generate_dgp(spec, rep.child("data"))
    try:
        reports = score_methods(data, methods, params, rep.child("methods"))
    except Exception as exc:
        raise RuntimeError(f"replication {r} failed: {exc}") from exc
    return {m: rep_.scores for m, rep_ in reports.items()}


def summarize(method: str, scores: np.ndarray, correct_set) -> McSummary:
    scores = np.asarray(scores, dtype=np.float64)
    R = scores.shape[0]
    sd = scores.std(axis=0, ddof=1) if R > 1 else np.zeros(scores.shape[1])
    hits = [rank_correct_first(ViReport.from_scores(method, s), correct_set) for s in scores]
    return McSummary(method, scores.mean(axis=0), sd, float(np.mean(hits)), R, scores)


def run_monte_carlo(spec: DgpSpec, methods, replications: int, params: MethodParams = MethodParams(),
                    rng: RngSeed = RngSeed(0), n_jobs: int = 1) -> list[McSummary]:
    """Replicate data generation and scoring; replication r always uses stream ("replication", r)."""
    methods = [m for m in METHODS if m in set(methods)]
    if not methods:
        raise ValueError("no methods requested")
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    if n_jobs == 1:
        results = [_replicate(spec, methods, params, rng, r) for r in range(replications)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(spec, methods, params, rng, r) for r in range(replications))
    return [summarize(m, np.array([res[m] for res in results]), spec.correct_set) for m in methods]
