"""Common output of every importance estimator."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

METHODS = ("CART", "RF_MDA", "CF", "SOBOL_MDA", "RF_GS")


def rank_scores(scores) -> np.ndarray:
    """Feature indices by descending score; ties keep the lower index first."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


@dataclass(eq=False)
class ViReport:
    method: str
    scores: np.ndarray
    ranking: np.ndarray
    normalized: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None
    extra: dict | None = None

    @classmethod
    def from_scores(cls, method: str, scores, feature_names=None, normalize: bool = False,
                    extra: dict | None = None) -> ViReport:
        if method not in METHODS:
            raise ValueError(f"unknown method tag {method!r}")
        scores = np.asarray(scores, dtype=np.float64)
        normalized = None
        if normalize:
            top = scores.max(initial=0.0)
            normalized = 100.0 * scores / top if top > 0 else np.zeros_like(scores)
        names = tuple(feature_names) if feature_names is not None else None
        return cls(method, scores, rank_scores(scores), normalized, names, extra)

    @property
    def names(self) -> tuple[str, ...]:
        if self.feature_names is not None:
            return self.feature_names
        return tuple(f"X{j + 1}" for j in range(len(self.scores)))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "features": list(self.names),
            "scores": [float(s) for s in self.scores],
            "ranking": [int(r) for r in self.ranking],
            "normalized": None if self.normalized is None else [float(s) for s in self.normalized],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ViReport:
        d = json.loads(text)
        norm = d.get("normalized")
        return cls(d["method"], np.array(d["scores"], dtype=np.float64), np.array(d["ranking"], dtype=np.int64),
                   None if norm is None else np.array(norm, dtype=np.float64), tuple(d["features"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "score", "rank"])
        rank_of = np.empty(len(self.scores), dtype=np.int64)
        rank_of[self.ranking] = np.arange(1, len(self.scores) + 1)
        for name, s, r in zip(self.names, self.scores, rank_of):
            w.writerow([name, repr(float(s)), int(r)])
        return buf.getvalue()
