"""Variance-based sensitivity indices and the feature-subset total-index importance (RF_GS)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset
from .forest import ForestParams, fit_forest, oob_mse
from .report import ViReport
from .rng import RngSeed

Sampler = Callable[[np.random.Generator, int], np.ndarray]

SEEDING_MODES = ("common", "per-mask", "per-draw")
EMPTY_MODELS = ("exclude", "mean")


class DegenerateVarianceError(ValueError):
    """The output (or fit-score) variance is zero, so the indices are undefined."""


@dataclass(frozen=True, eq=False)
class SensitivityEstimate:
    total: np.ndarray
    output_variance: float
    sample_count: int
    first_order: np.ndarray | None = None


def uniform_sampler(k: int, low: float = 0.0, high: float = 1.0) -> Sampler:
    def sample(gen, N):
        return gen.uniform(low, high, size=(N, k))
    return sample


def normal_sampler(k: int) -> Sampler:
    def sample(gen, N):
        return gen.standard_normal((N, k))
    return sample


def _jansen(f, sampler: Sampler, N: int, rng: RngSeed) -> SensitivityEstimate:
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    gen = rng.generator()
    A = np.asarray(sampler(gen, N), dtype=np.float64)
    B = np.asarray(sampler(gen, N), dtype=np.float64)
    fA = np.asarray(f(A), dtype=np.float64)
    fB = np.asarray(f(B), dtype=np.float64)
    V = float(np.var(np.concatenate([fA, fB]), ddof=1))
    if not V > 0:
        raise DegenerateVarianceError("zero output variance: sensitivity indices are undefined")
    k = A.shape[1]
    S = np.empty(k)
    T = np.empty(k)
    for i in range(k):
        ABi = A.copy()
        ABi[:, i] = B[:, i]
        fABi = np.asarray(f(ABi), dtype=np.float64)
        S[i] = (V - np.sum((fB - fABi) ** 2) / (2 * N)) / V
        T[i] = np.sum((fA - fABi) ** 2) / (2 * N) / V
    return SensitivityEstimate(total=T, output_variance=V, sample_count=N, first_order=S)


def jansen_first_order(f, sampler: Sampler, N: int, rng: RngSeed) -> SensitivityEstimate:
    """First-order indices S_i = [V - sum(f(B) - f(A_B^i))^2 / 2N] / V.

    ``f`` maps an (N, k) input matrix to N outputs. The returned estimate also
    carries the total indices computed from the same A/B design.
    """
    return _jansen(f, sampler, N, rng)


def jansen_total(f, sampler: Sampler, N: int, rng: RngSeed) -> SensitivityEstimate:
    """Total indices T_i = sum(f(A) - f(A_B^i))^2 / (2N V)."""
    return _jansen(f, sampler, N, rng)


def mask_code(mask) -> int:
    return int(sum(1 << j for j, b in enumerate(mask) if b))


def mask_bits(code: int, p: int) -> np.ndarray:
    return np.array([(code >> j) & 1 for j in range(p)], dtype=bool)


def subset_rmse(data: Dataset, mask, params: ForestParams, rng: RngSeed) -> float:
    """Fit score of the forest restricted to ``mask``: OOB RMSE.

    The empty mask scores the constant training-mean predictor.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        y = data.response
        return float(np.sqrt(np.mean((y - y.mean()) ** 2)))
    forest = fit_forest(data, params, rng, features=np.flatnonzero(mask))
    return float(np.sqrt(oob_mse(forest, data)))


class _Scorer:
    """Evaluates q(mask) under one of the seeding modes, memoising when q depends on the mask only."""

    def __init__(self, data: Dataset, params: ForestParams, rng: RngSeed, seeding: str):
        if seeding not in SEEDING_MODES:
            raise ValueError(f"seeding must be one of {SEEDING_MODES}, got {seeding!r}")
        self.data, self.params, self.rng, self.seeding = data, params, rng, seeding
        self.cache: dict[int, float] = {}
        self.log: list[tuple[int, int, int, float]] = []

    def __call__(self, mask, draw: int, coord: int) -> float:
        code = mask_code(mask)
        if self.seeding == "per-draw":
            q = subset_rmse(self.data, mask, self.params, self.rng.child("fit", draw, coord))
        else:
            if code not in self.cache:
                fit_rng = self.rng.child("fit") if self.seeding == "common" else self.rng.child("fit", code)
                self.cache[code] = subset_rmse(self.data, mask, self.params, fit_rng)
            q = self.cache[code]
        self.log.append((draw, coord, code, q))
        return q


def _draw_masks(rng: RngSeed, L: int, p: int, allow_empty: bool) -> np.ndarray:
    gen = rng.child("gamma").generator()
    gammas = gen.integers(0, 2, size=(L, p)).astype(bool)
    if not allow_empty:
        for l in range(L):
            while not gammas[l].any():
                gammas[l] = gen.integers(0, 2, size=p).astype(bool)
    return gammas


def rf_gs_vi(data: Dataset, L: int = 30, forest_params: ForestParams = ForestParams(),
             rng: RngSeed = RngSeed(0), seeding: str = "common", empty_model: str = "exclude") -> ViReport:
    """Total sensitivity of the forest fit score to each feature's inclusion bit.

    For l = 1..L a mask with fair-coin bits is drawn and scored, then each bit k is
    switched and the switched mask scored. Score_k = sum_l (q_kl - q_l)^2 / (4L)
    divided by the sample variance of the q_l.

    ``seeding`` picks the forest-fitting streams: ``"common"`` shares one stream
    across masks, ``"per-mask"`` keys it by the mask, ``"per-draw"`` by (l, k).
    ``empty_model="exclude"`` draws the masks from the nonempty ones and drops
    switch terms that land on the empty mask; ``"mean"`` scores the empty mask
    with the constant training-mean predictor.
    """
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    if empty_model not in EMPTY_MODELS:
        raise ValueError(f"empty_model must be one of {EMPTY_MODELS}, got {empty_model!r}")
    p = data.p
    keep_empty = empty_model == "mean"
    gammas = _draw_masks(rng, L, p, keep_empty)
    score = _Scorer(data, forest_params, rng, seeding)
    q = np.empty(L)
    sq = np.zeros(p)
    for l in range(L):
        q[l] = score(gammas[l], l, p)
        for k in range(p):
            g = gammas[l].copy()
            g[k] = not g[k]
            if g.any() or keep_empty:
                sq[k] += (score(g, l, k) - q[l]) ** 2
    V = float(np.var(q, ddof=1))
    if not V > 0:
        raise DegenerateVarianceError("all sampled subset models have the same fit score")
    extra = {"q_log": score.log, "variance": V}
    return ViReport.from_scores("RF_GS", sq / (4 * L) / V, feature_names=data.feature_names, extra=extra)


def rf_gs_vi_exhaustive(data: Dataset, forest_params: ForestParams = ForestParams(),
                        rng: RngSeed = RngSeed(0), seeding: str = "common", empty_model: str = "exclude",
                        max_p: int = 15) -> ViReport:
    """Exact total index under the uniform measure on the masks (one fit per mask).

    With ``empty_model="exclude"`` the measure is uniform on the nonempty masks
    and pairs involving the empty mask are dropped, matching :func:`rf_gs_vi`.
    """
    p = data.p
    if p > max_p:
        raise ValueError(f"exhaustive evaluation needs 2^{p} fits; refusing p > {max_p}")
    if seeding == "per-draw":
        raise ValueError("exhaustive evaluation needs q to depend on the mask only")
    if empty_model not in EMPTY_MODELS:
        raise ValueError(f"empty_model must be one of {EMPTY_MODELS}, got {empty_model!r}")
    score = _Scorer(data, forest_params, rng, seeding)
    n_masks = 1 << p
    codes = np.arange(n_masks)
    valid = codes >= (0 if empty_model == "mean" else 1)
    q = np.full(n_masks, np.nan)
    for c in codes[valid]:
        q[c] = score(mask_bits(c, p), c, p)
    V = float(np.var(q[valid])) if valid.sum() > 1 else 0.0
    if not V > 0:
        raise DegenerateVarianceError("fit score is constant over all masks")
    T = np.empty(p)
    for k in range(p):
        partner = codes ^ (1 << k)
        both = valid & valid[partner]
        full = np.sum((q[both] - q[partner[both]]) ** 2)
        lower = codes[both & ((codes >> k) & 1 == 0)]
        pairs = np.sum((q[lower] - q[lower ^ (1 << k)]) ** 2)
        assert np.isclose(full, 2 * pairs, rtol=1e-12, atol=0.0), "switch pairing broken"
        T[k] = full / valid.sum() / (4 * V)
    extra = {"q": q.tolist(), "variance": V}
    return ViReport.from_scores("RF_GS", T, feature_names=data.feature_names, extra=extra)
