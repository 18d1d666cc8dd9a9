"""Panel-ward disagreement as a function of jury safety scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import kernels
from ..errors import EmptySampleError, UndefinedStatisticError
from ..records import EvaluationRecord, EvaluatorId, EvaluatorKind, ScoreDimension, collapse_scores

GRID_POINTS = 256
# Half-width of the grid padding, in bandwidths.  Four keeps the mass lost
# past the grid below 1e-4 even for points sitting on the score bounds.
GRID_PAD = 4.0
DEFAULT_EDGES = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class KDECurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n: int


def silverman_bandwidth(values) -> float:
    """Rule-of-thumb bandwidth ``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise UndefinedStatisticError("bandwidth needs at least two values")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = (q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if spread <= 0:
        raise UndefinedStatisticError("zero variance: pass an explicit bandwidth")
    return 0.9 * spread * x.size ** (-0.2)


def gaussian_kde(values, bandwidth: float | None = None, lo: float = 1.0, hi: float = 5.0) -> KDECurve:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise EmptySampleError("KDE needs at least two values")
    if bandwidth is None:
        h = silverman_bandwidth(x)
    else:
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        h = float(bandwidth)
    start = min(lo, float(x.min())) - GRID_PAD * h
    stop = max(hi, float(x.max())) + GRID_PAD * h
    grid = np.linspace(start, stop, GRID_POINTS)
    return KDECurve(grid, kernels.kde_eval(grid, x, h), h, int(x.size))


@dataclass(frozen=True)
class DisagreementCurve:
    edges: tuple[float, ...]
    centers: np.ndarray
    counts: np.ndarray
    disagreements: np.ndarray
    probability: np.ndarray  # NaN for empty bins
    pearson_r: float | None
    r_error: str | None
    slope: float | None
    intercept: float | None
    n_agree: int
    n_disagree: int
    kde_agree: KDECurve | None
    kde_disagree: KDECurve | None


def _bin_index(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[x == edges[-1]] = len(edges) - 2
    if (idx < 0).any() or (idx > len(edges) - 2).any():
        raise ValueError("scores outside the bin edges")
    return idx


def _safe_kde(values) -> KDECurve | None:
    try:
        return gaussian_kde(values)
    except (UndefinedStatisticError, EmptySampleError):
        return None


def disagreement_curve(safety, disagree, edges: Sequence[float] = DEFAULT_EDGES) -> DisagreementCurve:
    """Empirical P(disagreement) per safety-score bin, plus per-group KDEs.

    Bins are half-open ``[e_i, e_{i+1})`` with the last bin closed.  Also
    reports the Pearson r of bin centre vs probability over non-empty bins
    and an ordinary least-squares line of the 0/1 flag on the score.
    """
    x = np.asarray(safety, dtype=float)
    d = np.asarray(disagree, dtype=bool)
    if x.shape != d.shape:
        raise ValueError("safety and disagree must align")
    e = np.asarray(edges, dtype=float)
    idx = _bin_index(x, e)
    nb = len(e) - 1
    counts = np.bincount(idx, minlength=nb)
    k = np.bincount(idx, weights=d.astype(float), minlength=nb)
    nonempty = counts > 0
    if nonempty.sum() < 2:
        raise EmptySampleError("need at least two non-empty bins")
    prob = np.full(nb, np.nan)
    prob[nonempty] = k[nonempty] / counts[nonempty]
    centers = 0.5 * (e[:-1] + e[1:])

    r, r_error = None, None
    pc, pp = centers[nonempty], prob[nonempty]
    if np.ptp(pp) == 0:
        r_error = "probability is constant across bins; correlation undefined"
    else:
        r = float(np.corrcoef(pc, pp)[0, 1])
    slope = intercept = None
    if np.ptp(x) > 0:
        slope, intercept = (float(v) for v in np.polyfit(x, d.astype(float), 1))
    return DisagreementCurve(
        edges=tuple(e.tolist()),
        centers=centers,
        counts=counts,
        disagreements=k.astype(int),
        probability=prob,
        pearson_r=r,
        r_error=r_error,
        slope=slope,
        intercept=intercept,
        n_agree=int((~d).sum()),
        n_disagree=int(d.sum()),
        kde_agree=_safe_kde(x[~d]),
        kde_disagree=_safe_kde(x[d]),
    )


def ward_disagreement_data(
    records: Sequence[EvaluationRecord], jury: EvaluatorId, ward_agent: str = "ward"
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """(cases, jury safety on the ward answer, panel disagreed with ward)."""
    safety = collapse_scores(records, jury, ScoreDimension.SAFETY)
    labels: dict[str, bool] = {}
    for r in records:
        if r.evaluator.kind is EvaluatorKind.PRIMARY_PANEL and r.ward_agreement is not None:
            labels[r.case_id] = not r.ward_agreement
    cases = sorted(c for (c, a) in safety if a == ward_agent and c in labels)
    return (
        cases,
        np.array([safety[(c, ward_agent)] for c in cases], dtype=float),
        np.array([labels[c] for c in cases], dtype=bool),
    )


def trapezoid_mass(curve: KDECurve) -> float:
    y, g = curve.density, curve.grid
    return float(math.fsum(((y[1:] + y[:-1]) * np.diff(g) / 2).tolist()))
