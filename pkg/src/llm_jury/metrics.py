"""Paired-evaluator agreement statistics and single-evaluator summaries.

All public functions accept either a :class:`~llm_jury.records.PairedScores`,
an ``(n, 2)`` array, or a sequence of ``(ref, other)`` tuples.  Sums use
``math.fsum`` so results do not depend on the order of the pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import EmptySampleError, ScoreValidationError, UndefinedStatisticError
from .records import DIMENSIONS, EvaluationRecord, PairedScores, ScoreDimension

CATEGORIES = (1, 2, 3, 4, 5)


def as_pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, PairedScores):
        return np.asarray(pairs.ref, dtype=float), np.asarray(pairs.other, dtype=float)
    if isinstance(pairs, tuple) and len(pairs) == 2 and all(isinstance(p, np.ndarray) for p in pairs):
        return np.asarray(pairs[0], dtype=float), np.asarray(pairs[1], dtype=float)
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=float)
    if arr.size == 0:
        return np.empty(0), np.empty(0)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (ref, other) pairs, got shape {arr.shape}")
    return arr[:, 0].copy(), arr[:, 1].copy()


def _mean(x: Iterable[float]) -> float:
    x = list(x)
    return math.fsum(x) / len(x)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ma, mb = _mean(a.tolist()), _mean(b.tolist())
    da, db = a - ma, b - mb
    saa = math.fsum((da * da).tolist())
    sbb = math.fsum((db * db).tolist())
    if saa == 0.0 or sbb == 0.0:
        raise UndefinedStatisticError("correlation undefined: constant column")
    return math.fsum((da * db).tolist()) / math.sqrt(saa * sbb)


@dataclass(frozen=True)
class ErrorReport:
    offset: float
    rmse: float
    n: int


@dataclass(frozen=True)
class AgreementReport:
    spearman_rho: float
    weighted_kappa: float
    kendall_tau: float
    exact_match_pct: float
    n: int


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[ref_bin - 1, other_bin - 1]``."""

    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def exact_match_pct(self) -> float:
        if self.n == 0:
            raise UndefinedStatisticError("exact match undefined on an empty sample")
        return 100.0 * float(np.trace(self.counts)) / self.n


@dataclass(frozen=True)
class CorrelationMatrix:
    dimensions: tuple[ScoreDimension, ...]
    matrix: np.ndarray
    n: np.ndarray
    undefined: tuple[tuple[ScoreDimension, ScoreDimension], ...] = field(default=())


def offset_rmse(pairs) -> ErrorReport:
    """Mean and root-mean-square of ``ref - other``.

    A positive offset means the evaluator scores lower than the reference.
    """
    ref, other = as_pair_arrays(pairs)
    if ref.size == 0:
        raise EmptySampleError("offset/RMSE need at least one pair")
    diff = (ref - other).tolist()
    n = len(diff)
    return ErrorReport(
        offset=math.fsum(diff) / n,
        rmse=math.sqrt(math.fsum(d * d for d in diff) / n),
        n=n,
    )


def spearman_rho(pairs) -> float:
    """Pearson correlation of average-tie ranks."""
    ref, other = as_pair_arrays(pairs)
    if ref.size < 2:
        raise UndefinedStatisticError("Spearman rho needs n >= 2")
    return _pearson(kernels.average_ranks(ref), kernels.average_ranks(other))


def _check_categories(ref: np.ndarray, other: np.ndarray, categories: Sequence[int]) -> None:
    lo, hi = min(categories), max(categories)
    for name, col in (("ref", ref), ("other", other)):
        if col.size and (col.min() < lo or col.max() > hi):
            raise ScoreValidationError(f"{name} scores outside category range [{lo}, {hi}]")


def weighted_kappa(pairs, categories: Sequence[int] = CATEGORIES) -> float:
    """Quadratic-weighted Cohen's kappa.

    Uses the pairwise form ``1 - n*sum((x_i - y_i)^2) / sum_ij (x_i - y_j)^2``,
    which equals the textbook ``1 - sum(d*O) / sum(d*E)`` for integer scores
    (the ``(k-1)^2`` weight normaliser cancels) and extends unchanged to
    real-valued jury means.
    """
    ref, other = as_pair_arrays(pairs)
    n = ref.size
    if n == 0:
        raise EmptySampleError("kappa needs at least one pair")
    _check_categories(ref, other, categories)
    mr, mo = _mean(ref.tolist()), _mean(other.tolist())
    srr = math.fsum(((ref - mr) ** 2).tolist())
    soo = math.fsum(((other - mo) ** 2).tolist())
    num = math.fsum(((ref - other) ** 2).tolist())
    den = srr + soo + n * (mr - mo) ** 2
    if den == 0.0:
        raise UndefinedStatisticError("kappa undefined: both raters constant and equal")
    return 1.0 - num / den


def weighted_kappa_from_counts(counts: np.ndarray) -> float:
    """Quadratic-weighted kappa from a k x k contingency table."""
    counts = np.asarray(counts, dtype=float)
    k = counts.shape[0]
    total = counts.sum()
    if total == 0:
        raise EmptySampleError("kappa needs at least one pair")
    i, j = np.indices((k, k))
    d = ((i - j) / (k - 1)) ** 2
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0)) / total
    den = float((d * expected).sum())
    if den == 0.0:
        raise UndefinedStatisticError("kappa undefined: both raters constant and equal")
    return 1.0 - float((d * counts).sum()) / den


def kendall_tau(pairs) -> float:
    """Tie-corrected Kendall tau-b."""
    ref, other = as_pair_arrays(pairs)
    if ref.size < 2:
        raise UndefinedStatisticError("Kendall tau needs n >= 2")
    tau = kernels.kendall_tau_b(ref, other)
    if math.isnan(tau):
        raise UndefinedStatisticError("Kendall tau undefined: a column is all ties")
    return tau


def bin_score(x) -> np.ndarray:
    """Round half up to the nearest integer score in 1..5."""
    x = np.asarray(x, dtype=float)
    if x.size and (x.min() < 1 or x.max() > 5):
        raise ScoreValidationError("scores must lie in [1, 5] for binning")
    return np.floor(x + 0.5).astype(int)


def confusion_matrix(pairs) -> ConfusionMatrix:
    ref, other = as_pair_arrays(pairs)
    counts = np.zeros((5, 5), dtype=np.int64)
    if ref.size:
        np.add.at(counts, (bin_score(ref) - 1, bin_score(other) - 1), 1)
    return ConfusionMatrix(counts)


def exact_match_pct(pairs) -> float:
    return confusion_matrix(pairs).exact_match_pct


def agreement_report(pairs) -> AgreementReport:
    ref, other = as_pair_arrays(pairs)
    return AgreementReport(
        spearman_rho=spearman_rho((ref, other)),
        weighted_kappa=weighted_kappa((ref, other)),
        kendall_tau=kendall_tau((ref, other)),
        exact_match_pct=exact_match_pct((ref, other)),
        n=int(ref.size),
    )


def inter_score_correlations(records: Sequence[EvaluationRecord]) -> CorrelationMatrix:
    """Pearson correlations between score dimensions of one evaluator.

    Each entry uses the records where both dimensions are present.  Entries
    involving a constant dimension are NaN and listed in ``undefined``.
    """
    rows = [r for r in records if r.ok]
    dims = DIMENSIONS
    k = len(dims)
    mat = np.full((k, k), np.nan)
    counts = np.zeros((k, k), dtype=int)
    undefined = []
    for a in range(k):
        for b in range(a, k):
            vals = [(r.score(dims[a]), r.score(dims[b])) for r in rows]
            vals = [(x, y) for x, y in vals if x is not None and y is not None]
            counts[a, b] = counts[b, a] = len(vals)
            if len(vals) < 2:
                undefined.append((dims[a], dims[b]))
                continue
            arr = np.asarray(vals, dtype=float)
            try:
                v = 1.0 if a == b and np.ptp(arr[:, 0]) > 0 else _pearson(arr[:, 0], arr[:, 1])
            except UndefinedStatisticError:
                undefined.append((dims[a], dims[b]))
                continue
            mat[a, b] = mat[b, a] = v
    return CorrelationMatrix(dims, mat, counts, tuple(undefined))


def cv_std(values: Sequence[float]) -> tuple[float, float]:
    """Coefficient of variation and sample standard deviation (n - 1)."""
    vals = [float(v) for v in values]
    n = len(vals)
    if n < 2:
        raise UndefinedStatisticError("cv/std need at least two values")
    mean = math.fsum(vals) / n
    if mean <= 0:
        raise UndefinedStatisticError("cv undefined for non-positive mean")
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1))
    return std / mean, std
