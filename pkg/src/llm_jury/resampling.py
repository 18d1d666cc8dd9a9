"""Seeded bootstrap intervals, paired win rates and beta-binomial exceedance.

Every resample ``b`` draws its groups from its own generator seeded with
``(seed, b)``, so a resample's content does not depend on how many others
are drawn or in which order they are evaluated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from . import kernels, metrics
from .errors import EmptySampleError, UndefinedStatisticError
from .records import PairedScores

RNG_NAME = f"numpy.random.PCG64 (numpy {np.__version__})"
CI_METHOD = "percentile"


class ResampleUnit(str, enum.Enum):
    CASE = "Case"
    RECORD = "Record"


@dataclass(frozen=True)
class BootstrapSpec:
    n_resamples: int = 1000
    level: float = 0.95
    seed: int = 0
    unit: ResampleUnit = ResampleUnit.CASE
    max_skip_fraction: float = 0.10

    def __post_init__(self):
        if self.n_resamples < 1:
            raise ValueError("n_resamples must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")
        object.__setattr__(self, "unit", ResampleUnit(self.unit))

    def with_level(self, level: float) -> "BootstrapSpec":
        return BootstrapSpec(self.n_resamples, level, self.seed, self.unit, self.max_skip_fraction)


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    lo: float
    hi: float
    level: float
    n_resamples: int
    n_skipped: int
    seed: int
    method: str = CI_METHOD
    estimates: np.ndarray = field(default=None, repr=False, compare=False)

    def interval(self, level: float) -> tuple[float, float]:
        """Percentile interval at another level from the same resamples."""
        return _percentile_interval(self.estimates[~np.isnan(self.estimates)], level)


@dataclass(frozen=True)
class WinRateReport:
    """``win_pct``: resamples where A beats B (ties count half).

    ``delta`` is the mean advantage of A over B, positive when A is better:
    ``|off_B| - |off_A|`` for offset, ``rmse_B - rmse_A`` for RMSE and
    ``A - B`` for rho and kappa.
    """

    metric: str
    win_pct: float
    delta: float
    n_resamples: int
    n_skipped: int
    seed: int


@dataclass(frozen=True)
class ExceedanceReport:
    """``p_exceed`` = P(rate_B > rate_A) under Beta(1 + k, 1 + n - k) posteriors."""

    p_exceed: float
    alpha_a: int
    beta_a: int
    alpha_b: int
    beta_b: int
    method: str


@dataclass(frozen=True)
class GroupedSample:
    """Paired columns with a CSR map from resampling group to row indices."""

    ref: np.ndarray
    other: np.ndarray
    offsets: np.ndarray
    members: np.ndarray
    groups: tuple

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @classmethod
    def build(cls, ref, other, groups: Sequence) -> "GroupedSample":
        ref = np.asarray(ref, dtype=float)
        other = np.asarray(other, dtype=float)
        if ref.shape != other.shape or len(groups) != ref.size:
            raise ValueError("ref, other and groups must have equal length")
        labels = sorted(set(groups))
        index = {g: i for i, g in enumerate(labels)}
        gid = np.array([index[g] for g in groups], dtype=np.int64)
        members = np.argsort(gid, kind="stable")
        counts = np.bincount(gid, minlength=len(labels))
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(ref, other, offsets, members, tuple(labels))


def grouped(data, unit: ResampleUnit = ResampleUnit.CASE) -> GroupedSample:
    """Coerce PairedScores / GroupedSample / (ref, other[, groups]) into groups."""
    if isinstance(data, GroupedSample):
        return data
    if isinstance(data, PairedScores):
        ref, other = data.ref, data.other
        groups = list(data.case_ids) if unit is ResampleUnit.CASE else list(range(len(data)))
    elif isinstance(data, tuple) and len(data) == 3:
        ref, other, groups = data
        groups = list(groups) if unit is ResampleUnit.CASE else list(range(len(groups)))
    else:
        ref, other = metrics.as_pair_arrays(data)
        groups = list(range(ref.size))
    return GroupedSample.build(ref, other, groups)


def resample_draws(n_groups: int, spec: BootstrapSpec) -> np.ndarray:
    draws = np.empty((spec.n_resamples, n_groups), dtype=np.int64)
    for b in range(spec.n_resamples):
        rng = np.random.Generator(np.random.PCG64([spec.seed, b]))
        draws[b] = rng.integers(0, n_groups, size=n_groups)
    return draws


def _percentile_interval(estimates: np.ndarray, level: float) -> tuple[float, float]:
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(estimates, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


_POINT_FUNCS: dict[str, Callable[[tuple], float]] = {
    "offset": lambda p: metrics.offset_rmse(p).offset,
    "rmse": lambda p: metrics.offset_rmse(p).rmse,
    "spearman": metrics.spearman_rho,
    "kappa": metrics.weighted_kappa,
    "mean": lambda p: math.fsum(p[0].tolist()) / p[0].size,
}


def bootstrap_estimates(
    sample: GroupedSample, statistic: str | Callable, draws: np.ndarray
) -> np.ndarray:
    """Statistic on each resample; NaN marks an undefined resample."""
    if isinstance(statistic, str):
        code = kernels.METRIC_CODES[statistic]
        return kernels.resample_stat(sample.ref, sample.other, sample.offsets, sample.members, draws, code)
    out = np.empty(draws.shape[0])
    for b, row in enumerate(draws):
        idx = np.concatenate([sample.members[sample.offsets[d] : sample.offsets[d + 1]] for d in row])
        try:
            out[b] = float(statistic(sample.ref[idx], sample.other[idx]))
        except UndefinedStatisticError:
            out[b] = np.nan
    return out


def _check_skips(n_skipped: int, spec: BootstrapSpec) -> None:
    if n_skipped > spec.max_skip_fraction * spec.n_resamples:
        raise UndefinedStatisticError(
            f"statistic undefined on {n_skipped} of {spec.n_resamples} resamples "
            f"(limit {spec.max_skip_fraction:.0%})"
        )


def bootstrap_ci(data, statistic: str | Callable, spec: BootstrapSpec = BootstrapSpec()) -> BootstrapResult:
    """Percentile bootstrap interval, resampling whole groups with replacement.

    ``statistic`` is one of ``"offset"``, ``"rmse"``, ``"spearman"``,
    ``"kappa"``, ``"mean"`` (compiled fast path) or a callable
    ``f(ref, other) -> float``.
    """
    sample = grouped(data, spec.unit)
    if sample.n_groups < 2:
        raise EmptySampleError("bootstrap needs at least two groups")
    if isinstance(statistic, str):
        point = _POINT_FUNCS[statistic]((sample.ref, sample.other))
    else:
        point = float(statistic(sample.ref, sample.other))
    est = bootstrap_estimates(sample, statistic, resample_draws(sample.n_groups, spec))
    valid = est[~np.isnan(est)]
    n_skipped = int(est.size - valid.size)
    _check_skips(n_skipped, spec)
    lo, hi = _percentile_interval(valid, spec.level)
    return BootstrapResult(point, lo, hi, spec.level, spec.n_resamples, n_skipped, spec.seed, estimates=est)


_WIN_METRICS = ("offset", "rmse", "spearman", "kappa")


def _advantage(metric: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if metric == "offset":
        return np.abs(b) - np.abs(a)
    if metric == "rmse":
        return b - a
    return a - b


def bootstrap_win_rate(pairs_a, pairs_b, metric: str, spec: BootstrapSpec = BootstrapSpec()) -> WinRateReport:
    """Share of case-level resamples in which evaluator A beats evaluator B.

    Both samples must cover the same (case, agent) keys; each resample draws
    cases once and scores both evaluators on that draw.
    """
    if metric not in _WIN_METRICS:
        raise ValueError(f"metric must be one of {_WIN_METRICS}")
    if isinstance(pairs_a, PairedScores) and isinstance(pairs_b, PairedScores):
        keys_a = list(zip(pairs_a.case_ids, pairs_a.agent_ids))
        keys_b = list(zip(pairs_b.case_ids, pairs_b.agent_ids))
        if set(keys_a) != set(keys_b):
            raise ValueError("pairs_a and pairs_b must cover the same (case, agent) keys")
        pos_b = {k: i for i, k in enumerate(keys_b)}
        order = np.array([pos_b[k] for k in keys_a], dtype=np.int64)
        ga = grouped(pairs_a, spec.unit)
        gb = GroupedSample.build(
            pairs_b.ref[order],
            pairs_b.other[order],
            list(pairs_a.case_ids) if spec.unit is ResampleUnit.CASE else list(range(len(pairs_a))),
        )
    else:
        ga, gb = grouped(pairs_a, spec.unit), grouped(pairs_b, spec.unit)
        if ga.ref.size != gb.ref.size:
            raise ValueError("pairs_a and pairs_b must be co-indexed")
    if ga.n_groups < 2:
        raise EmptySampleError("win rate needs at least two cases")
    draws = resample_draws(ga.n_groups, spec)
    ea = bootstrap_estimates(ga, metric, draws)
    eb = bootstrap_estimates(gb, metric, draws)
    ok = ~(np.isnan(ea) | np.isnan(eb))
    n_skipped = int((~ok).sum())
    _check_skips(n_skipped, spec)
    adv = _advantage(metric, ea[ok], eb[ok])
    wins = np.where(adv > 0, 1.0, np.where(adv == 0, 0.5, 0.0))
    return WinRateReport(
        metric=metric,
        win_pct=100.0 * math.fsum(wins.tolist()) / wins.size,
        delta=math.fsum(adv.tolist()) / adv.size,
        n_resamples=spec.n_resamples,
        n_skipped=n_skipped,
        seed=spec.seed,
    )


def _check_counts(k: int, n: int, label: str) -> None:
    for v in (k, n):
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            raise ValueError(f"{label}: counts must be integers")
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"{label}: need n >= 1 and 0 <= k <= n, got k={k}, n={n}")


def _beta_fn(a: int, b: int) -> Fraction:
    return Fraction(math.factorial(a - 1) * math.factorial(b - 1), math.factorial(a + b - 1))


def _exceedance_exact(aa: int, ba: int, ab: int, bb: int) -> Fraction:
    # P(X_B > X_A) for X ~ Beta with integer parameters, as a finite sum
    # over the first shape parameter of B.
    denom_a = _beta_fn(aa, ba)
    total = Fraction(0)
    for i in range(ab):
        total += _beta_fn(aa + i, ba + bb) / ((bb + i) * _beta_fn(1 + i, bb) * denom_a)
    return total


def _exceedance_quadrature(aa: int, ba: int, ab: int, bb: int) -> float:
    pa, pb = stats.beta(aa, ba), stats.beta(ab, bb)
    modes = [(a - 1) / (a + b - 2) for a, b in ((aa, ba), (ab, bb)) if a + b > 2]
    val, _ = integrate.quad(
        lambda x: pa.pdf(x) * pb.sf(x), 0.0, 1.0, points=modes or None, epsabs=1e-13, epsrel=1e-12, limit=200
    )
    return float(val)


def beta_binomial_exceedance(k_a: int, n_a: int, k_b: int, n_b: int, method: str = "exact") -> ExceedanceReport:
    """Posterior probability that group B's rate exceeds group A's.

    Flat Beta(1, 1) priors.  ``method="exact"`` evaluates the finite-sum
    identity in rational arithmetic; ``"quadrature"`` integrates
    ``pdf_A(x) * P(p_B > x)`` numerically.
    """
    _check_counts(k_a, n_a, "group A")
    _check_counts(k_b, n_b, "group B")
    aa, ba = 1 + int(k_a), 1 + int(n_a) - int(k_a)
    ab, bb = 1 + int(k_b), 1 + int(n_b) - int(k_b)
    if method == "exact":
        p = float(_exceedance_exact(aa, ba, ab, bb))
    elif method == "quadrature":
        p = _exceedance_quadrature(aa, ba, ab, bb)
    else:
        raise ValueError("method must be 'exact' or 'quadrature'")
    return ExceedanceReport(p, aa, ba, ab, bb, method)
