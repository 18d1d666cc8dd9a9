"""Same-provider scoring bias with a random intercept per case.

The model is ``y = X b + Z u + e`` with ``u ~ N(0, s2 * lam)`` per case and
``e ~ N(0, s2)``.  Because Z only holds case indicators, ``V = I + lam Z Z'``
inverts blockwise as ``I - c_i 1 1'`` with ``c_i = lam / (1 + lam n_i)``.
Every REML evaluation then needs only per-case sums, so the profile
criterion costs O(G p^2) after one pass over the data.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from ..errors import ConvergenceError, EmptySampleError
from ..records import EvaluationRecord, EvaluatorKind, ScoreDimension

Z95 = 1.959963984540054
LOG_LAMBDA_BOUNDS = (-12.0, 8.0)


@dataclass(frozen=True)
class BiasEstimate:
    beta: float
    std_error: float
    ci95: tuple[float, float]
    case_variance: float
    residual_variance: float
    n_obs: int = 0
    n_cases: int = 0
    n_same: int = 0
    variance_ratio: float = 0.0
    restricted_loglik: float = float("nan")
    fixed_effects: dict[str, float] = field(default_factory=dict)


class _Profile:
    """Restricted log-likelihood profiled over b and s2, as a function of lam."""

    def __init__(self, y: np.ndarray, X: np.ndarray, groups: np.ndarray):
        self.N, self.p = X.shape
        codes, gid = np.unique(groups, return_inverse=True)
        G = codes.size
        self.m = np.bincount(gid, minlength=G).astype(float)
        self.S = np.zeros((G, self.p))
        np.add.at(self.S, gid, X)
        self.t = np.bincount(gid, weights=y, minlength=G)
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)
        self.G = G

    def solve(self, lam: float):
        c = lam / (1.0 + lam * self.m)
        A = self.XtX - (self.S.T * c) @ self.S
        rhs = self.Xty - self.S.T @ (c * self.t)
        cho = linalg.cho_factor(A)
        beta = linalg.cho_solve(cho, rhs)
        rss = self.yty - float(np.sum(c * self.t * self.t)) - float(beta @ rhs)
        logdet_a = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        return beta, rss, cho, logdet_a

    def objective(self, lam: float) -> float:
        """-2 x restricted log-likelihood, up to a constant."""
        _, rss, _, logdet_a = self.solve(lam)
        if rss <= 0:
            return math.inf
        return (self.N - self.p) * math.log(rss) + float(np.sum(np.log1p(lam * self.m))) + logdet_a


def fit_random_intercept(
    y, X, groups, names: Sequence[str] | None = None, coef: int = 1
) -> BiasEstimate:
    """REML fit with one case-level variance component; Wald CI on ``coef``."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    groups = np.asarray(groups)
    N, p = X.shape
    if N <= p:
        raise EmptySampleError("more parameters than observations")
    if np.linalg.matrix_rank(X) < p:
        raise ConvergenceError("design matrix is rank deficient", {"rank": int(np.linalg.matrix_rank(X)), "p": p})
    prof = _Profile(y, X, groups)
    if prof.G < 2:
        raise EmptySampleError("need at least two cases")

    lo, hi = LOG_LAMBDA_BOUNDS
    res = optimize.minimize_scalar(
        lambda u: prof.objective(math.exp(u)), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-10, "maxiter": 500},
    )
    diagnostics = {"log_lambda": float(res.x), "objective": float(res.fun), "iterations": int(res.nfev),
                   "message": str(res.message)}
    if not res.success or not np.isfinite(res.fun):
        raise ConvergenceError("variance-ratio search failed", diagnostics)
    if res.x > hi - 1e-3:
        raise ConvergenceError("variance ratio ran to the upper bound", diagnostics)
    lam, crit = math.exp(res.x), float(res.fun)
    at_zero = prof.objective(0.0)
    if at_zero <= crit:
        lam, crit = 0.0, at_zero

    beta, rss, cho, _ = prof.solve(lam)
    s2 = rss / (N - p)
    cov = s2 * linalg.cho_solve(cho, np.eye(p))
    se = math.sqrt(max(cov[coef, coef], 0.0))
    b = float(beta[coef])
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    const = (N - p) * (1.0 + math.log(2 * math.pi / (N - p)))
    return BiasEstimate(
        beta=b,
        std_error=se,
        ci95=(b - Z95 * se, b + Z95 * se),
        case_variance=lam * s2,
        residual_variance=s2,
        n_obs=N,
        n_cases=prof.G,
        variance_ratio=lam,
        restricted_loglik=-0.5 * (crit + const),
        fixed_effects=dict(zip(names, (float(v) for v in beta))),
    )


def bias_design(same, judges) -> tuple[np.ndarray, list[str]]:
    """Intercept, same-provider indicator and treatment-coded judge dummies."""
    same = np.asarray(same, dtype=float)
    levels = sorted(set(judges))
    cols = [np.ones_like(same), same]
    names = ["intercept", "same_provider"]
    judges = list(judges)
    for lev in levels[1:]:
        cols.append(np.array([j == lev for j in judges], dtype=float))
        names.append(f"judge[{lev}]")
    return np.column_stack(cols), names


def bias_from_arrays(scores, same, judges, cases) -> BiasEstimate:
    same = np.asarray(same, dtype=bool)
    if not same.any():
        raise EmptySampleError("no same-provider observations")
    if same.all():
        raise EmptySampleError("no cross-provider observations")
    X, names = bias_design(same, judges)
    est = fit_random_intercept(scores, X, cases, names, coef=1)
    return BiasEstimate(**{**est.__dict__, "n_same": int(same.sum())})


def same_provider_bias(
    records: Sequence[EvaluationRecord],
    dimension: ScoreDimension | str,
    judges: Sequence[str] | None = None,
    exclude_agents: Sequence[str] = (),
) -> BiasEstimate:
    """Fixed-effect shift when a judge scores an answer from its own provider.

    Uses every judge-model record with a known agent provider, minus
    ``exclude_agents`` (e.g. human ward answers); repetitions are averaged
    per (case, agent, judge).
    """
    dim = ScoreDimension.parse(dimension)
    acc: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        if r.evaluator.kind is not EvaluatorKind.JUDGE_MODEL or r.derived or not r.ok:
            continue
        if judges is not None and r.evaluator.model_id not in judges:
            continue
        if r.agent_id in exclude_agents:
            continue
        v = r.score(dim)
        if v is None or not r.agent_provider:
            continue
        same = r.agent_provider.lower() == (r.evaluator.provider or "").lower()
        acc[(r.case_id, r.agent_id, r.evaluator.model_id, same)].append(float(v))
    if not acc:
        raise EmptySampleError(f"no judge {dim.label} scores with agent providers")
    keys = sorted(acc)
    return bias_from_arrays(
        [math.fsum(acc[k]) / len(acc[k]) for k in keys],
        [k[3] for k in keys],
        [k[2] for k in keys],
        [k[0] for k in keys],
    )
