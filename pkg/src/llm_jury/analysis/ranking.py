"""Rank diagnostic agents by mean composite score."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import metrics
from ..calibration import S3, CompositeWeights, composite_score
from ..errors import ScoreValidationError, UndefinedStatisticError
from ..records import EvaluationRecord, EvaluatorId
from ..resampling import BootstrapSpec, bootstrap_ci

log = logging.getLogger(__name__)

RANKING_SPEC = BootstrapSpec(n_resamples=1000, level=0.68)


@dataclass(frozen=True)
class AgentRanking:
    evaluator: str
    agents: tuple[str, ...]
    means: dict[str, float]
    intervals: dict[str, tuple[float, float]]
    counts: dict[str, int]
    top_k: int
    tau: float | None = None
    tau_error: str | None = None
    reference_order: tuple[str, ...] = ()
    excluded: tuple[str, ...] = field(default=())
    level: float = 0.68
    seed: int = 0

    def rank_of(self, agent: str) -> int:
        return self.agents.index(agent) + 1


def agent_means(agent_ids: Sequence[str], scores: Sequence[float]) -> dict[str, float]:
    acc: dict[str, list[float]] = defaultdict(list)
    for a, s in zip(agent_ids, scores):
        acc[a].append(float(s))
    return {a: math.fsum(v) / len(v) for a, v in acc.items()}


def order_agents(means: dict[str, float]) -> tuple[str, ...]:
    return tuple(sorted(means, key=lambda a: (-means[a], a)))


def _composites(records, evaluator, weights) -> tuple[list[str], list[str], list[float]]:
    agents, cases, scores = [], [], []
    for r in records:
        if r.evaluator != evaluator or not r.ok:
            continue
        try:
            s = composite_score(r.scores, weights)
        except ScoreValidationError:
            continue
        agents.append(r.agent_id)
        cases.append(r.case_id)
        scores.append(s)
    return agents, cases, scores


def select_agents(counts: Counter, top_k: int) -> list[str]:
    """The ``top_k`` agents with the most evaluations (ties by name)."""
    return sorted(counts, key=lambda a: (-counts[a], a))[:top_k]


def rank_agents(
    records: Sequence[EvaluationRecord],
    evaluator: EvaluatorId,
    weights: CompositeWeights = S3,
    top_k: int = 8,
    spec: BootstrapSpec = RANKING_SPEC,
    reference: EvaluatorId | None = None,
    exclude: Sequence[str] = (),
) -> AgentRanking:
    """Order agents by the evaluator's mean composite score.

    Only the ``top_k`` agents with the most reference evaluations are ranked
    (small-sample agents fluctuate too much).  Kendall tau-b compares the
    evaluator's means with the reference's means on those agents; an
    undefined tau is reported in ``tau_error`` rather than raised.
    """
    reference = reference or EvaluatorId.primary()
    r_agents, r_cases, r_scores = _composites(records, reference, weights)
    e_agents, e_cases, e_scores = _composites(records, evaluator, weights)
    e_set = set(e_agents)
    ref_counts = Counter(a for a in r_agents if a not in exclude and a in e_set)
    if not ref_counts:
        raise ValueError(f"no agents scored by both {reference.name!r} and {evaluator.name!r}")
    if top_k > len(ref_counts):
        raise ValueError(f"top_k={top_k} exceeds the {len(ref_counts)} rankable agents")
    chosen = select_agents(ref_counts, top_k)
    excluded = tuple(sorted((set(e_agents) | set(r_agents)) - set(chosen)))
    if excluded:
        log.info("ranking excludes %d agents outside top_k=%d", len(excluded), top_k)
    chosen_set = set(chosen)

    e_idx = [i for i, a in enumerate(e_agents) if a in chosen_set]
    means = agent_means([e_agents[i] for i in e_idx], [e_scores[i] for i in e_idx])
    intervals, counts = {}, {}
    for agent in chosen:
        rows = [i for i in e_idx if e_agents[i] == agent]
        vals = np.array([e_scores[i] for i in rows])
        counts[agent] = len(rows)
        groups = [e_cases[i] for i in rows]
        if len(set(groups)) < 2:
            intervals[agent] = (means[agent], means[agent])
            continue
        res = bootstrap_ci((vals, vals, groups), "mean", spec)
        intervals[agent] = (res.lo, res.hi)

    ref_idx = [i for i, a in enumerate(r_agents) if a in chosen_set]
    ref_means = agent_means([r_agents[i] for i in ref_idx], [r_scores[i] for i in ref_idx])
    tau, tau_error = None, None
    try:
        tau = metrics.kendall_tau(
            (np.array([ref_means[a] for a in chosen]), np.array([means[a] for a in chosen]))
        )
    except UndefinedStatisticError as exc:
        tau_error = str(exc)
    return AgentRanking(
        evaluator=evaluator.name,
        agents=order_agents(means),
        means=means,
        intervals=intervals,
        counts=counts,
        top_k=top_k,
        tau=tau,
        tau_error=tau_error,
        reference_order=order_agents(ref_means),
        excluded=excluded,
        level=spec.level,
        seed=spec.seed,
    )
