"""Repeated-inference score stability (coefficient of variation and std)."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from ..errors import UndefinedStatisticError
from ..metrics import cv_std
from ..records import EvaluationRecord, EvaluatorId, EvaluatorKind, ScoreDimension

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StabilityRow:
    evaluator: str
    dimension: ScoreDimension
    case_id: str
    agent_id: str
    n: int
    cv: float
    std: float


@dataclass(frozen=True)
class StabilitySummary:
    evaluator: str
    dimension: ScoreDimension
    n_groups: int
    mean_cv: float
    mean_std: float


@dataclass(frozen=True)
class StabilityReport:
    rows: tuple[StabilityRow, ...]
    summary: tuple[StabilitySummary, ...]
    skipped: tuple[tuple, ...] = ()

    def lookup(self, evaluator: str, dimension: ScoreDimension | str) -> StabilitySummary:
        dim = ScoreDimension.parse(dimension)
        for s in self.summary:
            if s.evaluator == evaluator and s.dimension is dim:
                return s
        raise KeyError((evaluator, dim.value))


def _summarise(rows: list[StabilityRow]) -> list[StabilitySummary]:
    by: dict[tuple, list[StabilityRow]] = defaultdict(list)
    for r in rows:
        by[(r.evaluator, r.dimension)].append(r)
    out = []
    for (ev, dim), rs in by.items():
        out.append(StabilitySummary(
            ev, dim, len(rs),
            math.fsum(r.cv for r in rs) / len(rs),
            math.fsum(r.std for r in rs) / len(rs),
        ))
    return out


def _rows_from_groups(groups: dict[tuple, list[float]]) -> tuple[list[StabilityRow], list[tuple]]:
    rows, skipped = [], []
    for key in sorted(groups, key=lambda k: (k[0], k[1].value, k[2], k[3])):
        vals = groups[key]
        if len(vals) < 2:
            log.warning("stability group %s has a single repetition; skipped", key)
            skipped.append(key)
            continue
        try:
            cv, std = cv_std(vals)
        except UndefinedStatisticError:
            skipped.append(key)
            continue
        rows.append(StabilityRow(key[0], key[1], key[2], key[3], len(vals), cv, std))
    return rows, skipped


def stability_summary(
    records: Sequence[EvaluationRecord],
    evaluators: Sequence[EvaluatorId] | None = None,
    dimensions: Sequence[ScoreDimension] = tuple(ScoreDimension),
) -> StabilityReport:
    """CV and std across repetitions per (evaluator, dimension, case, agent)."""
    wanted = set(evaluators) if evaluators is not None else None
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        if not r.ok or (wanted is not None and r.evaluator not in wanted):
            continue
        if wanted is None and r.evaluator.kind is not EvaluatorKind.JUDGE_MODEL:
            continue
        for dim in dimensions:
            v = r.score(dim)
            if v is not None:
                groups[(r.evaluator.name, dim, r.case_id, r.agent_id)].append(float(v))
    rows, skipped = _rows_from_groups(groups)
    return StabilityReport(tuple(rows), tuple(_summarise(rows)), tuple(skipped))


def human_stability(
    records: Sequence[EvaluationRecord],
    first: EvaluatorId | None = None,
    second: EvaluatorId | None = None,
    dimensions: Sequence[ScoreDimension] = tuple(ScoreDimension),
    label: str = "Human panels",
) -> StabilityReport:
    """CV and std over two panels' scores of the answers both evaluated."""
    first = first or EvaluatorId.primary()
    second = second or EvaluatorId.rescore()
    scores: dict[tuple, dict[EvaluatorId, float]] = defaultdict(dict)
    for r in records:
        if not r.ok or r.evaluator not in (first, second):
            continue
        for dim in dimensions:
            v = r.score(dim)
            if v is not None:
                scores[(dim, r.case_id, r.agent_id)][r.evaluator] = float(v)
    groups = {
        (label, dim, case, agent): [vals[first], vals[second]]
        for (dim, case, agent), vals in scores.items()
        if len(vals) == 2
    }
    rows, skipped = _rows_from_groups(groups)
    return StabilityReport(tuple(rows), tuple(_summarise(rows)), tuple(skipped))
