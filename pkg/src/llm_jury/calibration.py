"""Isotonic calibration of judge scores against reference-panel scores."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import CoverageError, DegenerateFitError, EmptySampleError, ScoreValidationError
from .records import (
    DIMENSIONS,
    JURY_EVALUATOR,
    EvaluationRecord,
    EvaluatorId,
    PairedScores,
    ScoreDimension,
    ScoreVector,
    join_pairs,
)

MAP_SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class CompositeWeights:
    dx: float
    ddx: float
    reasoning: float
    safety: float
    name: str = ""

    def __post_init__(self):
        w = self.as_tuple()
        if any(v < 0 for v in w) or not math.isclose(math.fsum(w), 1.0, abs_tol=1e-12):
            raise ValueError(f"composite weights must be >= 0 and sum to 1, got {w}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.dx, self.ddx, self.reasoning, self.safety)


S3 = CompositeWeights(0.4, 0.2, 0.0, 0.4, name="S3")
S4 = CompositeWeights(0.3, 0.1, 0.3, 0.3, name="S4")
NAMED_WEIGHTS = {"S3": S3, "S4": S4}


def composite_score(scores: ScoreVector, weights: CompositeWeights) -> float:
    total = 0.0
    for dim, w in zip(DIMENSIONS, weights.as_tuple()):
        v = scores.get(dim)
        if v is None:
            if w != 0:
                raise ScoreValidationError(
                    f"{weights.name or 'composite'} needs '{dim.value}' (weight {w})", dimension=dim.value
                )
            continue
        total += w * v
    return total


@dataclass(frozen=True)
class CalibrationMap:
    """Monotone step fit evaluated at observed input levels.

    Calling the map interpolates linearly between knots, holds the end knot
    values outside them and clamps to [1, 5].
    """

    knots_x: tuple[float, ...]
    knots_y: tuple[float, ...]
    judge: EvaluatorId | None = None
    dimension: ScoreDimension | None = None
    n: int = 0
    training_hash: str = ""

    def __call__(self, score):
        return apply_calibration(self, score)

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.knots_x, self.knots_y))

    def to_dict(self) -> dict:
        return {
            "schema_version": MAP_SCHEMA_VERSION,
            "judge": None if self.judge is None else self.judge.as_dict(),
            "dimension": None if self.dimension is None else self.dimension.value,
            "knots": [[x, y] for x, y in self.knots],
            "n": self.n,
            "training_sample_hash": self.training_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationMap":
        if str(data.get("schema_version")) != MAP_SCHEMA_VERSION:
            raise ValueError(f"unsupported calibration map schema {data.get('schema_version')!r}")
        knots = data["knots"]
        return cls(
            knots_x=tuple(float(k[0]) for k in knots),
            knots_y=tuple(float(k[1]) for k in knots),
            judge=None if data.get("judge") is None else EvaluatorId.from_dict(data["judge"]),
            dimension=None if data.get("dimension") is None else ScoreDimension.parse(data["dimension"]),
            n=int(data.get("n", 0)),
            training_hash=data.get("training_sample_hash", ""),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationMap":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _judge_panel_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    # PairedScores hold the reference panel in ``ref`` and the judge in ``other``.
    if isinstance(pairs, PairedScores):
        return np.asarray(pairs.other, dtype=float), np.asarray(pairs.ref, dtype=float)
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        return np.asarray(pairs[0], dtype=float), np.asarray(pairs[1], dtype=float)
    arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def training_hash(x: np.ndarray, y: np.ndarray) -> str:
    order = np.lexsort((y, x))
    payload = np.stack([x[order], y[order]]).astype(np.float64).tobytes()
    return hashlib.sha256(payload).hexdigest()


def pava_fit(
    pairs,
    *,
    judge: EvaluatorId | None = None,
    dimension: ScoreDimension | None = None,
    allow_constant: bool = False,
) -> CalibrationMap:
    """Least-squares isotonic fit of panel scores on judge scores.

    ``pairs`` are ``(judge_score, panel_score)`` tuples, a ``(judge, panel)``
    tuple of arrays, or a :class:`PairedScores` (panel = ``ref``).  Each
    distinct judge score becomes one knot whose value is the pooled mean.
    """
    x, y = _judge_panel_arrays(pairs)
    if x.size == 0:
        raise EmptySampleError("calibration fit needs data")
    levels, inverse = np.unique(x, return_inverse=True)
    if levels.size < 2 and not allow_constant:
        raise DegenerateFitError(f"only one judge score level ({levels[0]:g}); cannot fit a monotone map")
    counts = np.bincount(inverse).astype(float)
    means = np.bincount(inverse, weights=y) / counts
    fitted = np.clip(kernels.pava(means, counts), 1.0, 5.0)
    return CalibrationMap(
        knots_x=tuple(levels.tolist()),
        knots_y=tuple(fitted.tolist()),
        judge=judge,
        dimension=dimension,
        n=int(x.size),
        training_hash=training_hash(x, y),
    )


def apply_calibration(cmap: CalibrationMap, score):
    xs = np.asarray(cmap.knots_x)
    ys = np.asarray(cmap.knots_y)
    out = np.clip(np.interp(np.asarray(score, dtype=float), xs, ys), 1.0, 5.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    seed: int
    folds: Mapping[str, int]

    def fold_of(self, case_id: str) -> int | None:
        return self.folds.get(case_id)

    def cases_in(self, fold: int) -> list[str]:
        return sorted(c for c, f in self.folds.items() if f == fold)


def assign_folds(case_ids: Iterable[str], k: int = 5, seed: int = 0) -> FoldAssignment:
    """Shuffle distinct cases with a seeded generator and deal them round-robin."""
    cases = sorted(set(case_ids))
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(cases) < k:
        raise EmptySampleError(f"{k}-fold split needs at least {k} distinct cases, got {len(cases)}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(len(cases))
    return FoldAssignment(k, seed, {cases[p]: i % k for i, p in enumerate(perm)})


@dataclass(frozen=True)
class KFoldCalibration:
    fold_maps: tuple[CalibrationMap, ...]
    full_map: CalibrationMap
    pairs: PairedScores
    fold_index: np.ndarray
    oof: np.ndarray
    in_sample: np.ndarray


def kfold_calibrate(
    pairs: PairedScores,
    folds: FoldAssignment,
    *,
    judge: EvaluatorId | None = None,
    dimension: ScoreDimension | None = None,
) -> KFoldCalibration:
    """Fit per-fold maps on the other folds and calibrate the held-out rows.

    Also fits one map on the full sample.  Rows whose case is not in
    ``folds`` are calibrated with the full-sample map.
    """
    judge_x, panel_y = pairs.other, pairs.ref
    fold_index = np.array([folds.folds.get(c, -1) for c in pairs.case_ids], dtype=int)
    if len(set(pairs.case_ids)) < folds.k:
        raise EmptySampleError(f"need at least {folds.k} distinct cases for {folds.k}-fold calibration")
    full = pava_fit((judge_x, panel_y), judge=judge, dimension=dimension, allow_constant=True)
    maps = []
    oof = apply_calibration(full, judge_x).astype(float)
    for f in range(folds.k):
        train = fold_index != f
        held = fold_index == f
        cmap = pava_fit((judge_x[train], panel_y[train]), judge=judge, dimension=dimension, allow_constant=True)
        maps.append(cmap)
        if held.any():
            oof[held] = apply_calibration(cmap, judge_x[held])
    return KFoldCalibration(
        fold_maps=tuple(maps),
        full_map=full,
        pairs=pairs,
        fold_index=fold_index,
        oof=np.asarray(oof, dtype=float),
        in_sample=np.asarray(apply_calibration(full, judge_x), dtype=float),
    )


def calibrated_jury_score(vectors: Sequence[ScoreVector | None]) -> ScoreVector:
    """Per-dimension unrounded mean of the judges' calibrated scores."""
    if not vectors or any(v is None for v in vectors):
        raise CoverageError("calibrated jury score needs a calibrated vector from every judge")
    values = {}
    for dim in DIMENSIONS:
        vals = [v.get(dim) for v in vectors]  # type: ignore[union-attr]
        present = [x for x in vals if x is not None]
        if not present:
            if dim is not ScoreDimension.REASONING:
                raise CoverageError(f"no judge provided '{dim.value}'")
            values[dim.value] = None
        elif len(present) != len(vals):
            raise CoverageError(f"'{dim.value}' missing for some judges")
        else:
            values[dim.value] = math.fsum(present) / len(present)
    return ScoreVector(**values)


@dataclass
class CorpusCalibration:
    """Per (judge, dimension) k-fold calibration over a corpus."""

    reference: EvaluatorId
    judges: tuple[EvaluatorId, ...]
    folds: FoldAssignment
    results: dict[tuple[EvaluatorId, ScoreDimension], KFoldCalibration] = field(default_factory=dict)

    def maps(self) -> list[CalibrationMap]:
        return [r.full_map for r in self.results.values()]

    def calibrate_records(self, records: Sequence[EvaluationRecord], mode: str = "oof") -> list[EvaluationRecord]:
        """Calibrated copies of the judges' records (``derived=True``).

        ``mode="oof"`` uses the held-out fold map for cases in the fold
        assignment and the full map elsewhere; ``mode="full"`` always uses
        the full-sample map.
        """
        if mode not in ("oof", "full"):
            raise ValueError("mode must be 'oof' or 'full'")
        out = []
        for rec in records:
            if rec.evaluator not in self.judges or not rec.ok:
                continue
            values = {}
            for dim in DIMENSIONS:
                v = rec.score(dim)
                res = self.results.get((rec.evaluator, dim))
                if v is None or res is None:
                    values[dim.value] = None if v is None else float(v)
                    continue
                fold = self.folds.fold_of(rec.case_id)
                cmap = res.full_map if mode == "full" or fold is None else res.fold_maps[fold]
                values[dim.value] = apply_calibration(cmap, v)
            out.append(rec.with_scores(ScoreVector(**values), derived=True))
        return out


def calibrate_judges(
    records: Sequence[EvaluationRecord],
    reference: EvaluatorId,
    judges: Sequence[EvaluatorId],
    folds: FoldAssignment | None = None,
    *,
    k: int = 5,
    seed: int = 0,
    dimensions: Sequence[ScoreDimension] = DIMENSIONS,
) -> CorpusCalibration:
    """One isotonic map per (judge, dimension), validated by k-fold by case."""
    if folds is None:
        cases = {r.case_id for r in records if r.evaluator == reference and r.ok}
        folds = assign_folds(cases, k=k, seed=seed)
    cal = CorpusCalibration(reference, tuple(judges), folds)
    for judge in judges:
        for dim in dimensions:
            try:
                pairs = join_pairs(records, reference, judge, dim)
            except EmptySampleError:
                continue
            cal.results[(judge, dim)] = kfold_calibrate(pairs, folds, judge=judge, dimension=dim)
    return cal


def calibrate_jury_directly(
    records: Sequence[EvaluationRecord],
    reference: EvaluatorId,
    folds: FoldAssignment,
    jury: EvaluatorId = JURY_EVALUATOR,
    dimensions: Sequence[ScoreDimension] = DIMENSIONS,
) -> dict[ScoreDimension, KFoldCalibration]:
    """Alternative to per-judge composition: fit maps on jury means directly."""
    out = {}
    for dim in dimensions:
        try:
            pairs = join_pairs(records, reference, jury, dim)
        except EmptySampleError:
            continue
        out[dim] = kfold_calibrate(pairs, folds, judge=jury, dimension=dim)
    return out
