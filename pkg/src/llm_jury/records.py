"""Canonical data model for scored judgments, plus ingestion and pairing.

A corpus is a line-delimited JSON file; each line is one
:class:`EvaluationRecord`.  Raw scores from a single evaluator are integers in
1..5.  Records produced by the tool itself (jury means, calibrated scores)
carry ``derived=True`` and may hold reals in [1, 5].
"""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateRecordError,
    EmptySampleError,
    RecordParseError,
    ScoreValidationError,
)

SCHEMA_VERSION = "1"
SCORE_MIN = 1
SCORE_MAX = 5


class ScoreDimension(str, enum.Enum):
    DX = "dx"
    DDX = "ddx"
    REASONING = "reasoning"
    SAFETY = "safety"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value: "str | ScoreDimension") -> "ScoreDimension":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for dim in cls:
            if key in (dim.value, dim.label.lower()):
                return dim
        raise ValueError(f"unknown score dimension {value!r}")


_LABELS = {
    ScoreDimension.DX: "Dx",
    ScoreDimension.DDX: "DDx",
    ScoreDimension.REASONING: "Reasoning",
    ScoreDimension.SAFETY: "Safety",
}

DIMENSIONS: tuple[ScoreDimension, ...] = tuple(ScoreDimension)


class EvaluatorKind(str, enum.Enum):
    PRIMARY_PANEL = "PrimaryPanel"
    RESCORE_PANEL = "RescorePanel"
    JUDGE_MODEL = "JudgeModel"


class Split(str, enum.Enum):
    CALIBRATION = "Calibration"
    EVALUATION = "Evaluation"


def _is_real(value: Any) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


@dataclass(frozen=True)
class ScoreVector:
    dx: float
    ddx: float
    reasoning: float | None
    safety: float

    def get(self, dim: ScoreDimension | str) -> float | None:
        return getattr(self, ScoreDimension.parse(dim).value)

    def as_dict(self) -> dict[str, float | None]:
        return {d.value: self.get(d) for d in DIMENSIONS}

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ScoreVector":
        values = {}
        for dim in DIMENSIONS:
            for key in (dim.value, dim.label):
                if key in mapping:
                    values[dim.value] = mapping[key]
                    break
            else:
                if dim is not ScoreDimension.REASONING:
                    raise ScoreValidationError(f"missing score '{dim.value}'", dimension=dim.value)
                values[dim.value] = None
        return cls(**values)

    def validate(self, *, integer: bool, case_id: str | None = None) -> None:
        for dim in DIMENSIONS:
            v = self.get(dim)
            if v is None:
                if dim is ScoreDimension.REASONING:
                    continue
                raise ScoreValidationError(
                    f"case {case_id!r}: score '{dim.value}' is missing", case_id, dim.value
                )
            if not _is_real(v) or not math.isfinite(float(v)):
                raise ScoreValidationError(
                    f"case {case_id!r}: score '{dim.value}' is not a number: {v!r}", case_id, dim.value
                )
            if integer and not isinstance(v, (int, np.integer)):
                raise ScoreValidationError(
                    f"case {case_id!r}: raw score '{dim.value}' must be an integer, got {v!r}",
                    case_id,
                    dim.value,
                )
            if not SCORE_MIN <= v <= SCORE_MAX:
                raise ScoreValidationError(
                    f"case {case_id!r}: score '{dim.value}'={v!r} outside [{SCORE_MIN}, {SCORE_MAX}]",
                    case_id,
                    dim.value,
                )


@dataclass(frozen=True)
class EvaluatorId:
    kind: EvaluatorKind
    model_id: str | None = None
    provider: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EvaluatorKind(self.kind))
        is_model = self.kind is EvaluatorKind.JUDGE_MODEL
        if is_model != (self.model_id is not None) or is_model != (self.provider is not None):
            raise ValueError("model_id and provider must be set iff kind is JudgeModel")

    @classmethod
    def primary(cls) -> "EvaluatorId":
        return cls(EvaluatorKind.PRIMARY_PANEL)

    @classmethod
    def rescore(cls) -> "EvaluatorId":
        return cls(EvaluatorKind.RESCORE_PANEL)

    @classmethod
    def judge(cls, model_id: str, provider: str) -> "EvaluatorId":
        return cls(EvaluatorKind.JUDGE_MODEL, model_id, provider)

    @property
    def name(self) -> str:
        if self.kind is EvaluatorKind.JUDGE_MODEL:
            return self.model_id  # type: ignore[return-value]
        return self.kind.value

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.kind is EvaluatorKind.JUDGE_MODEL:
            out["model_id"] = self.model_id
            out["provider"] = self.provider
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluatorId":
        return cls(EvaluatorKind(data["kind"]), data.get("model_id"), data.get("provider"))

    def sort_key(self) -> tuple:
        return (self.kind.value, self.provider or "", self.model_id or "")


JURY_EVALUATOR = EvaluatorId.judge("LLM-Jury", "ensemble")


@dataclass(frozen=True)
class EvaluationRecord:
    case_id: str
    agent_id: str
    evaluator: EvaluatorId
    scores: ScoreVector | None
    repetition: int = 0
    split: Split = Split.CALIBRATION
    agent_provider: str | None = None
    ward_agreement: bool | None = None
    derived: bool = False
    error: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "split", Split(self.split))
        if self.repetition < 0:
            raise ValueError("repetition must be >= 0")
        if (self.scores is None) == (self.error is None):
            raise ValueError("a record carries either scores or an error, not both")
        if self.ward_agreement is not None and self.evaluator.kind is not EvaluatorKind.PRIMARY_PANEL:
            raise ValueError("ward_agreement is only valid on PrimaryPanel records")

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def key(self) -> tuple:
        return (self.case_id, self.agent_id, self.evaluator, self.repetition)

    def score(self, dim: ScoreDimension | str) -> float | None:
        return None if self.scores is None else self.scores.get(dim)

    def with_scores(self, scores: ScoreVector, **changes) -> "EvaluationRecord":
        return replace(self, scores=scores, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "case_id": self.case_id,
            "agent_id": self.agent_id,
            "agent_provider": self.agent_provider,
            "evaluator": self.evaluator.as_dict(),
            "scores": None if self.scores is None else self.scores.as_dict(),
            "repetition": self.repetition,
            "split": self.split.value,
            "ward_agreement": self.ward_agreement,
            "derived": self.derived,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationRecord":
        scores = data.get("scores")
        return cls(
            case_id=str(data["case_id"]),
            agent_id=str(data["agent_id"]),
            evaluator=EvaluatorId.from_dict(data["evaluator"]),
            scores=None if scores is None else ScoreVector.from_mapping(scores),
            repetition=int(data.get("repetition", 0)),
            split=Split(data.get("split", Split.CALIBRATION.value)),
            agent_provider=data.get("agent_provider"),
            ward_agreement=data.get("ward_agreement"),
            derived=bool(data.get("derived", False)),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class AnswerBundle:
    case_id: str
    agent_id: str
    primary_dx: str
    secondary_dx: tuple[str, ...] = ()
    differential_dx: tuple[str, ...] = ()
    clinical_reasoning: str | None = None
    agent_provider: str | None = None
    split: Split = Split.CALIBRATION
    metadata: str | None = None

    def __post_init__(self):
        if not self.primary_dx or not self.primary_dx.strip():
            raise ValueError(f"case {self.case_id!r}: primary_dx must be non-empty")
        object.__setattr__(self, "secondary_dx", tuple(self.secondary_dx))
        object.__setattr__(self, "differential_dx", tuple(self.differential_dx))
        object.__setattr__(self, "split", Split(self.split))

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "agent_id": self.agent_id,
            "agent_provider": self.agent_provider,
            "split": self.split.value,
            "primary_dx": self.primary_dx,
            "secondary_dx": list(self.secondary_dx),
            "differential_dx": list(self.differential_dx),
            "clinical_reasoning": self.clinical_reasoning,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnswerBundle":
        return cls(
            case_id=str(data["case_id"]),
            agent_id=str(data["agent_id"]),
            primary_dx=data["primary_dx"],
            secondary_dx=tuple(data.get("secondary_dx") or ()),
            differential_dx=tuple(data.get("differential_dx") or ()),
            clinical_reasoning=data.get("clinical_reasoning"),
            agent_provider=data.get("agent_provider"),
            split=Split(data.get("split", Split.CALIBRATION.value)),
            metadata=data.get("metadata"),
        )


def safety_from_risk(risk: int) -> int:
    """Convert a negative-treatment-risk rating to a safety score (``6 - risk``)."""
    if isinstance(risk, bool) or not isinstance(risk, (int, np.integer)) or not 1 <= risk <= 5:
        raise ScoreValidationError(f"risk must be an integer in 1..5, got {risk!r}", dimension="safety")
    return 6 - int(risk)


def validate_records(records: Iterable[EvaluationRecord]) -> list[EvaluationRecord]:
    """Range-check scores and reject duplicate keys."""
    seen: set[tuple] = set()
    out = []
    for rec in records:
        if rec.scores is not None:
            rec.scores.validate(integer=not rec.derived, case_id=rec.case_id)
        if rec.key in seen:
            raise DuplicateRecordError(
                f"duplicate record for case={rec.case_id!r} agent={rec.agent_id!r} "
                f"evaluator={rec.evaluator.name!r} repetition={rec.repetition}"
            )
        seen.add(rec.key)
        out.append(rec)
    return out


def ingest_records(path: str | Path, schema_version: str = SCHEMA_VERSION) -> list[EvaluationRecord]:
    """Read and validate a line-delimited corpus file."""
    records = []
    seen: dict[tuple, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(data, dict):
                raise RecordParseError("expected a JSON object", lineno)
            version = str(data.get("schema_version", schema_version))
            if version != schema_version:
                raise RecordParseError(
                    f"schema_version {version!r} does not match expected {schema_version!r}", lineno
                )
            try:
                rec = EvaluationRecord.from_dict(data)
            except ScoreValidationError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise RecordParseError(f"malformed record: {exc}", lineno) from exc
            if rec.scores is not None:
                rec.scores.validate(integer=not rec.derived, case_id=rec.case_id)
            if rec.key in seen:
                raise DuplicateRecordError(
                    f"line {lineno}: duplicate of line {seen[rec.key]} "
                    f"(case={rec.case_id!r}, agent={rec.agent_id!r}, "
                    f"evaluator={rec.evaluator.name!r}, repetition={rec.repetition})"
                )
            seen[rec.key] = lineno
            records.append(rec)
    return records


def dumps_records(records: Iterable[EvaluationRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)


def write_records(records: Iterable[EvaluationRecord], path: str | Path) -> None:
    Path(path).write_text(dumps_records(records), encoding="utf-8")


def read_answers(path: str | Path) -> list[AnswerBundle]:
    """Read answer bundles; each line may carry ``"role": "reference" | "tested"``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(AnswerBundle.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RecordParseError(f"malformed answer bundle: {exc}", lineno) from exc
    return out


@dataclass(frozen=True)
class PairedScores:
    """Inner join of two evaluators on (case_id, agent_id) for one dimension."""

    case_ids: tuple[str, ...]
    agent_ids: tuple[str, ...]
    ref: np.ndarray
    other: np.ndarray
    dimension: ScoreDimension | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.case_ids)

    def __iter__(self) -> Iterator[tuple[str, str, float, float]]:
        return iter(zip(self.case_ids, self.agent_ids, self.ref.tolist(), self.other.tolist()))

    def swapped(self) -> "PairedScores":
        return replace(self, ref=self.other, other=self.ref)

    def subset(self, mask: np.ndarray) -> "PairedScores":
        idx = np.flatnonzero(mask)
        return replace(
            self,
            case_ids=tuple(self.case_ids[i] for i in idx),
            agent_ids=tuple(self.agent_ids[i] for i in idx),
            ref=self.ref[idx],
            other=self.other[idx],
        )


def collapse_scores(
    records: Iterable[EvaluationRecord],
    evaluator: EvaluatorId,
    dimension: ScoreDimension | str,
    repetition: int | None = None,
) -> dict[tuple[str, str], float]:
    """Per (case_id, agent_id) score of one evaluator; repetitions averaged."""
    dim = ScoreDimension.parse(dimension)
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    for rec in records:
        if rec.evaluator != evaluator or not rec.ok:
            continue
        if repetition is not None and rec.repetition != repetition:
            continue
        v = rec.score(dim)
        if v is None:
            continue
        acc[(rec.case_id, rec.agent_id)].append(float(v))
    return {k: math.fsum(v) / len(v) for k, v in acc.items()}


def join_pairs(
    records: Sequence[EvaluationRecord],
    reference: EvaluatorId,
    other: EvaluatorId,
    dimension: ScoreDimension | str,
    repetition: int | None = None,
) -> PairedScores:
    dim = ScoreDimension.parse(dimension)
    ref_scores = collapse_scores(records, reference, dim, repetition)
    oth_scores = collapse_scores(records, other, dim, repetition)
    keys = sorted(ref_scores.keys() & oth_scores.keys())
    if not keys:
        raise EmptySampleError(
            f"no paired {dim.label} scores between {reference.name!r} and {other.name!r}"
        )
    return PairedScores(
        case_ids=tuple(k[0] for k in keys),
        agent_ids=tuple(k[1] for k in keys),
        ref=np.array([ref_scores[k] for k in keys], dtype=float),
        other=np.array([oth_scores[k] for k in keys], dtype=float),
        dimension=dim,
        meta={"reference": reference.name, "other": other.name},
    )


def evaluators_in(records: Iterable[EvaluationRecord]) -> list[EvaluatorId]:
    return sorted({r.evaluator for r in records}, key=EvaluatorId.sort_key)
