"""Evaluate diagnostic answers with a jury of LLM judges and compare them to human panels."""

from .errors import JuryError
from .records import (
    AnswerBundle,
    EvaluationRecord,
    EvaluatorId,
    EvaluatorKind,
    PairedScores,
    ScoreDimension,
    ScoreVector,
    Split,
    ingest_records,
    join_pairs,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerBundle",
    "EvaluationRecord",
    "EvaluatorId",
    "EvaluatorKind",
    "JuryError",
    "PairedScores",
    "ScoreDimension",
    "ScoreVector",
    "Split",
    "ingest_records",
    "join_pairs",
    "__version__",
]
