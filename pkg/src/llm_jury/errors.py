"""Exception hierarchy shared across the package."""

from __future__ import annotations


class JuryError(Exception):
    """Base class for all errors raised by llm_jury."""


class RecordParseError(JuryError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScoreValidationError(JuryError, ValueError):
    """A score is out of range or of the wrong type."""

    def __init__(self, message: str, case_id: str | None = None, dimension: str | None = None):
        self.case_id = case_id
        self.dimension = dimension
        super().__init__(message)


class DuplicateRecordError(JuryError, ValueError):
    """Two records share (case_id, agent_id, evaluator, repetition)."""


class EmptySampleError(JuryError, ValueError):
    """A paired sample or denominator is empty."""


class UndefinedStatisticError(JuryError, ValueError):
    """A statistic is undefined on the given data (e.g. constant column)."""


class DegenerateFitError(JuryError, ValueError):
    """Calibration fit with fewer than two input levels."""


class CoverageError(JuryError, ValueError):
    """Aggregation is missing a judge score for some (case, agent)."""

    def __init__(self, message: str, missing: list | None = None):
        self.missing = list(missing or [])
        super().__init__(message)


class TemplateError(JuryError, ValueError):
    pass


class ScoreParseError(JuryError, ValueError):
    """A judge response could not be parsed into scores."""

    def __init__(self, message: str, dimension: str | None = None):
        self.dimension = dimension
        super().__init__(message)


class ScoreRangeError(ScoreParseError):
    """A parsed score is fractional or outside 1..5."""


class ConfigError(JuryError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ConvergenceError(JuryError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class JudgeAuthError(JuryError, RuntimeError):
    pass


class PipelineError(JuryError, RuntimeError):
    """Wraps an error raised inside a pipeline stage, naming the stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
