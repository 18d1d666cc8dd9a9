"""Pipeline configuration (YAML, versioned schema)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .calibration import NAMED_WEIGHTS
from .errors import ConfigError
from .records import Split

CONFIG_SCHEMA_VERSION = "1"

_TOP_LEVEL = {
    "schema_version", "seed", "corpus", "answers", "reference_agent", "ward_agent", "split",
    "jury", "bootstrap", "calibration", "ranking", "report",
}


@dataclass(frozen=True)
class JurySection:
    spec: dict[str, Any] | None = None
    stub_responses: Path | None = None
    stability_cases: tuple[str, ...] = ()
    stability_agent: str = "ward"
    stability_repetitions: int = 30


@dataclass(frozen=True)
class BootstrapSection:
    n_resamples: int = 1000
    level: float = 0.95
    plot_level: float = 0.68


@dataclass(frozen=True)
class CalibrationSection:
    folds: int = 5
    seed: int | None = None


@dataclass(frozen=True)
class RankingSection:
    top_k: int = 8
    level: float = 0.68
    weights: str = "S3"
    exclude: tuple[str, ...] = ("ward",)


@dataclass(frozen=True)
class ReportSection:
    formats: tuple[str, ...] = ("csv", "markdown")
    anonymize: bool = True
    salt: str = "llm-jury"


@dataclass(frozen=True)
class PipelineConfig:
    corpus: Path
    answers: Path | None = None
    seed: int = 0
    reference_agent: str = "panel"
    ward_agent: str = "ward"
    split: Split | None = Split.CALIBRATION
    jury: JurySection = field(default_factory=JurySection)
    bootstrap: BootstrapSection = field(default_factory=BootstrapSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    ranking: RankingSection = field(default_factory=RankingSection)
    report: ReportSection = field(default_factory=ReportSection)
    source: Path | None = None

    @property
    def calibration_seed(self) -> int:
        return self.seed if self.calibration.seed is None else self.calibration.seed

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)


def _section(data: dict, name: str, cls, base: Path, paths=()):
    raw = data.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be a mapping", name)
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        field_name = f"{name}.{sorted(unknown)[0]}"
        raise ConfigError(f"unknown field '{field_name}'", field_name)
    kwargs = {}
    for key, value in raw.items():
        if key in paths and value is not None:
            value = base / value
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc), name) from exc


def _positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"'{name}' must be an integer >= {minimum}", name)
    return value


def _level(value, name: str) -> float:
    if not isinstance(value, (int, float)) or not 0 < value < 1:
        raise ConfigError(f"'{name}' must lie in (0, 1)", name)
    return float(value)


def parse_config(data: Any, base: Path = Path(".")) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", "<root>")
    version = str(data.get("schema_version", ""))
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {data.get('schema_version')!r} (expected {CONFIG_SCHEMA_VERSION!r})",
            "schema_version",
        )
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown field '{sorted(unknown)[0]}'", sorted(unknown)[0])
    if not data.get("corpus"):
        raise ConfigError("missing required field 'corpus'", "corpus")

    jury_raw = dict(data.get("jury") or {})
    spec = jury_raw.get("spec")
    if isinstance(spec, str):
        spec_path = base / spec
        try:
            jury_raw["spec"] = yaml.safe_load(spec_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read jury spec {spec_path}: {exc}", "jury.spec") from exc
    data_jury = {**data, "jury": jury_raw}
    jury = _section(data_jury, "jury", JurySection, base, paths=("stub_responses",))
    if jury.spec is not None and not isinstance(jury.spec, dict):
        raise ConfigError("'jury.spec' must be a mapping or a path", "jury.spec")
    _positive_int(jury.stability_repetitions, "jury.stability_repetitions", 2)

    boot = _section(data, "bootstrap", BootstrapSection, base)
    _positive_int(boot.n_resamples, "bootstrap.n_resamples")
    _level(boot.level, "bootstrap.level")
    _level(boot.plot_level, "bootstrap.plot_level")
    cal = _section(data, "calibration", CalibrationSection, base)
    _positive_int(cal.folds, "calibration.folds", 2)
    rank = _section(data, "ranking", RankingSection, base)
    _positive_int(rank.top_k, "ranking.top_k")
    _level(rank.level, "ranking.level")
    if rank.weights not in NAMED_WEIGHTS:
        raise ConfigError(f"'ranking.weights' must be one of {sorted(NAMED_WEIGHTS)}", "ranking.weights")
    rep = _section(data, "report", ReportSection, base)
    bad = set(rep.formats) - {"csv", "markdown"}
    if bad:
        raise ConfigError(f"unsupported report format {sorted(bad)[0]!r}", "report.formats")

    split_raw = data.get("split", Split.CALIBRATION.value)
    try:
        split = None if split_raw in (None, "all") else Split(split_raw)
    except ValueError as exc:
        raise ConfigError(f"invalid split {split_raw!r}", "split") from exc
    seed = data.get("seed", 0)
    _positive_int(seed, "seed", 0)
    return PipelineConfig(
        corpus=base / data["corpus"],
        answers=None if not data.get("answers") else base / data["answers"],
        seed=seed,
        reference_agent=str(data.get("reference_agent", "panel")),
        ward_agent=str(data.get("ward_agent", "ward")),
        split=split,
        jury=jury,
        bootstrap=boot,
        calibration=cal,
        ranking=rank,
        report=rep,
    )


def load_config(path: str | Path) -> PipelineConfig:
    """Read a YAML config; relative paths resolve against the config's directory."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "<file>") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}", "<file>") from exc
    cfg = parse_config(data, path.parent)
    return replace(cfg, source=path)
