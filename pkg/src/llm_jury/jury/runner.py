"""Run a jury of judge models over prompts and aggregate their scores."""

from __future__ import annotations

import json
import logging
import math
import random
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import httpx
import yaml

from ..errors import ConfigError, CoverageError, JudgeAuthError, ScoreParseError
from ..records import (
    DIMENSIONS,
    JURY_EVALUATOR,
    EvaluationRecord,
    EvaluatorId,
    ScoreDimension,
    ScoreVector,
)
from .client import JudgeConfig, PermanentJudgeError, TransientJudgeError, call_judge, request_payload
from .parsing import parse_scores
from .prompt import JudgePrompt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JuryRunSpec:
    judges: tuple[JudgeConfig, ...]
    prompt_template_id: str = "default-v1"
    repetitions: int = 1
    max_parallel: int = 4
    per_provider_limit: int = 2
    retry_budget: int = 3
    backoff_base: float = 1.0
    backoff_max: float = 30.0
    timeout: float = 120.0
    fail_on_error: bool = False

    def __post_init__(self):
        object.__setattr__(self, "judges", tuple(self.judges))
        if not self.judges:
            raise ConfigError("at least one judge is required", "judges")
        ids = [(j.model_id, j.provider) for j in self.judges]
        if len(set(ids)) != len(ids):
            raise ConfigError("judges must have distinct (model_id, provider) pairs", "judges")
        if self.repetitions < 1:
            raise ConfigError("must be >= 1", "repetitions")
        if self.max_parallel < 1 or self.per_provider_limit < 1:
            raise ConfigError("must be >= 1", "max_parallel")
        if self.retry_budget < 0:
            raise ConfigError("must be >= 0", "retry_budget")

    @property
    def evaluators(self) -> list[EvaluatorId]:
        return [j.evaluator for j in self.judges]

    def with_repetitions(self, n: int) -> "JuryRunSpec":
        return JuryRunSpec(**{**self.__dict__, "repetitions": n})

    @classmethod
    def from_dict(cls, data: dict) -> "JuryRunSpec":
        if "judges" not in data:
            raise ConfigError("missing", "judges")
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data and k != "judges"}
        return cls(judges=tuple(JudgeConfig.from_dict(j) for j in data["judges"]), **known)

    @classmethod
    def load(cls, path: str | Path) -> "JuryRunSpec":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return cls.from_dict(data)


@dataclass
class JudgeResponse:
    raw_text: str
    parsed: dict[ScoreDimension, int | None] | None
    latency_ms: float
    attempt: int


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def task_key(prompt: JudgePrompt, judge: JudgeConfig, repetition: int) -> dict:
    return {
        "case_id": prompt.case_id,
        "agent_id": prompt.tested.agent_id,
        "model_id": judge.model_id,
        "provider": judge.provider,
        "repetition": repetition,
    }


def _key_tuple(key: dict) -> tuple:
    return (key["case_id"], key["agent_id"], key["model_id"], key["provider"], key["repetition"])


class AuditLog:
    """Append-only JSONL log, one entry per attempted request."""

    def __init__(self, path: str | Path | None):
        self.path = None if path is None else Path(path)
        self._lock = threading.Lock()
        self._memory: list[dict] = []

    def append(self, entry: dict) -> None:
        line = json.dumps(entry, sort_keys=True)
        with self._lock:
            self._memory.append(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    def entries(self) -> list[dict]:
        if self.path is None or not self.path.exists():
            return list(self._memory)
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def answered(self) -> dict[tuple, dict]:
        """Latest successfully parsed entry per task key."""
        out = {}
        for e in self.entries():
            if e.get("status") == "ok":
                out[_key_tuple(e["key"])] = e
        return out


class _Runner:
    def __init__(self, spec: JuryRunSpec, audit: AuditLog, http: httpx.Client, sleep: Callable[[float], None]):
        self.spec = spec
        self.audit = audit
        self.http = http
        self.sleep = sleep
        self.provider_gates = defaultdict(lambda: threading.BoundedSemaphore(spec.per_provider_limit))
        self._gate_lock = threading.Lock()
        self.auth_failed: dict[str, str] = {}
        self.keys: dict[str, str] = {}
        for j in spec.judges:
            try:
                self.keys[j.model_id] = j.resolve_key()
            except JudgeAuthError as exc:
                self.auth_failed[j.model_id] = str(exc)
        self.done = audit.answered()

    def gate(self, provider: str) -> threading.BoundedSemaphore:
        with self._gate_lock:
            return self.provider_gates[provider]

    def backoff(self, attempt: int) -> None:
        delay = min(self.spec.backoff_max, self.spec.backoff_base * 2**attempt)
        if delay > 0:
            self.sleep(delay * random.uniform(0.5, 1.0))

    def run_task(self, prompt: JudgePrompt, judge: JudgeConfig, rep: int) -> EvaluationRecord:
        key = task_key(prompt, judge, rep)
        prior = self.done.get(_key_tuple(key))
        if prior is not None:
            parsed = parse_scores(prior["raw_text"], prompt.requires_reasoning)
            return self._record(prompt, judge, rep, parsed=parsed)
        payload = request_payload(judge, prompt.rubric_text)
        last_error = "no attempt made"
        for attempt in range(self.spec.retry_budget + 1):
            if judge.model_id in self.auth_failed:
                return self._record(prompt, judge, rep, error=f"auth: {self.auth_failed[judge.model_id]}")
            entry = {"key": key, "attempt": attempt, "endpoint": judge.endpoint, "request": payload}
            started = time.perf_counter()
            entry["started"] = _now()
            retry = False
            try:
                with self.gate(judge.provider):
                    result = call_judge(self.http, judge, self.keys[judge.model_id], payload, self.spec.timeout)
                entry.update(http_status=result.status, raw_body=result.body_text, raw_text=result.text)
                response = JudgeResponse(result.text or "", None, 0.0, attempt)
                try:
                    response.parsed = parse_scores(response.raw_text, prompt.requires_reasoning)
                    entry["status"] = "ok"
                except ScoreParseError as exc:
                    entry.update(status="parse_error", error=str(exc))
                    last_error = f"parse: {exc}"
                    retry = True
            except JudgeAuthError as exc:
                self.auth_failed[judge.model_id] = str(exc)
                entry.update(status="auth_error", error=str(exc))
                last_error = f"auth: {exc}"
            except TransientJudgeError as exc:
                entry.update(status="transient_error", error=str(exc))
                last_error = f"transient: {exc}"
                retry = True
            except PermanentJudgeError as exc:
                entry.update(status="permanent_error", error=str(exc))
                last_error = f"permanent: {exc}"
            entry["finished"] = _now()
            entry["latency_ms"] = round(1000 * (time.perf_counter() - started), 3)
            self.audit.append(entry)
            if entry["status"] == "ok":
                return self._record(prompt, judge, rep, parsed=response.parsed)
            if not retry:
                break
            if attempt < self.spec.retry_budget:
                self.backoff(attempt)
        return self._record(prompt, judge, rep, error=last_error)

    def _record(self, prompt, judge, rep, parsed=None, error=None) -> EvaluationRecord:
        scores = None
        if parsed is not None:
            scores = ScoreVector(**{d.value: parsed[d] for d in DIMENSIONS})
        return EvaluationRecord(
            case_id=prompt.case_id,
            agent_id=prompt.tested.agent_id,
            agent_provider=prompt.tested.agent_provider,
            evaluator=judge.evaluator,
            scores=scores,
            repetition=rep,
            split=prompt.tested.split,
            error=error,
        )


def run_judge(
    spec: JuryRunSpec,
    prompts: Sequence[JudgePrompt],
    audit_path: str | Path | None = None,
    *,
    http_client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[EvaluationRecord]:
    """One record per (prompt, judge, repetition), failures included.

    Responses are logged before parsing.  Keys already answered in an
    existing audit log are re-parsed from the log instead of re-requested.
    """
    own_client = http_client is None
    http = http_client or httpx.Client()
    runner = _Runner(spec, AuditLog(audit_path), http, sleep)
    tasks = [(p, j, r) for p in prompts for j in spec.judges for r in range(spec.repetitions)]
    try:
        with ThreadPoolExecutor(max_workers=spec.max_parallel) as pool:
            records = list(pool.map(lambda t: runner.run_task(*t), tasks))
    finally:
        if own_client:
            http.close()
    failures = [r for r in records if not r.ok]
    for r in failures:
        log.warning("judge %s failed on case %s / %s: %s", r.evaluator.name, r.case_id, r.agent_id, r.error)
    if failures and spec.fail_on_error:
        raise RuntimeError(f"{len(failures)} of {len(records)} judge requests failed")
    return sorted(records, key=lambda r: (r.case_id, r.agent_id, r.evaluator.sort_key(), r.repetition))


def stability_run(
    spec: JuryRunSpec,
    prompts: Sequence[JudgePrompt],
    audit_path: str | Path | None = None,
    **kwargs,
) -> list[EvaluationRecord]:
    """Repeated inference with identical request parameters on every repetition."""
    if spec.repetitions < 2:
        raise ConfigError("stability runs need repetitions >= 2", "repetitions")
    return run_judge(spec, prompts, audit_path, **kwargs)


def aggregate_jury(
    records: Iterable[EvaluationRecord],
    judges: Iterable[EvaluatorId],
    *,
    evaluator: EvaluatorId = JURY_EVALUATOR,
    on_missing: str = "error",
) -> list[EvaluationRecord]:
    """Unrounded per-dimension mean over judges for each (case, agent).

    Repetitions of one judge are averaged first.  With
    ``on_missing="skip"`` incomplete (case, agent) keys are dropped instead
    of raising :class:`CoverageError`.
    """
    judges = list(judges)
    judge_set = set(judges)
    by_key: dict[tuple, dict[EvaluatorId, list[EvaluationRecord]]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        if rec.evaluator in judge_set:
            by_key[(rec.case_id, rec.agent_id)][rec.evaluator].append(rec)
    out, missing = [], []
    for key in sorted(by_key):
        per_judge = by_key[key]
        vectors = {}
        for j in judges:
            recs = [r for r in per_judge.get(j, []) if r.ok]
            if not recs:
                missing.append((key[0], key[1], j.name))
                continue
            vectors[j] = recs
        if len(vectors) != len(judges):
            continue
        values = {}
        for dim in DIMENSIONS:
            per = []
            for j in judges:
                vals = [r.score(dim) for r in vectors[j]]
                vals = [float(v) for v in vals if v is not None]
                per.append(math.fsum(vals) / len(vals) if vals else None)
            present = [v for v in per if v is not None]
            if len(present) == len(per):
                values[dim.value] = math.fsum(present) / len(present)
            elif not present and dim is ScoreDimension.REASONING:
                values[dim.value] = None
            else:
                for j, v in zip(judges, per):
                    if v is None:
                        missing.append((key[0], key[1], j.name))
                values = None
                break
        if values is None:
            continue
        first = vectors[judges[0]][0]
        out.append(
            EvaluationRecord(
                case_id=key[0],
                agent_id=key[1],
                agent_provider=first.agent_provider,
                evaluator=evaluator,
                scores=ScoreVector(**values),
                split=first.split,
                derived=True,
            )
        )
    if missing and on_missing == "error":
        raise CoverageError(f"{len(missing)} missing judge scores, e.g. {missing[:3]}", missing)
    return out
