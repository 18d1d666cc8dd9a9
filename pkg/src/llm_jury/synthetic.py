"""Seeded synthetic data for recovery tests, benchmarks and the bundled fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jury.client import JudgeConfig
from .jury.parsing import format_score_block
from .jury.prompt import build_prompts
from .jury.stub import canned_key
from .records import (
    JURY_EVALUATOR,
    AnswerBundle,
    EvaluationRecord,
    EvaluatorId,
    PairedScores,
    ScoreDimension,
    ScoreVector,
    Split,
)

# Reference score distribution, skewed toward good answers.
PANEL_PROBS = np.array([0.08, 0.10, 0.17, 0.30, 0.35])


def panel_scores(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.choice(np.arange(1, 6), size=n, p=PANEL_PROBS).astype(float)


def calibration_sample(
    seed: int, shift: float, sigma: float = 0.8, n_cases: int = 300, n_records: int = 330
) -> PairedScores:
    """Panel integers and a stricter real-valued judge: ``clamp(clamp(panel - shift) + noise)``."""
    rng = np.random.default_rng(seed)
    cases = [f"c{i:04d}" for i in range(n_cases)]
    extra = rng.choice(n_cases, size=n_records - n_cases, replace=False)
    case_ids = cases + [cases[i] for i in sorted(extra)]
    agent_ids = ["ward"] * n_cases + ["model"] * (n_records - n_cases)
    panel = panel_scores(rng, n_records)
    judge = np.clip(np.clip(panel - shift, 1, 5) + rng.normal(0, sigma, n_records), 1, 5)
    return PairedScores(tuple(case_ids), tuple(agent_ids), panel, judge, ScoreDimension.DX)


@dataclass(frozen=True)
class BiasSample:
    scores: np.ndarray
    same: np.ndarray
    judges: list[str]
    cases: list[str]


def bias_sample(
    seed: int,
    beta: float,
    case_var: float = 0.7,
    resid_var: float = 0.3,
    n_cases: int = 200,
    n_judges: int = 3,
    agents_per_provider: int = 1,
) -> BiasSample:
    """Every judge scores one answer per provider and case; one provider matches."""
    rng = np.random.default_rng(seed)
    judge_effect = rng.normal(0, 0.2, n_judges)
    scores, same, judges, cases = [], [], [], []
    for c in range(n_cases):
        u = rng.normal(0, np.sqrt(case_var))
        for j in range(n_judges):
            for p in range(n_judges):
                for _ in range(agents_per_provider):
                    s = j == p
                    scores.append(3.0 + judge_effect[j] + beta * s + u + rng.normal(0, np.sqrt(resid_var)))
                    same.append(s)
                    judges.append(f"j{j}")
                    cases.append(f"c{c}")
    return BiasSample(np.array(scores), np.array(same), judges, cases)


def ranking_records(
    seed: int, n_agents: int = 8, gap: float = 0.15, sigma: float = 0.3, n_cases: int = 300,
    base: float = 3.0,
) -> tuple[list[EvaluationRecord], dict[str, float]]:
    """Jury-style records whose S3 composite is ``true mean + N(0, sigma)``.

    All four dimensions carry the same value, so any weighting that sums to
    one reproduces it.
    """
    rng = np.random.default_rng(seed)
    truth = {f"agent{a}": base + gap * a for a in range(n_agents)}
    records = []
    for agent, mu in truth.items():
        vals = np.clip(mu + rng.normal(0, sigma, n_cases), 1, 5)
        for c, v in enumerate(vals):
            v = float(v)
            records.append(EvaluationRecord(
                case_id=f"c{c:04d}", agent_id=agent, evaluator=JURY_EVALUATOR,
                scores=ScoreVector(v, v, v, v), derived=True,
            ))
    return records, truth


def logistic_disagreement(seed: int, n: int = 300) -> tuple[np.ndarray, np.ndarray]:
    """Safety scores uniform on [1, 5] with ``P(disagree) = 1 / (1 + exp(s - 3))``."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(1, 5, n)
    p = 1.0 / (1.0 + np.exp(s - 3.0))
    return s, rng.random(n) < p


def logistic_bin_truth(edges=(1.0, 2.0, 3.0, 4.0, 5.0)) -> np.ndarray:
    """Exact mean of the logistic curve over each bin (uniform scores)."""
    e = np.asarray(edges, dtype=float)
    # integral of 1 / (1 + exp(s - 3)) ds = s - log(1 + exp(s - 3))
    F = e - np.log1p(np.exp(e - 3.0))
    return np.diff(F) / np.diff(e)


# ---------------------------------------------------------------- fixtures

FIXTURE_JUDGES = (
    ("opus-stub", "anthropic", 0.9),
    ("gemini-stub", "google", 1.1),
    ("o3-stub", "openai", 0.7),
)
FIXTURE_AGENTS = (
    ("claude-a", "anthropic", 0.0),
    ("claude-b", "anthropic", -0.3),
    ("gemini-a", "google", -0.1),
    ("gemini-b", "google", -0.5),
    ("gpt-a", "openai", 0.1),
    ("gpt-b", "openai", -0.4),
    ("llama-a", "meta", -0.05),
    ("llama-b", "meta", -0.45),
)
WARD = ("ward", "hospital")
REFERENCE_AGENT = "panel"
LENIENT_RATE = 0.03


@dataclass
class FixtureCorpus:
    answers: list[AnswerBundle]
    records: list[EvaluationRecord]
    canned: dict[str, list[str]]
    judges: list[JudgeConfig]
    stability_cases: list[str]


def _clip_int(x: float) -> int:
    return int(min(5, max(1, round(x))))


def fixture_corpus(
    seed: int = 20240501,
    n_cases: int = 80,
    agents_per_case: int = 4,
    n_rescore: int = 20,
    stability_cases: int = 3,
    stability_reps: int = 30,
    endpoint: str = "http://127.0.0.1:0/v1/chat/completions",
) -> FixtureCorpus:
    """Toy panel corpus plus canned judge replies that reproduce a stricter jury."""
    rng = np.random.default_rng(seed)
    judges = [JudgeConfig(model_id=m, provider=p, endpoint=endpoint, auth_env="LLM_JURY_STUB_KEY")
              for m, p, _ in FIXTURE_JUDGES]
    answers: list[AnswerBundle] = []
    records: list[EvaluationRecord] = []
    truth: dict[tuple[str, str], np.ndarray] = {}
    harmful: set[tuple[str, str]] = set()
    primary, rescore = EvaluatorId.primary(), EvaluatorId.rescore()
    rescored = set(f"case{i:03d}" for i in rng.choice(n_cases, n_rescore, replace=False))

    for i in range(n_cases):
        case = f"case{i:03d}"
        answers.append(AnswerBundle(
            case_id=case, agent_id=REFERENCE_AGENT,
            primary_dx=f"condition-{i}", secondary_dx=(f"complication-{i}",),
            differential_dx=(f"alt-{i}-a", f"alt-{i}-b"),
            clinical_reasoning=f"Findings in case {i} support condition-{i}.",
        ))
        picked = rng.choice(len(FIXTURE_AGENTS), agents_per_case, replace=False)
        tested = [WARD + (-0.6,)] + [FIXTURE_AGENTS[k] for k in sorted(picked)]
        for agent, provider, skill in tested:
            is_ward = agent == WARD[0]
            answers.append(AnswerBundle(
                case_id=case, agent_id=agent, agent_provider=provider,
                primary_dx=f"{agent}-dx-{i}", secondary_dx=(),
                differential_dx=(f"{agent}-alt-{i}",),
                clinical_reasoning=None if is_ward else f"{agent} reasoning for case {i}.",
            ))
            latent = np.clip(3.6 + skill + rng.normal(0, 1.0, 4), 1, 5)
            truth[(case, agent)] = latent
            vec = [_clip_int(v + rng.normal(0, 0.4)) for v in latent]
            panel = ScoreVector(vec[0], vec[1], None if is_ward else vec[2], vec[3])
            if vec[3] <= 2:
                harmful.add((case, agent))
            records.append(EvaluationRecord(
                case_id=case, agent_id=agent, agent_provider=provider, evaluator=primary,
                scores=panel, split=Split.CALIBRATION,
                ward_agreement=(bool(rng.random() < 0.25 + 0.6 * (vec[3] - 1) / 4) if is_ward else None),
            ))
            if case in rescored and (is_ward or rng.random() < 0.1):
                vec2 = [_clip_int(v + rng.normal(0, 0.9)) for v in latent]
                if (case, agent) in harmful and rng.random() < 0.5:
                    vec2[3] = vec[3] + 3
                records.append(EvaluationRecord(
                    case_id=case, agent_id=agent, agent_provider=provider, evaluator=rescore,
                    scores=ScoreVector(vec2[0], vec2[1], None if is_ward else vec2[2], vec2[3]),
                    split=Split.CALIBRATION,
                ))

    # Harmful answers that fool judges more often than chance.
    misleading = {k for k in sorted(harmful) if rng.random() < 0.08}
    prompts = build_prompts(answers, REFERENCE_AGENT)
    stab = sorted({p.case_id for p in prompts})[:stability_cases]
    canned: dict[str, list[str]] = {}
    for prompt in prompts:
        latent = truth[(prompt.case_id, prompt.tested.agent_id)]
        for (model, _, shift), judge in zip(FIXTURE_JUDGES, judges):
            reps = stability_reps if (prompt.case_id in stab and prompt.tested.agent_id == WARD[0]) else 1
            replies = []
            for _ in range(reps):
                s = [_clip_int(v - shift + rng.normal(0, 0.6)) for v in latent]
                key = (prompt.case_id, prompt.tested.agent_id)
                if key in harmful and rng.random() < (0.7 if key in misleading else LENIENT_RATE):
                    s[3] = 5  # lenient safety call on a harmful answer
                reasoning = s[2] if prompt.requires_reasoning else None
                replies.append(f"Assessment of {prompt.tested.agent_id}.\n\n"
                               + format_score_block(s[0], s[1], reasoning, 6 - s[3]))
            canned[canned_key(judge.model_id, prompt.rubric_text)] = replies
    return FixtureCorpus(answers, records, canned, judges, stab)
