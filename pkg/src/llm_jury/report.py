"""End-to-end pipeline and emission of report tables and plot data."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import shutil
import tempfile
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, kernels, metrics
from .analysis import (
    disagreement_curve,
    human_stability,
    rank_agents,
    same_provider_bias,
    severe_error_flags,
    severe_overlap,
    stability_summary,
)
from .analysis.disagreement import ward_disagreement_data
from .calibration import NAMED_WEIGHTS, S3, S4, calibrate_judges, composite_score
from .config import PipelineConfig
from .errors import ConfigError, CoverageError, EmptySampleError, JuryError, PipelineError, UndefinedStatisticError
from .jury.prompt import build_prompts
from .jury.runner import JuryRunSpec, aggregate_jury, run_judge, stability_run
from .jury.stub import StubJudgeServer, load_canned
from .records import (
    DIMENSIONS,
    JURY_EVALUATOR,
    EvaluationRecord,
    EvaluatorId,
    EvaluatorKind,
    PairedScores,
    ScoreDimension,
    ingest_records,
    join_pairs,
    read_answers,
    write_records,
)
from .resampling import CI_METHOD, RNG_NAME, BootstrapSpec, beta_binomial_exceedance, bootstrap_ci, bootstrap_win_rate

log = logging.getLogger(__name__)

CALIBRATED_JURY = EvaluatorId.judge("LLM-Jury (calibrated)", "ensemble")
STUB_KEY_ENV = "LLM_JURY_STUB_KEY"
PROVENANCE = ("operation", "n", "seed")
# Analyses that merely lack data are omitted with a note; other errors abort.
_SOFT_ERRORS = (EmptySampleError, UndefinedStatisticError, CoverageError)

DECISIONS = (
    "jury score = unrounded mean of judge scores",
    "safety = 6 - risk",
    "offset = mean(reference - evaluator)",
    "severe error: reference safety <= 2 and evaluator - reference >= 3 on unrounded values",
    "quadratic kappa on real-valued scores via the pairwise closed form",
    "confusion matrices bin real scores by round-half-up",
    "bootstrap: case-level resampling, percentile intervals",
    "exceedance: beta-binomial with flat Beta(1, 1) priors",
    "calibration: isotonic fit, linear interpolation between knots, clamped to [1, 5]",
    "calibrated metrics use out-of-fold maps, with an in-sample companion table; folds assigned by case",
    "calibrated jury = mean of calibrated judge scores",
    "win-rate delta is the jury's advantage over the re-score panel",
    "same-provider bias: REML random intercept per case, judge fixed effects, Wald 95% CI",
    "disagreement bins: unit width over [1, 5]",
    "KDE: Gaussian kernel, Silverman bandwidth, 256-point grid padded by 4 bandwidths",
)


# ---------------------------------------------------------------- tables

@dataclass(frozen=True)
class Column:
    name: str
    fmt: str = "str"  # str | int | f2 | f3 | pct | bool


@dataclass
class Table:
    name: str
    title: str
    columns: list[Column]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *values, operation: str, n: int | None, seed: int | None) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values) + (operation, n, seed))

    @property
    def header(self) -> list[str]:
        return [c.name for c in self.columns] + list(PROVENANCE)

    def formatted(self) -> list[list[str]]:
        fmts = [c.fmt for c in self.columns] + ["str", "int", "int"]
        return [[format_cell(v, f) for v, f in zip(row, fmts)] for row in self.rows]


def format_cell(value: Any, fmt: str) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    if fmt == "int":
        return str(int(value))
    if fmt == "f2":
        return f"{float(value):.2f}"
    if fmt == "f3":
        return f"{float(value):.3f}"
    if fmt == "pct":
        return f"{float(value):.1f}"
    if fmt == "bool":
        return "yes" if value else "no"
    return str(value)


@dataclass
class ReportBundle:
    tables: dict[str, Table]
    plots: dict[str, Any]
    metadata: dict[str, Any]
    notes: list[str]
    judge_records: list[EvaluationRecord] = field(default_factory=list)


def _ci_cols(stat: str) -> list[Column]:
    return [Column(stat, "f3"), Column(f"{stat}_ci_minus", "f3"), Column(f"{stat}_ci_plus", "f3")]


def _ci_values(res) -> tuple[float, float, float]:
    return res.point, res.lo - res.point, res.hi - res.point


def anonymize(agents: Sequence[str], salt: str, keep: Sequence[str] = ()) -> dict[str, str]:
    """Stable ``M1..Mn`` labels ordered by a salted hash of the agent id."""
    keyed = sorted(
        (a for a in set(agents) if a not in keep),
        key=lambda a: hashlib.sha256(f"{salt}\x00{a}".encode()).hexdigest(),
    )
    labels = {a: f"M{i + 1}" for i, a in enumerate(keyed)}
    labels.update({a: a for a in keep})
    return labels


# ---------------------------------------------------------------- pipeline

class _Pipeline:
    def __init__(self, cfg: PipelineConfig, http_client=None):
        self.cfg = cfg
        self.seed = cfg.seed
        self.spec = BootstrapSpec(cfg.bootstrap.n_resamples, cfg.bootstrap.level, cfg.seed)
        self.tables: dict[str, Table] = {}
        self.plots: dict[str, Any] = {}
        self.notes: list[str] = []
        self.http_client = http_client
        self.primary = EvaluatorId.primary()
        self.rescore = EvaluatorId.rescore()
        self.judge_records: list[EvaluationRecord] = []
        self.stability_records: list[EvaluationRecord] = []
        self.cal_jury: list[EvaluationRecord] = []
        self._labels: dict[str, str] | None = None

    def stage(self, name: str, fn: Callable[[], Any], soft: bool = True):
        log.info("stage %s", name)
        try:
            return fn()
        except _SOFT_ERRORS as exc:
            if not soft:
                raise PipelineError(name, exc) from exc
            self.notes.append(f"{name}: omitted ({type(exc).__name__}: {exc})")
            log.warning("stage %s omitted: %s", name, exc)
            return None
        except PipelineError:
            raise
        except (JuryError, OSError, ValueError, KeyError, RuntimeError) as exc:
            raise PipelineError(name, exc) from exc

    # -- ingest / judge -------------------------------------------------
    def ingest(self) -> None:
        cfg = self.cfg
        raw = Path(cfg.corpus).read_bytes()
        self.corpus_hash = hashlib.sha256(raw).hexdigest()
        records = ingest_records(cfg.corpus)
        self.all_records = records
        self.records = [r for r in records if cfg.split is None or r.split is cfg.split]
        if not any(r.evaluator == self.primary for r in self.records):
            raise EmptySampleError("corpus has no primary-panel records in the selected split")

    def _jury_spec(self, url: str | None) -> JuryRunSpec:
        spec = JuryRunSpec.from_dict(self.cfg.jury.spec)
        if url is None:
            return spec
        judges = tuple(replace(j, endpoint=url, auth_env=STUB_KEY_ENV) for j in spec.judges)
        return JuryRunSpec(**{**spec.__dict__, "judges": judges})

    def judge(self, work_dir: Path) -> None:
        jury = self.cfg.jury
        if jury.spec is None:
            self.judge_records = []
            return
        if self.cfg.answers is None:
            raise ConfigError("jury.spec requires 'answers'", "answers")
        bundles = read_answers(self.cfg.answers)
        template = self._jury_spec(None).prompt_template_id
        prompts = build_prompts(bundles, self.cfg.reference_agent, template)
        canned = load_canned(jury.stub_responses) if jury.stub_responses else None
        audit = work_dir / "audit"
        audit.mkdir(parents=True, exist_ok=True)
        with ExitStack() as stack:
            url = None
            if canned is not None:
                os.environ.setdefault(STUB_KEY_ENV, "stub")
                url = stack.enter_context(StubJudgeServer(canned)).url
            spec = self._jury_spec(url)
            self.judge_records = run_judge(spec, prompts, audit / "judge.jsonl", http_client=self.http_client)
        if jury.stability_cases:
            wanted = set(jury.stability_cases)
            sp = [p for p in prompts if p.case_id in wanted and p.tested.agent_id == jury.stability_agent]
            if not sp:
                raise EmptySampleError("no prompts match jury.stability_cases")
            with ExitStack() as stack:
                url = stack.enter_context(StubJudgeServer(canned)).url if canned is not None else None
                spec = self._jury_spec(url).with_repetitions(jury.stability_repetitions)
                self.stability_records = stability_run(
                    spec, sp, audit / "stability.jsonl", http_client=self.http_client
                )

    def assemble(self) -> None:
        """Merge judge output into the corpus and build the jury records."""
        fresh = [r for r in self.judge_records if self.cfg.split is None or r.split is self.cfg.split]
        present = {r.key for r in self.records}
        self.records = self.records + [r for r in fresh if r.key not in present]
        self.judges = sorted(
            {r.evaluator for r in self.records if r.evaluator.kind is EvaluatorKind.JUDGE_MODEL and not r.derived},
            key=EvaluatorId.sort_key,
        )
        self.judges = [j for j in self.judges if j not in (JURY_EVALUATOR, CALIBRATED_JURY)]
        failures = sum(1 for r in self.records if not r.ok)
        if failures:
            self.notes.append(f"judge: {failures} failure records excluded from statistics")
        self.jury_records: list[EvaluationRecord] = []
        if self.judges:
            self.jury_records = aggregate_jury(self.records, self.judges, on_missing="skip")
        self.has_rescore = any(r.evaluator == self.rescore for r in self.records)
        self.evaluators = ([self.rescore] if self.has_rescore else []) + list(self.judges)
        if self.jury_records:
            self.evaluators.append(JURY_EVALUATOR)
        self.scored = self.records + self.jury_records

    # -- helpers ----------------------------------------------------------
    def pairs(self, ev: EvaluatorId, dim: ScoreDimension, records=None) -> PairedScores:
        return join_pairs(records if records is not None else self.scored, self.primary, ev, dim)

    def _for_each(self, evaluators, fn, label: str):
        out = {}
        for ev in evaluators:
            for dim in DIMENSIONS:
                try:
                    out[(ev, dim)] = fn(ev, dim)
                except _SOFT_ERRORS as exc:
                    self.notes.append(f"{label}: {ev.name}/{dim.label} omitted ({exc})")
        return out

    # -- analyses -------------------------------------------------------
    def counts_table(self) -> None:
        t = Table("tableA1_counts", "Number of diagnoses scored",
                  [Column("evaluator"), Column("split"), Column("records", "int"), Column("cases", "int")])
        by: dict[tuple, list[EvaluationRecord]] = {}
        for r in self.all_records + [r for r in self.judge_records if r.key not in {x.key for x in self.all_records}]:
            if r.ok:
                by.setdefault((r.evaluator.sort_key(), r.evaluator.name, r.split.value), []).append(r)
        for (_, name, split), rs in sorted(by.items()):
            t.add(name, split, len(rs), len({r.case_id for r in rs}), operation="count", n=len(rs), seed=None)
        self.tables[t.name] = t

    def agreement(self) -> None:
        t1 = Table("table1_offset_rmse", "Offset and RMSE relative to the primary panel",
                   [Column("evaluator"), Column("score"), Column("n", "int")] + _ci_cols("offset") + _ci_cols("rmse"))
        t2 = Table("table2_rho_kappa", "Spearman rho and quadratic-weighted kappa",
                   [Column("evaluator"), Column("score"), Column("n", "int"), Column("spearman_rho", "f2"),
                    Column("weighted_kappa", "f2"), Column("kendall_tau", "f2"), Column("exact_match_pct", "pct")])
        plot_level = self.cfg.bootstrap.plot_level
        err_plot, agr_plot, cm_plot = [], [], []

        def one(ev, dim):
            p = self.pairs(ev, dim)
            off = bootstrap_ci(p, "offset", self.spec)
            rm = bootstrap_ci(p, "rmse", self.spec)
            t1.add(ev.name, dim.label, len(p), *_ci_values(off), *_ci_values(rm),
                   operation="bootstrap_ci(offset, rmse)", n=len(p), seed=self.seed)
            err_plot.append({"evaluator": ev.name, "score": dim.label, "n": len(p), "level": plot_level,
                             "offset": off.point, "offset_ci": off.interval(plot_level),
                             "rmse": rm.point, "rmse_ci": rm.interval(plot_level)})
            rep = metrics.agreement_report(p)
            t2.add(ev.name, dim.label, len(p), rep.spearman_rho, rep.weighted_kappa, rep.kendall_tau,
                   rep.exact_match_pct, operation="agreement_report", n=len(p), seed=None)
            entry = {"evaluator": ev.name, "score": dim.label, "n": len(p), "level": plot_level,
                     "spearman_rho": rep.spearman_rho, "weighted_kappa": rep.weighted_kappa}
            for stat in ("spearman", "kappa"):
                try:
                    entry[f"{stat}_ci"] = bootstrap_ci(p, stat, self.spec).interval(plot_level)
                except _SOFT_ERRORS:
                    entry[f"{stat}_ci"] = None
            agr_plot.append(entry)
            cm = metrics.confusion_matrix(p)
            cm_plot.append({"evaluator": ev.name, "score": dim.label, "n": cm.n,
                            "rows": "reference score 1..5", "cols": "evaluator score 1..5 (round half up)",
                            "counts": cm.counts.tolist(), "exact_match_pct": cm.exact_match_pct})

        self._for_each(self.evaluators, one, "agreement")
        self.tables[t1.name] = t1
        self.tables[t2.name] = t2
        self.plots["fig3_confusion_matrices"] = cm_plot
        self.plots["figA2_offset_vs_rmse"] = err_plot
        self.plots["figA3_rho_vs_kappa"] = agr_plot

    def distributions(self) -> None:
        dist, corr = [], []
        for ev in [self.primary] + self.evaluators:
            recs = [r for r in self.scored if r.evaluator == ev and r.ok]
            for dim in DIMENSIONS:
                vals = np.array([r.score(dim) for r in recs if r.score(dim) is not None], dtype=float)
                if vals.size == 0:
                    continue
                bins = metrics.bin_score(vals)
                dist.append({
                    "evaluator": ev.name, "score": dim.label, "n": int(vals.size),
                    "mean": math.fsum(vals.tolist()) / vals.size,
                    "std": float(np.std(vals, ddof=1)) if vals.size > 1 else None,
                    "counts": [int((bins == k).sum()) for k in range(1, 6)],
                })
            try:
                cm = metrics.inter_score_correlations(recs)
            except _SOFT_ERRORS as exc:
                self.notes.append(f"figA4: {ev.name} omitted ({exc})")
                continue
            corr.append({"evaluator": ev.name, "dimensions": [d.label for d in cm.dimensions],
                         "matrix": [[None if math.isnan(v) else v for v in row] for row in cm.matrix.tolist()],
                         "n": cm.n.tolist()})
        self.plots["figA1_score_distributions"] = dist
        self.plots["figA4_inter_score_correlations"] = corr

    def severe(self) -> None:
        reports = {}
        for ev in self.evaluators:
            try:
                reports[ev] = severe_error_flags(self.pairs(ev, ScoreDimension.SAFETY))
            except _SOFT_ERRORS as exc:
                self.notes.append(f"severe: {ev.name} omitted ({exc})")
        if not reports:
            raise EmptySampleError("no evaluator has paired safety scores")
        t = Table("table3_severe_rates", "Severe error rates relative to the primary panel",
                  [Column("evaluator"), Column("harmful_n", "int"), Column("severe_k", "int"), Column("rate_pct", "pct")])
        for ev, rep in reports.items():
            t.add(ev.name, rep.n, rep.k, None if rep.rate is None else 100 * rep.rate,
                  operation="severe_error_flags", n=rep.n, seed=None)
        self.tables[t.name] = t
        if self.rescore in reports and reports[self.rescore].n > 0:
            rb = reports[self.rescore]
            te = Table("table3_exceedance", "P(re-score panel severe rate > evaluator severe rate)",
                       [Column("evaluator"), Column("k_a", "int"), Column("n_a", "int"), Column("k_b", "int"),
                        Column("n_b", "int"), Column("p_exceed_pct", "pct")])
            for ev, ra in reports.items():
                if ev == self.rescore or ra.n == 0:
                    continue
                ex = beta_binomial_exceedance(ra.k, ra.n, rb.k, rb.n)
                te.add(ev.name, ra.k, ra.n, rb.k, rb.n, 100 * ex.p_exceed,
                       operation="beta_binomial_exceedance(flat prior)", n=ra.n + rb.n, seed=None)
            self.tables[te.name] = te
        else:
            self.notes.append("table3_exceedance: omitted (no re-score panel harmful diagnoses)")
        flags = {ev.name: {f"{c}/{a}": f for (c, a), f in rep.flag_map().items()} for ev, rep in reports.items()}
        members = [j.name for j in self.judges if j.name in flags]
        ov = severe_overlap(flags, members or None)
        self.plots["fig4_severe_overlap"] = {
            "evaluators": list(ov.evaluators), "jury_members": members,
            "cases": [self._anon_key(c) for c in ov.cases],
            "grid": [[ov.grid[(c, e)] for e in ov.evaluators] for c in ov.cases],
            "majority": [ov.majority[c] for c in ov.cases],
            "union_count": ov.union_count, "majority_count": ov.majority_count,
        }

    def stability(self) -> None:
        t = Table("table4_stability", "Score variability across repetitions",
                  [Column("evaluator"), Column("score"), Column("groups", "int"), Column("mean_cv", "f3"),
                   Column("mean_std", "f3")])
        reps = self.stability_records or [r for r in self.all_records if r.repetition > 0]
        if reps:
            stab_keys = {(r.case_id, r.agent_id, r.evaluator) for r in reps}
            pool = reps if self.stability_records else [
                r for r in self.all_records if (r.case_id, r.agent_id, r.evaluator) in stab_keys
            ]
            rep = stability_summary(pool)
            for s in rep.summary:
                t.add(s.evaluator, s.dimension.label, s.n_groups, s.mean_cv, s.mean_std,
                      operation="stability_summary", n=s.n_groups, seed=None)
        if self.has_rescore:
            hum = human_stability(self.records)
            for s in hum.summary:
                t.add(s.evaluator, s.dimension.label, s.n_groups, s.mean_cv, s.mean_std,
                      operation="human_stability", n=s.n_groups, seed=None)
        if not t.rows:
            raise EmptySampleError("no repeated scores")
        self.tables[t.name] = t

    def calibrate(self) -> None:
        if not self.judges:
            raise EmptySampleError("no judge records to calibrate")
        cal = calibrate_judges(self.records, self.primary, self.judges,
                               k=self.cfg.calibration.folds, seed=self.cfg.calibration_seed)
        self.calibration = cal
        judge_recs = [r for r in self.records if r.evaluator in self.judges and r.ok]
        self.cal_records = cal.calibrate_records(judge_recs, mode="oof")
        self.cal_jury = aggregate_jury(self.cal_records, self.judges, evaluator=CALIBRATED_JURY, on_missing="skip")
        base = [r for r in self.records if r.evaluator not in self.judges]
        self.cal_scored = base + self.cal_records + self.cal_jury
        self.plots["figA5_calibration_curves"] = [
            {"judge": j.name, "score": d.label, "n": res.full_map.n,
             "full": res.full_map.knots, "folds": [m.knots for m in res.fold_maps]}
            for (j, d), res in sorted(cal.results.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].value))
        ]

        t = Table("tableA3_calibration", "Performance after calibration (out-of-fold) and change",
                  [Column("evaluator"), Column("score"), Column("n", "int")]
                  + [c for s in ("offset", "rmse", "spearman_rho", "weighted_kappa")
                     for c in (Column(s, "f2"), Column(f"{s}_change", "f2"), Column(f"{s}_significant", "bool"))])
        pairs_before = [(j, j, self.scored) for j in self.judges] + [(JURY_EVALUATOR, CALIBRATED_JURY, None)]

        def one(ev_raw, ev_cal, dim):
            before = self.pairs(ev_raw, dim)
            after = join_pairs(self.cal_scored, self.primary, ev_cal, dim)
            row = []
            for stat in ("offset", "rmse", "spearman", "kappa"):
                b = bootstrap_ci(before, stat, self.spec)
                a = bootstrap_ci(after, stat, self.spec)
                se = math.hypot(np.nanstd(b.estimates, ddof=1), np.nanstd(a.estimates, ddof=1))
                change = a.point - b.point
                row += [a.point, change, abs(change) > 2 * se]
            t.add(ev_raw.name, dim.label, len(after), *row,
                  operation="bootstrap_se(before, after)", n=len(after), seed=self.seed)

        for ev_raw, ev_cal, _ in pairs_before:
            for dim in DIMENSIONS:
                try:
                    one(ev_raw, ev_cal, dim)
                except _SOFT_ERRORS as exc:
                    self.notes.append(f"tableA3: {ev_raw.name}/{dim.label} omitted ({exc})")
        self.tables[t.name] = t
        self._in_sample_calibration(cal, judge_recs)
        self._composite_folds()

    def _in_sample_calibration(self, cal, judge_recs) -> None:
        # Full-sample maps applied to the data they were fitted on; optimistic by construction.
        full = cal.calibrate_records(judge_recs, mode="full")
        full_jury = aggregate_jury(full, self.judges, evaluator=CALIBRATED_JURY, on_missing="skip")
        scored = [r for r in self.records if r.evaluator not in self.judges] + full + full_jury
        t = Table("tableA3_calibration_in_sample", "Performance after calibration (in-sample)",
                  [Column("evaluator"), Column("score"), Column("n", "int"), Column("offset", "f2"),
                   Column("rmse", "f2"), Column("spearman_rho", "f2"), Column("weighted_kappa", "f2")])
        for ev_raw, ev_cal in [(j, j) for j in self.judges] + [(JURY_EVALUATOR, CALIBRATED_JURY)]:
            for dim in DIMENSIONS:
                try:
                    p = join_pairs(scored, self.primary, ev_cal, dim)
                    err = metrics.offset_rmse(p)
                    row = [err.offset, err.rmse, metrics.spearman_rho(p), metrics.weighted_kappa(p)]
                except _SOFT_ERRORS as exc:
                    self.notes.append(f"tableA3 in-sample: {ev_raw.name}/{dim.label} omitted ({exc})")
                    continue
                t.add(ev_raw.name, dim.label, len(p), *row, operation="full_map_point", n=len(p), seed=None)
        self.tables[t.name] = t

    def _composite_folds(self) -> None:
        raw = {(r.case_id, r.agent_id): r.scores for r in self.jury_records}
        cal = {(r.case_id, r.agent_id): r.scores for r in self.cal_jury}
        panel = {(r.case_id, r.agent_id): r.scores for r in self.records if r.evaluator == self.primary and r.ok}
        out = []
        for name, w in (("S3", S3), ("S4", S4)):
            for fold in range(self.calibration.folds.k):
                pts = []
                for key in sorted(raw.keys() & cal.keys() & panel.keys()):
                    if self.calibration.folds.fold_of(key[0]) != fold:
                        continue
                    try:
                        pts.append((composite_score(raw[key], w), composite_score(cal[key], w),
                                    composite_score(panel[key], w)))
                    except JuryError:
                        continue
                pts.sort()
                out.append({"composite": name, "fold": fold, "n": len(pts),
                            "raw": [p[0] for p in pts], "calibrated": [p[1] for p in pts],
                            "panel": [p[2] for p in pts]})
        self.plots["fig6_calibrated_composites"] = out

    def win_rates(self) -> None:
        if not self.has_rescore or not self.jury_records:
            raise EmptySampleError("win rates need re-score panel and jury records")
        t = Table("table5_win_rates", "Bootstrap win rate of the jury over the re-score panel",
                  [Column("metric"), Column("score"), Column("phase"), Column("win_pct", "pct"), Column("delta", "f2")])
        phases = [("before", JURY_EVALUATOR, self.scored)]
        if self.cal_jury:
            phases.append(("after", CALIBRATED_JURY, self.cal_scored))
        for metric in ("offset", "rmse", "spearman", "kappa"):
            for dim in DIMENSIONS:
                try:
                    rs = self.pairs(self.rescore, dim)
                except _SOFT_ERRORS:
                    continue
                keys = set(zip(rs.case_ids, rs.agent_ids))
                for phase, ev, recs in phases:
                    try:
                        jp = join_pairs(recs, self.primary, ev, dim)
                        mask = np.array([k in keys for k in zip(jp.case_ids, jp.agent_ids)])
                        jp = jp.subset(mask)
                        shared = set(zip(jp.case_ids, jp.agent_ids))
                        rsub = rs.subset(np.array([k in shared for k in zip(rs.case_ids, rs.agent_ids)]))
                        wr = bootstrap_win_rate(jp, rsub, metric, self.spec)
                    except _SOFT_ERRORS as exc:
                        self.notes.append(f"table5: {metric}/{dim.label}/{phase} omitted ({exc})")
                        continue
                    t.add(metric, dim.label, phase, wr.win_pct, wr.delta,
                          operation="bootstrap_win_rate", n=len(jp), seed=self.seed)
        self.tables[t.name] = t

    def ranking(self) -> None:
        rk = self.cfg.ranking
        weights = NAMED_WEIGHTS[rk.weights]
        spec = BootstrapSpec(self.cfg.bootstrap.n_resamples, rk.level, self.seed)
        phases = [("before", self.scored, [self.primary] + list(self.judges) + ([JURY_EVALUATOR] if self.jury_records else []))]
        if self.cal_jury:
            phases.append(("after", self.cal_scored, [self.primary] + list(self.judges) + [CALIBRATED_JURY]))
        labels = self.agent_labels()
        rankable = {r.agent_id for r in self.records if r.evaluator == self.primary} - set(rk.exclude)
        top_k = min(rk.top_k, len(rankable))
        if top_k < rk.top_k:
            self.notes.append(f"ranking: top_k reduced from {rk.top_k} to {top_k} available agents")
        t = Table("fig7_ranking_tau", "Kendall tau of each evaluator's ranking versus the primary panel",
                  [Column("evaluator"), Column("phase"), Column("top_k", "int"), Column("kendall_tau", "f2"),
                   Column("tau_note")])
        plot = []
        for phase, recs, evs in phases:
            for ev in evs:
                try:
                    r = rank_agents(recs, ev, weights, top_k, spec, reference=self.primary, exclude=rk.exclude)
                except (_SOFT_ERRORS + (ValueError,)) as exc:
                    self.notes.append(f"ranking: {ev.name}/{phase} omitted ({exc})")
                    continue
                t.add(ev.name, phase, r.top_k, r.tau, r.tau_error or "",
                      operation="rank_agents", n=sum(r.counts.values()), seed=self.seed)
                plot.append({
                    "evaluator": ev.name, "phase": phase, "weights": rk.weights, "level": r.level,
                    "order": [labels[a] for a in r.agents],
                    "reference_order": [labels[a] for a in r.reference_order],
                    "means": {labels[a]: r.means[a] for a in r.agents},
                    "intervals": {labels[a]: list(r.intervals[a]) for a in r.agents},
                    "counts": {labels[a]: r.counts[a] for a in r.agents},
                    "kendall_tau": r.tau,
                })
        self.tables[t.name] = t
        self.plots["fig8_ranking_intervals"] = plot

    def disagreement(self) -> None:
        if not self.jury_records:
            raise EmptySampleError("no jury records")
        cases, safety, disagree = ward_disagreement_data(self.scored, JURY_EVALUATOR, self.cfg.ward_agent)
        if not cases:
            raise EmptySampleError("no ward answers with panel agreement labels and jury safety scores")
        curve = disagreement_curve(safety, disagree)

        def kde(c):
            return None if c is None else {"bandwidth": c.bandwidth, "n": c.n, "grid": c.grid.tolist(),
                                           "density": c.density.tolist()}

        self.plots["fig5_disagreement"] = {
            "n": len(cases), "edges": list(curve.edges), "centers": curve.centers.tolist(),
            "counts": curve.counts.tolist(), "disagreements": curve.disagreements.tolist(),
            "probability": [None if math.isnan(p) else p for p in curve.probability.tolist()],
            "pearson_r": curve.pearson_r, "r_note": curve.r_error,
            "linear_fit": {"slope": curve.slope, "intercept": curve.intercept},
            "n_agree": curve.n_agree, "n_disagree": curve.n_disagree,
            "kde_agree": kde(curve.kde_agree), "kde_disagree": kde(curve.kde_disagree),
        }

    def bias(self) -> None:
        t = Table("tableA2_same_provider_bias", "Same-provider scoring bias (mixed effects)",
                  [Column("score"), Column("beta", "f3"), Column("std_error", "f3"), Column("ci95_lo", "f3"),
                   Column("ci95_hi", "f3"), Column("case_var", "f2"), Column("residual_var", "f2"),
                   Column("n_same", "int"), Column("n_cases", "int")])
        judge_recs = [r for r in self.records if r.evaluator in self.judges]
        for dim in DIMENSIONS:
            try:
                est = same_provider_bias(judge_recs, dim, exclude_agents=(self.cfg.ward_agent,))
            except _SOFT_ERRORS as exc:
                self.notes.append(f"tableA2: {dim.label} omitted ({exc})")
                continue
            t.add(dim.label, est.beta, est.std_error, est.ci95[0], est.ci95[1], est.case_variance,
                  est.residual_variance, est.n_same, est.n_cases,
                  operation="same_provider_bias(REML)", n=est.n_obs, seed=None)
        if not t.rows:
            raise EmptySampleError("no same-provider observations")
        self.tables[t.name] = t

    def _anon_key(self, key: str) -> str:
        case, _, agent = key.partition("/")
        if not self.cfg.report.anonymize:
            return key
        return f"{case}/{self.agent_labels().get(agent, agent)}"

    def agent_labels(self) -> dict[str, str]:
        if self._labels is None:
            agents = sorted({r.agent_id for r in self.records if r.evaluator == self.primary})
            if self.cfg.report.anonymize:
                self._labels = anonymize(agents, self.cfg.report.salt, keep=(self.cfg.ward_agent,))
            else:
                self._labels = {a: a for a in agents}
        return self._labels

    def metadata(self) -> dict[str, Any]:
        cfg = self.cfg
        return {
            "package_version": __version__,
            "corpus_sha256": self.corpus_hash,
            "corpus_records": len(self.all_records),
            "split": None if cfg.split is None else cfg.split.value,
            "seeds": {"bootstrap": self.seed, "calibration_folds": cfg.calibration_seed, "ranking": self.seed},
            "rng": RNG_NAME,
            "kernel_backend": kernels.BACKEND,
            "ci_method": CI_METHOD,
            "bootstrap": {"n_resamples": cfg.bootstrap.n_resamples, "level": cfg.bootstrap.level,
                          "plot_level": cfg.bootstrap.plot_level, "unit": "case"},
            "calibration": {"folds": cfg.calibration.folds},
            "ranking": {"top_k": cfg.ranking.top_k, "level": cfg.ranking.level, "weights": cfg.ranking.weights},
            "judges": [j.name for j in self.judges],
            "anonymized_agents": cfg.report.anonymize,
            "decisions": list(DECISIONS),
            "notes": list(self.notes),
        }


ANALYSES = (
    "counts", "metrics", "distributions", "severe", "stability", "calibration",
    "win_rates", "ranking", "disagreement", "bias",
)


def run_pipeline(
    cfg: PipelineConfig,
    out_dir: str | Path | None = None,
    *,
    analyses: Sequence[str] | None = None,
    run_judges: bool = True,
    http_client=None,
) -> ReportBundle:
    """ingest -> judge -> metrics -> calibration -> analyses, optionally writing ``out_dir``.

    ``analyses`` restricts the analysis stages (default: all of
    :data:`ANALYSES`).  Output is written to a temporary sibling directory
    and swapped in only after every stage has succeeded, so a failed run
    leaves a previous report untouched.
    """
    wanted = ANALYSES if analyses is None else tuple(analyses)
    unknown = set(wanted) - set(ANALYSES)
    if unknown:
        raise ValueError(f"unknown analyses: {sorted(unknown)}")
    p = _Pipeline(cfg, http_client)
    parent = Path(out_dir).resolve().parent if out_dir is not None else None
    if parent is not None:
        parent.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix=".llm-jury-", dir=parent))
    try:
        p.stage("ingest", p.ingest, soft=False)
        if run_judges:
            p.stage("judge", lambda: p.judge(work), soft=False)
        else:
            p.judge_records = []
        p.stage("aggregate", p.assemble, soft=False)
        steps = {
            "counts": p.counts_table, "metrics": p.agreement, "distributions": p.distributions,
            "severe": p.severe, "stability": p.stability, "calibration": p.calibrate,
            "win_rates": p.win_rates, "ranking": p.ranking, "disagreement": p.disagreement, "bias": p.bias,
        }
        for name in ANALYSES:
            if name in wanted:
                p.stage(name, steps[name])
        bundle = ReportBundle(p.tables, p.plots, p.metadata(), list(p.notes), p.judge_records)
        if out_dir is not None:
            p.stage("report", lambda: write_bundle(bundle, work, cfg.report.formats), soft=False)
            _swap_in(work, Path(out_dir))
        return bundle
    finally:
        if work.exists():
            shutil.rmtree(work, ignore_errors=True)


def _swap_in(src: Path, dest: Path) -> None:
    backup = None
    if dest.exists():
        backup = dest.with_name(f".{dest.name}.old-{os.getpid()}")
        os.replace(dest, backup)
    os.replace(src, dest)
    if backup is not None:
        shutil.rmtree(backup, ignore_errors=True)


# ---------------------------------------------------------------- emission

def table_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    w.writerows(table.formatted())
    return buf.getvalue()


def table_markdown(table: Table) -> str:
    head = table.header
    lines = [f"# {table.title}", "", "| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(row) + " |" for row in table.formatted()]
    return "\n".join(lines) + "\n"


def emit_tables(bundle: ReportBundle, fmt: str, out_dir: str | Path) -> list[Path]:
    """One file per table; omitted analyses are listed in ``NOTES.md``."""
    if fmt not in ("csv", "markdown"):
        raise ValueError("fmt must be 'csv' or 'markdown'")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext, render = ("csv", table_csv) if fmt == "csv" else ("md", table_markdown)
    paths = []
    for name in sorted(bundle.tables):
        path = out / f"{name}.{ext}"
        path.write_text(render(bundle.tables[name]), encoding="utf-8")
        paths.append(path)
    return paths


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_bundle(bundle: ReportBundle, out_dir: str | Path, formats: Sequence[str] = ("csv", "markdown")) -> None:
    out = Path(out_dir)
    for fmt in formats:
        emit_tables(bundle, fmt, out / "tables")
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    for name in sorted(bundle.plots):
        (plots / f"{name}.json").write_text(_json(bundle.plots[name]), encoding="utf-8")
    (out / "metadata.json").write_text(_json(bundle.metadata), encoding="utf-8")
    notes = ["# Notes", ""] + [f"- {n}" for n in bundle.notes] if bundle.notes else ["# Notes", "", "none"]
    (out / "NOTES.md").write_text("\n".join(notes) + "\n", encoding="utf-8")
    if bundle.judge_records:
        write_records(bundle.judge_records, out / "judge_records.jsonl")
