"""Command-line interface: ``llm-jury <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from contextlib import ExitStack
from dataclasses import replace
from pathlib import Path

from . import __version__
from .calibration import calibrate_judges
from .config import PipelineConfig, load_config
from .errors import ConfigError, JuryError
from .jury.prompt import build_prompts
from .jury.runner import JuryRunSpec, aggregate_jury, run_judge
from .jury.stub import StubJudgeServer, load_canned
from .records import EvaluatorId, EvaluatorKind, ingest_records, read_answers, write_records
from .report import ANALYSES, STUB_KEY_ENV, run_pipeline

_STAGES_FOR = {
    "metrics": ("counts", "metrics", "distributions", "severe"),
    "rank": ("calibration", "ranking"),
    "bias": ("bias",),
    "stability": ("stability",),
    "report": ANALYSES,
}


def _pipeline_config(args) -> PipelineConfig:
    if args.config:
        cfg = load_config(args.config)
    elif getattr(args, "corpus", None):
        cfg = PipelineConfig(corpus=Path(args.corpus))
    else:
        raise ConfigError("pass --config or --corpus", "corpus")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_ingest(args) -> int:
    records = ingest_records(args.corpus, schema_version=args.schema_version)
    by_eval = Counter(r.evaluator.name for r in records)
    summary = {
        "records": len(records),
        "failures": sum(1 for r in records if not r.ok),
        "cases": len({r.case_id for r in records}),
        "agents": len({r.agent_id for r in records}),
        "by_evaluator": dict(sorted(by_eval.items())),
    }
    text = json.dumps(summary, indent=1, sort_keys=True)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ingest_summary.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_judge(args) -> int:
    spec = JuryRunSpec.load(args.spec)
    if args.repetitions is not None:
        spec = spec.with_repetitions(args.repetitions)
    if args.fail_on_error:
        spec = JuryRunSpec(**{**spec.__dict__, "fail_on_error": True})
    bundles = read_answers(args.corpus)
    prompts = build_prompts(bundles, args.reference_agent, spec.prompt_template_id)
    audit = Path(args.audit) if args.audit else Path(args.out).with_suffix(".audit.jsonl")
    with ExitStack() as stack:
        if args.stub_responses:
            os.environ.setdefault(STUB_KEY_ENV, "stub")
            url = stack.enter_context(StubJudgeServer(load_canned(args.stub_responses))).url
            spec = JuryRunSpec(**{**spec.__dict__, "judges": tuple(
                replace(j, endpoint=url, auth_env=STUB_KEY_ENV) for j in spec.judges)})
        records = run_judge(spec, prompts, audit)
    if args.aggregate:
        records = records + aggregate_jury(records, spec.evaluators, on_missing="skip")
    write_records(records, args.out)
    failed = sum(1 for r in records if not r.ok)
    print(f"wrote {len(records)} records ({failed} failures) to {args.out}; audit log {audit}")
    return 0


def cmd_calibrate(args) -> int:
    records = ingest_records(args.corpus)
    primary = EvaluatorId.primary()
    judges = sorted(
        {r.evaluator for r in records if r.evaluator.kind is EvaluatorKind.JUDGE_MODEL and not r.derived},
        key=EvaluatorId.sort_key,
    )
    if not judges:
        raise ConfigError("corpus has no judge records to calibrate", "corpus")
    seed = 0 if args.seed is None else args.seed
    cal = calibrate_judges(records, primary, judges, k=args.folds, seed=seed)
    out = Path(args.out)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for (judge, dim), res in sorted(cal.results.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].value)):
        stem = f"{judge.model_id}.{dim.value}".replace("/", "_")
        res.full_map.save(maps_dir / f"{stem}.full.json")
        for f, m in enumerate(res.fold_maps):
            m.save(maps_dir / f"{stem}.fold{f}.json")
        index.append({"judge": judge.name, "score": dim.label, "n": res.full_map.n, "file": f"{stem}.full.json"})
    folds = {c: f for c, f in sorted(cal.folds.folds.items())}
    (out / "folds.json").write_text(
        json.dumps({"k": args.folds, "seed": seed, "folds": folds}, indent=1) + "\n", encoding="utf-8")
    (out / "maps.json").write_text(json.dumps(index, indent=1) + "\n", encoding="utf-8")
    judge_recs = [r for r in records if r.evaluator in judges and r.ok]
    write_records(cal.calibrate_records(judge_recs, mode="oof"), out / "calibrated_oof.jsonl")
    write_records(cal.calibrate_records(judge_recs, mode="full"), out / "calibrated_full.jsonl")
    print(f"fitted {len(index)} maps over {len(folds)} cases into {out}")
    return 0


def _analysis_cmd(name: str):
    def run(args) -> int:
        cfg = _pipeline_config(args)
        out = Path(args.out_dir)
        bundle = run_pipeline(cfg, out, analyses=_STAGES_FOR[name], run_judges=(name == "report"))
        print(f"wrote {len(bundle.tables)} tables and {len(bundle.plots)} plot files to {out}")
        for note in bundle.notes:
            print(f"note: {note}")
        return 0

    return run


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Subcommand copies use SUPPRESS so they do not clobber flags given before the subcommand.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="pipeline config (YAML, schema_version 1)")
    parser.add_argument("--seed", type=int, default=d(None), help="override the seed in the config")
    parser.add_argument("--out-dir", default=d("report"), help="output directory (default: ./report)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    parser = argparse.ArgumentParser(prog="llm-jury", description=__doc__)
    _global_flags(parser, suppress=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate an evaluation-record corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema-version", default="1")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("judge", parents=[common], help="score answers with the judge panel")
    p.add_argument("--spec", required=True, help="jury run spec (YAML)")
    p.add_argument("--corpus", required=True, help="answer bundles (JSONL)")
    p.add_argument("--out", required=True, help="output records (JSONL)")
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--reference-agent", default="panel")
    p.add_argument("--audit", help="audit log path (default: <out>.audit.jsonl)")
    p.add_argument("--stub-responses", help="serve judges from canned replies on a local stub")
    p.add_argument("--aggregate", action="store_true", help="also emit LLM-Jury mean records")
    p.add_argument("--fail-on-error", action="store_true", help="fail the run if any request fails")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("calibrate", parents=[common], help="fit isotonic calibration maps")
    p.add_argument("--corpus", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    helps = {
        "metrics": "offset/RMSE, rho/kappa and severe-error tables",
        "rank": "agent rankings before and after calibration",
        "bias": "same-provider bias regression",
        "stability": "repeated-inference stability table",
        "report": "full pipeline: all tables and plot data",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name != "report":
            p.add_argument("--corpus", help="record corpus (when no --config is given)")
        p.set_defaults(func=_analysis_cmd(name))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (JuryError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
