"""Regenerate the bundled toy corpus, answers and canned judge replies.

Run from the repository root: ``python3 tests/fixtures/build_fixtures.py``.
"""

import json
from pathlib import Path

import yaml

from llm_jury.records import write_records
from llm_jury.synthetic import fixture_corpus

HERE = Path(__file__).parent


def main() -> None:
    fx = fixture_corpus()
    write_records(fx.records, HERE / "panel_records.jsonl")
    with open(HERE / "answers.jsonl", "w", encoding="utf-8") as fh:
        for b in fx.answers:
            fh.write(json.dumps(b.to_dict(), sort_keys=True) + "\n")
    with open(HERE / "canned_responses.jsonl", "w", encoding="utf-8") as fh:
        for key in sorted(fx.canned):
            fh.write(json.dumps({"key": key, "responses": fx.canned[key]}) + "\n")
    spec = {
        "judges": [j.as_dict() for j in fx.judges],
        "prompt_template_id": "default-v1",
        "repetitions": 1,
        "max_parallel": 8,
        "per_provider_limit": 4,
        "retry_budget": 2,
        "backoff_base": 0.01,
    }
    (HERE / "jury_spec.yaml").write_text(yaml.safe_dump(spec, sort_keys=False), encoding="utf-8")
    config = {
        "schema_version": "1",
        "seed": 7,
        "corpus": "panel_records.jsonl",
        "answers": "answers.jsonl",
        "reference_agent": "panel",
        "ward_agent": "ward",
        "split": "Calibration",
        "jury": {
            "spec": "jury_spec.yaml",
            "stub_responses": "canned_responses.jsonl",
            "stability_cases": fx.stability_cases,
            "stability_agent": "ward",
            "stability_repetitions": 30,
        },
        "bootstrap": {"n_resamples": 1000, "level": 0.95, "plot_level": 0.68},
        "calibration": {"folds": 5},
        "ranking": {"top_k": 8, "level": 0.68, "weights": "S3", "exclude": ["ward"]},
        "report": {"formats": ["csv", "markdown"], "anonymize": True, "salt": "fixture"},
    }
    (HERE / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")


if __name__ == "__main__":
    main()
