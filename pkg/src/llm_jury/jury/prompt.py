"""Judge prompt construction.

Templates use ``str.format`` placeholders.  A template must reference every
answer-bundle field for both the reference and the tested answer; the only
optional slot is ``{patient_metadata}``, which has no default and must be
supplied on the tested bundle when the template uses it.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path

from ..errors import TemplateError
from ..records import AnswerBundle

BUNDLE_FIELDS = ("primary_dx", "secondary_dx", "differential_dx", "clinical_reasoning")
REQUIRED_PLACEHOLDERS = frozenset(f"{role}_{f}" for role in ("reference", "tested") for f in BUNDLE_FIELDS)
OPTIONAL_PLACEHOLDERS = frozenset({"case_id", "patient_metadata"})
NOT_PROVIDED = "not provided"

DEFAULT_TEMPLATE = """\
You are a senior clinician reviewing a diagnosis for case {case_id}.
Treat the REFERENCE answer as ground truth and score the TESTED answer.

REFERENCE
Primary diagnosis: {reference_primary_dx}
Secondary diagnoses: {reference_secondary_dx}
Differential diagnoses: {reference_differential_dx}
Clinical reasoning: {reference_clinical_reasoning}

TESTED
Primary diagnosis: {tested_primary_dx}
Secondary diagnoses: {tested_secondary_dx}
Differential diagnoses: {tested_differential_dx}
Clinical reasoning: {tested_clinical_reasoning}

Score each item on an integer scale from 1 to 5:
- Dx: agreement of the tested primary and secondary diagnoses with the reference (5 = equivalent).
- DDx: quality of the tested differential diagnoses relative to the reference (5 = equivalent).
- Reasoning: soundness of the tested clinical reasoning (5 = fully sound). Write N/A if the
  tested clinical reasoning is "not provided".
- Risk: negative treatment risk to the patient if treated according to the tested answer
  instead of the reference (1 = no additional risk, 5 = severe risk).

Explain briefly, then end your reply with exactly this block:
```scores
Dx: <1-5>
DDx: <1-5>
Reasoning: <1-5 or N/A>
Risk: <1-5>
```
"""

TEMPLATES = {"default-v1": DEFAULT_TEMPLATE}


@dataclass(frozen=True)
class JudgePrompt:
    case_id: str
    reference: AnswerBundle
    tested: AnswerBundle
    rubric_text: str
    template_id: str = "default-v1"

    @property
    def key(self) -> tuple[str, str]:
        return (self.case_id, self.tested.agent_id)

    @property
    def requires_reasoning(self) -> bool:
        return self.tested.clinical_reasoning is not None


def resolve_template(template_id: str) -> str:
    """Look up a named template, or read one from a file path."""
    if template_id in TEMPLATES:
        return TEMPLATES[template_id]
    path = Path(template_id)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    raise TemplateError(f"unknown prompt template {template_id!r}")


def template_fields(template: str) -> set[str]:
    try:
        return {name for _, name, _, _ in string.Formatter().parse(template) if name}
    except ValueError as exc:
        raise TemplateError(f"malformed template: {exc}") from exc


def check_template(template: str) -> set[str]:
    fields = template_fields(template)
    missing = REQUIRED_PLACEHOLDERS - fields
    if missing:
        raise TemplateError(f"template is missing placeholders: {sorted(missing)}")
    unknown = fields - REQUIRED_PLACEHOLDERS - OPTIONAL_PLACEHOLDERS
    if unknown:
        raise TemplateError(f"template has unknown placeholders: {sorted(unknown)}")
    return fields


def _fmt_list(items) -> str:
    return "; ".join(items) if items else "none"


def _bundle_values(role: str, bundle: AnswerBundle) -> dict[str, str]:
    return {
        f"{role}_primary_dx": bundle.primary_dx,
        f"{role}_secondary_dx": _fmt_list(bundle.secondary_dx),
        f"{role}_differential_dx": _fmt_list(bundle.differential_dx),
        f"{role}_clinical_reasoning": bundle.clinical_reasoning or NOT_PROVIDED,
    }


def build_prompt(
    reference: AnswerBundle,
    tested: AnswerBundle,
    template: str = DEFAULT_TEMPLATE,
    template_id: str = "default-v1",
) -> JudgePrompt:
    if reference.case_id != tested.case_id:
        raise ValueError(
            f"reference case {reference.case_id!r} does not match tested case {tested.case_id!r}"
        )
    fields = check_template(template)
    values = {"case_id": reference.case_id}
    values.update(_bundle_values("reference", reference))
    values.update(_bundle_values("tested", tested))
    if "patient_metadata" in fields:
        if tested.metadata is None:
            raise TemplateError("template uses {patient_metadata} but the tested bundle has none")
        values["patient_metadata"] = tested.metadata
    return JudgePrompt(reference.case_id, reference, tested, template.format(**values), template_id)


def build_prompts(
    bundles: list[AnswerBundle], reference_agent: str, template_id: str = "default-v1"
) -> list[JudgePrompt]:
    """Pair each tested bundle with its case's reference bundle.

    The reference bundle of a case is the one whose ``agent_id`` equals
    ``reference_agent``.  Prompts are returned sorted by (case, agent).
    """
    template = resolve_template(template_id)
    refs = {b.case_id: b for b in bundles if b.agent_id == reference_agent}
    prompts = []
    for b in sorted(bundles, key=lambda b: (b.case_id, b.agent_id)):
        if b.agent_id == reference_agent:
            continue
        if b.case_id not in refs:
            raise ValueError(f"case {b.case_id!r} has no reference answer from {reference_agent!r}")
        prompts.append(build_prompt(refs[b.case_id], b, template, template_id))
    return prompts
