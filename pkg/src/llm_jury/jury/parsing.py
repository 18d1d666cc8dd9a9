"""Strict parsing of the fenced score block judges are asked to emit."""

from __future__ import annotations

import re

from ..errors import ScoreParseError, ScoreRangeError
from ..records import ScoreDimension, safety_from_risk

_BLOCK_RE = re.compile(r"```[ \t]*scores[ \t]*\n(.*?)```", re.IGNORECASE | re.DOTALL)
_LINE_RE = re.compile(r"^\s*(dx|ddx|reasoning|risk)\s*[:=]\s*(\S.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_INT_RE = re.compile(r"^[+-]?\d+$")
_NUM_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")
_NA = {"n/a", "na", "none", "null", "-"}

_LABELS = {"dx": "Dx", "ddx": "DDx", "reasoning": "Reasoning", "risk": "Risk"}


def _value(label: str, text: str, allow_na: bool) -> int | None:
    text = text.strip().strip("*`").strip()
    if allow_na and text.lower() in _NA:
        return None
    if _INT_RE.match(text):
        v = int(text)
        if not 1 <= v <= 5:
            raise ScoreRangeError(f"{label}={v} outside 1..5", dimension=label)
        return v
    if _NUM_RE.match(text):
        raise ScoreRangeError(f"{label}={text} is not an integer score", dimension=label)
    raise ScoreParseError(f"{label} value {text!r} is not a score", dimension=label)


def parse_scores(raw_text: str, require_reasoning: bool = True) -> dict[ScoreDimension, int | None]:
    """Extract Dx, DDx, Reasoning and Risk from the last ```scores block.

    Risk is converted to Safety (``6 - risk``).  When ``require_reasoning`` is
    false, a missing or N/A Reasoning value maps to ``None``.
    """
    blocks = _BLOCK_RE.findall(raw_text or "")
    if not blocks:
        raise ScoreParseError("no ```scores block found")
    found: dict[str, str] = {}
    for label, value in _LINE_RE.findall(blocks[-1]):
        key = label.lower()
        if key in found:
            raise ScoreParseError(f"{_LABELS[key]} given more than once", dimension=_LABELS[key])
        found[key] = value
    for key in ("dx", "ddx", "risk") + (("reasoning",) if require_reasoning else ()):
        if key not in found:
            raise ScoreParseError(f"missing score {_LABELS[key]}", dimension=_LABELS[key])
    # Reasoning is discarded, not validated, when the tested answer has none.
    reasoning = _value("Reasoning", found["reasoning"], allow_na=False) if require_reasoning else None
    return {
        ScoreDimension.DX: _value("Dx", found["dx"], False),
        ScoreDimension.DDX: _value("DDx", found["ddx"], False),
        ScoreDimension.REASONING: reasoning,
        ScoreDimension.SAFETY: safety_from_risk(_value("Risk", found["risk"], False)),
    }


def format_score_block(dx: int, ddx: int, reasoning: int | None, risk: int) -> str:
    r = "N/A" if reasoning is None else str(reasoning)
    return f"```scores\nDx: {dx}\nDDx: {ddx}\nReasoning: {r}\nRisk: {risk}\n```"
