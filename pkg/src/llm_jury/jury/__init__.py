from .client import JudgeConfig
from .parsing import format_score_block, parse_scores
from .prompt import DEFAULT_TEMPLATE, JudgePrompt, build_prompt, build_prompts
from .runner import AuditLog, JudgeResponse, JuryRunSpec, aggregate_jury, run_judge, stability_run

__all__ = [
    "AuditLog",
    "DEFAULT_TEMPLATE",
    "JudgeConfig",
    "JudgePrompt",
    "JudgeResponse",
    "JuryRunSpec",
    "aggregate_jury",
    "build_prompt",
    "build_prompts",
    "format_score_block",
    "parse_scores",
    "run_judge",
    "stability_run",
]
