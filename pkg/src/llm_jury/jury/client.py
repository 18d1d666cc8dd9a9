"""HTTP+JSON chat-completion clients for judge providers."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

import httpx

from ..errors import JudgeAuthError
from ..records import EvaluatorId

API_STYLES = ("openai", "anthropic", "gemini")


class TransientJudgeError(RuntimeError):
    """Rate limit, server error or transport failure; worth retrying."""


class PermanentJudgeError(RuntimeError):
    """Client error other than auth; retrying will not help."""


@dataclass(frozen=True)
class JudgeConfig:
    model_id: str
    provider: str
    endpoint: str
    auth_env: str
    api_style: str = "openai"
    # Extra request fields. Empty means provider-default sampling settings.
    params: dict[str, Any] = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.api_style not in API_STYLES:
            raise ValueError(f"api_style must be one of {API_STYLES}")

    @property
    def evaluator(self) -> EvaluatorId:
        return EvaluatorId.judge(self.model_id, self.provider)

    @classmethod
    def from_dict(cls, data: dict) -> "JudgeConfig":
        return cls(
            model_id=data["model_id"],
            provider=data["provider"],
            endpoint=data["endpoint"],
            auth_env=data["auth_env"],
            api_style=data.get("api_style", "openai"),
            params=dict(data.get("params") or {}),
        )

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "provider": self.provider,
            "endpoint": self.endpoint,
            "auth_env": self.auth_env,
            "api_style": self.api_style,
            "params": dict(self.params),
        }

    def resolve_key(self) -> str:
        key = os.environ.get(self.auth_env)
        if not key:
            raise JudgeAuthError(f"{self.model_id}: environment variable {self.auth_env} is not set")
        return key


def request_payload(judge: JudgeConfig, prompt: str) -> dict:
    messages = [{"role": "user", "content": prompt}]
    if judge.api_style == "gemini":
        body: dict[str, Any] = {"contents": [{"role": "user", "parts": [{"text": prompt}]}]}
    else:
        body = {"model": judge.model_id, "messages": messages}
    body.update(judge.params)
    return body


def request_headers(judge: JudgeConfig, key: str) -> dict[str, str]:
    if judge.api_style == "anthropic":
        return {"x-api-key": key, "anthropic-version": "2023-06-01", "content-type": "application/json"}
    if judge.api_style == "gemini":
        return {"x-goog-api-key": key, "content-type": "application/json"}
    return {"authorization": f"Bearer {key}", "content-type": "application/json"}


def extract_text(body: dict) -> str:
    """Pull the reply text out of any of the supported response shapes."""
    if "choices" in body:
        msg = body["choices"][0].get("message") or {}
        content = msg.get("content")
        if isinstance(content, list):
            return "".join(part.get("text", "") for part in content if isinstance(part, dict))
        return content or ""
    if "content" in body and isinstance(body["content"], list):
        return "".join(p.get("text", "") for p in body["content"] if p.get("type", "text") == "text")
    if "candidates" in body:
        parts = body["candidates"][0].get("content", {}).get("parts", [])
        return "".join(p.get("text", "") for p in parts)
    raise PermanentJudgeError("unrecognised response shape")


@dataclass
class HttpResult:
    status: int
    body_text: str
    text: str | None


def call_judge(client: httpx.Client, judge: JudgeConfig, key: str, payload: dict, timeout: float) -> HttpResult:
    try:
        resp = client.post(judge.endpoint, json=payload, headers=request_headers(judge, key), timeout=timeout)
    except httpx.TransportError as exc:
        raise TransientJudgeError(f"transport error: {exc}") from exc
    body_text = resp.text
    if resp.status_code in (401, 403):
        raise JudgeAuthError(f"{judge.model_id}: HTTP {resp.status_code}")
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientJudgeError(f"HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise PermanentJudgeError(f"HTTP {resp.status_code}: {body_text[:200]}")
    try:
        text = extract_text(json.loads(body_text))
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise PermanentJudgeError(f"bad response body: {exc}") from exc
    return HttpResult(resp.status_code, body_text, text)
