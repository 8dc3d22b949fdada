from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

ROLES = ("teacher", "summarizer", "reasoner", "critic", "embedder", "judge")
CHAT_ROLES = ("teacher", "summarizer", "reasoner", "critic", "judge")

DEFAULT_TEMPERATURE = {
    "teacher": 0.7,
    "summarizer": 0.0,
    "reasoner": 0.0,
    "critic": 0.0,
    "judge": 0.0,
    "embedder": 0.0,
}


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: int = 500

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_backoff_ms < 0:
            raise ValueError("base_backoff_ms must be >= 0")

    def delay(self, attempt: int) -> float:
        """Seconds to wait after failed attempt number ``attempt`` (1-based)."""
        return self.base_backoff_ms * (2 ** (attempt - 1)) / 1000.0


@dataclass(frozen=True)
class BackendProfile:
    """Endpoint configuration for one model role."""

    role: str
    model_name: str = "scripted"
    endpoint_url: str = ""
    temperature: float | None = None
    max_tokens: int = 1024
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    concurrency_limit: int = 4
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if self.temperature is None:
            object.__setattr__(self, "temperature", DEFAULT_TEMPERATURE[self.role])
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def chat_fingerprint(profile: BackendProfile, messages: list[dict]) -> str:
    return _digest(
        {
            "kind": "chat",
            "role": profile.role,
            "model": profile.model_name,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": profile.temperature,
            "max_tokens": profile.max_tokens,
        }
    )


def embed_fingerprint(profile: BackendProfile, text: str) -> str:
    return _digest(
        {"kind": "embed", "role": profile.role, "model": profile.model_name, "input": text}
    )
