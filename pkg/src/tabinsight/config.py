"""Pipeline configuration (YAML or JSON) and gateway construction."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigurationError, RoleNotConfiguredError
from .gateway import (
    BackendProfile,
    Gateway,
    RequestCache,
    RequestLog,
    RetryPolicy,
    ScriptedBackend,
)
from .gateway.profiles import ROLES
from .metrics import METEOR_NAME

Role = Literal["teacher", "summarizer", "reasoner", "critic", "embedder", "judge"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RetryConfig(_Strict):
    max_attempts: int = Field(3, ge=1)
    base_backoff_ms: int = Field(500, ge=0)


class ProfileConfig(_Strict):
    backend: Literal["http", "scripted"] = "http"
    endpoint_url: str = ""
    model_name: str = "scripted"
    temperature: Optional[float] = Field(None, ge=0)
    max_tokens: int = Field(1024, ge=1)
    retry: RetryConfig = RetryConfig()
    concurrency_limit: int = Field(4, ge=1)
    api_key_env: Optional[str] = None
    # scripted backend only
    fixtures: Optional[str] = None
    responder: Optional[str] = None
    embedder: Optional[str] = None


class EvalSection(_Strict):
    surface: list[Literal["rouge_l", "bleu", "meteor-basic"]] = ["rouge_l", "bleu", METEOR_NAME]
    judge: list[Literal["geval", "gpt4_acc"]] = []
    pairwise: list[Literal["natural", "comprehensive", "informative"]] = []


class Config(_Strict):
    run_id: str = "default"
    run_root: str = "runs"
    seed: int = 0
    k: int = Field(3, ge=1)
    q_init: int = Field(5, ge=1)
    sim_backend: Literal["embedding-cosine", "token-f1"] = "embedding-cosine"
    prompt_dir: Optional[str] = None
    cache: Literal["off", "read-write", "replay"] = "read-write"
    api_key_env: str = "OPENAI_API_KEY"
    max_table_tokens: Optional[int] = Field(8192, ge=1)
    gate_evidence: bool = False
    max_questions: Optional[int] = Field(None, ge=1)
    max_workers: int = Field(8, ge=1)
    eval: EvalSection = EvalSection()
    profiles: dict[Role, ProfileConfig] = {}

    # directory the config file lives in; relative paths resolve against it
    base_dir: Optional[str] = Field(None, exclude=True)

    def resolve(self, path: str | None) -> str | None:
        if path is None:
            return None
        p = Path(path)
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return str(p)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def profile(self, role: str) -> BackendProfile:
        if role not in self.profiles:
            raise RoleNotConfiguredError(role)
        p = self.profiles[role]
        return BackendProfile(
            role=role,
            model_name=p.model_name,
            endpoint_url=p.endpoint_url,
            temperature=p.temperature,
            max_tokens=p.max_tokens,
            retry=RetryPolicy(p.retry.max_attempts, p.retry.base_backoff_ms),
            concurrency_limit=p.concurrency_limit,
            api_key_env=p.api_key_env or self.api_key_env,
        )

    def check_roles(self, roles) -> None:
        """Fail before any call when a needed role or its API key is missing."""
        for role in roles:
            if role not in self.profiles:
                raise RoleNotConfiguredError(role)
            p = self.profiles[role]
            if p.backend == "http":
                if not p.endpoint_url:
                    raise ConfigurationError(f"profile {role!r} needs endpoint_url")
                if self.cache != "replay":
                    env = p.api_key_env or self.api_key_env
                    if not os.environ.get(env):
                        raise ConfigurationError(f"profile {role!r}: environment variable {env} is not set")

    def build_gateway(self, roles, run_dir: Path | None = None, sleep=None) -> Gateway:
        self.check_roles(roles)
        profiles, backends = [], {}
        for role in roles:
            profiles.append(self.profile(role))
            p = self.profiles[role]
            if p.backend == "scripted":
                backends[role] = ScriptedBackend.from_file(self.resolve(p.fixtures), p.responder, p.embedder)
        cache = None
        if self.cache != "off":
            cache = RequestCache(run_dir / "cache.jsonl" if run_dir else None)
        log = RequestLog(run_dir / "requests.jsonl" if run_dir else None)
        kwargs = {"sleep": sleep} if sleep is not None else {}
        return Gateway(profiles, backends, cache=cache, log=log, replay=self.cache == "replay", **kwargs)


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def validate_config(data: dict, base_dir=None) -> Config:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping")
    try:
        cfg = Config.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError("invalid config: " + _format_errors(exc)) from None
    cfg.base_dir = str(base_dir) if base_dir else None
    if cfg.prompt_dir:
        cfg.prompt_dir = cfg.resolve(cfg.prompt_dir)
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    return validate_config(data, path.parent.resolve())


__all__ = ["Config", "ProfileConfig", "load_config", "validate_config", "ROLES"]
