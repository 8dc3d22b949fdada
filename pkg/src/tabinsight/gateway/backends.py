"""Backends answer requests: an OpenAI-compatible HTTP client and a scripted
fixture player for offline runs."""

from __future__ import annotations

import hashlib
import importlib
import json
import os
import threading
from dataclasses import dataclass
from typing import Callable

import httpx

from ..errors import (
    CacheMissInReplayMode,
    ConfigurationError,
    MalformedResponseError,
    RateLimitedError,
    TransportError,
)
from ..text import tokenize
from .profiles import BackendProfile, chat_fingerprint, embed_fingerprint


@dataclass(frozen=True)
class Completion:
    text: str
    usage: dict | None = None


class Backend:
    network = False

    def complete(self, profile: BackendProfile, messages: list[dict]) -> Completion:
        raise NotImplementedError

    def embed(self, profile: BackendProfile, text: str) -> list[float]:
        raise NotImplementedError


class HTTPBackend(Backend):
    """OpenAI-compatible ``/chat/completions`` and ``/embeddings`` over HTTP."""

    network = True

    def __init__(self, client: httpx.Client | None = None, timeout: float = 120.0):
        self._client = client or httpx.Client(timeout=timeout)

    def _post(self, profile: BackendProfile, path: str, payload: dict) -> dict:
        if not profile.endpoint_url:
            raise ConfigurationError(f"profile {profile.role!r} has no endpoint_url")
        url = profile.endpoint_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(profile.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimitedError(f"rate limited by {url}")
        if resp.status_code >= 500:
            raise TransportError(f"{url} returned {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"{url} returned {resp.status_code}: {resp.text[:200]}", transient=False)
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"non-JSON body from {url}") from exc

    def complete(self, profile, messages):
        body = self._post(
            profile,
            "/chat/completions",
            {
                "model": profile.model_name,
                "messages": messages,
                "temperature": profile.temperature,
                "max_tokens": profile.max_tokens,
            },
        )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError("response lacks choices[0].message.content") from exc
        if not isinstance(text, str):
            raise MalformedResponseError("completion content is not text")
        return Completion(text, body.get("usage"))

    def embed(self, profile, text):
        body = self._post(profile, "/embeddings", {"model": profile.model_name, "input": text})
        try:
            vec = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError("response lacks data[0].embedding") from exc
        if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
            raise MalformedResponseError("embedding is not a list of numbers")
        return [float(x) for x in vec]


# -- scripted ------------------------------------------------------------------


def prompt_text(messages: list[dict]) -> str:
    return "\n".join(m["content"] for m in messages)


def section(prompt: str, label: str, next_labels=("Summary:", "Response:", "Question:", "Questions:")) -> str:
    """Text following ``label`` up to the next known label (or the end)."""
    start = prompt.rfind(label)
    if start < 0:
        return ""
    start += len(label)
    end = len(prompt)
    for nxt in next_labels:
        j = prompt.find(nxt, start)
        if j >= 0:
            end = min(end, j)
    return prompt[start:end].strip()


def echo_responder(messages):
    return messages[-1]["content"]


def concat_knowledge_responder(messages):
    """Concatenate the insight bullets of the prompt's knowledge section."""
    block = section(prompt_text(messages), "Knowledge:", ("Summary:",))
    bullets = [line[2:].strip() for line in block.splitlines() if line.startswith("- ")]
    return " ".join(bullets)


def entail_all_responder(messages):
    return "entailed"


def hash_embed(text: str, dim: int = 64) -> list[float]:
    """Deterministic hashed bag-of-words vector."""
    vec = [0.0] * dim
    for tok in tokenize(text):
        h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "big")
        vec[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    if not any(vec):
        vec[0] = 1.0
    return vec


RESPONDERS: dict[str, Callable] = {
    "echo": echo_responder,
    "concat-knowledge": concat_knowledge_responder,
    "entail-all": entail_all_responder,
}

EMBEDDERS: dict[str, Callable] = {
    "hash-embed": hash_embed,
}


def resolve_callable(name, registry: dict) -> Callable | None:
    """A registry name, a ``module:function`` path, or a callable."""
    if name is None or callable(name):
        return name
    if name in registry:
        return registry[name]
    if ":" in name:
        mod, _, attr = name.partition(":")
        try:
            return getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigurationError(f"cannot import responder {name!r}: {exc}") from exc
    raise ConfigurationError(f"unknown responder {name!r}; built-ins: {sorted(registry)}")


class ScriptedBackend(Backend):
    """Answers from fixtures; never touches the network.

    Lookup order for chat: exact fingerprint, then ``contains`` rules (all
    substrings must occur in the concatenated prompt, first rule wins), then
    the responder callable.  A request nothing answers raises
    :class:`CacheMissInReplayMode`.
    """

    def __init__(self, fixtures=None, rules=None, responder=None, embedder=None, embeddings=None):
        self.fixtures = dict(fixtures or {})
        self.rules = [(tuple(r["contains"]) if not isinstance(r["contains"], str) else (r["contains"],), r["completion"]) for r in (rules or [])]
        self.responder = resolve_callable(responder, RESPONDERS)
        self.embedder = resolve_callable(embedder, EMBEDDERS)
        self.embeddings = dict(embeddings or {})
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, responder=None, embedder=None) -> "ScriptedBackend":
        """Load a fixture JSONL file.

        Each line is one of ``{"fingerprint", "completion"}``,
        ``{"contains": str | [str], "completion"}`` or
        ``{"text", "embedding"}``.
        """
        fixtures, rules, embeddings = {}, [], {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                for n, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    if "fingerprint" in rec:
                        fixtures[rec["fingerprint"]] = rec["completion"]
                    elif "contains" in rec:
                        rules.append(rec)
                    elif "text" in rec and "embedding" in rec:
                        embeddings[rec["text"]] = rec["embedding"]
                    else:
                        raise ConfigurationError(f"{path}:{n}: unrecognised fixture record")
        return cls(fixtures, rules, responder, embedder, embeddings)

    def _count(self):
        with self._lock:
            self.calls += 1

    def complete(self, profile, messages):
        self._count()
        fp = chat_fingerprint(profile, messages)
        if fp in self.fixtures:
            return Completion(self.fixtures[fp])
        if self.rules:
            prompt = prompt_text(messages)
            for needles, completion in self.rules:
                if all(n in prompt for n in needles):
                    return Completion(completion)
        if self.responder is not None:
            return Completion(self.responder(messages))
        raise CacheMissInReplayMode(fp)

    def embed(self, profile, text):
        self._count()
        fp = embed_fingerprint(profile, text)
        if fp in self.fixtures:
            return [float(x) for x in self.fixtures[fp]]
        if text in self.embeddings:
            return [float(x) for x in self.embeddings[text]]
        if self.embedder is not None:
            return [float(x) for x in self.embedder(text)]
        raise CacheMissInReplayMode(fp)
