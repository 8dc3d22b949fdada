from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from ..errors import (
    CacheMissInReplayMode,
    ConfigurationError,
    EmbedInputError,
    GatewayError,
    RoleNotConfiguredError,
    TransportError,
)
from .backends import Backend, HTTPBackend
from .profiles import CHAT_ROLES, BackendProfile, chat_fingerprint, embed_fingerprint
from .store import RequestCache, RequestLog

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatExchange:
    fingerprint: str
    messages: tuple
    completion: str
    usage: dict | None
    latency_ms: float
    source: str  # "backend" or "cache"


@dataclass(frozen=True)
class CriticVerdict:
    label: str
    confidence: float | None = None

    def __post_init__(self):
        if self.label not in ("entailed", "refuted"):
            raise ValueError(f"verdict label must be entailed or refuted, got {self.label!r}")


class Gateway:
    """Role-addressed access to chat, embedding and critic endpoints.

    Parameters
    ----------
    profiles
        One :class:`BackendProfile` per role (mapping or iterable).
    backends
        Optional role -> :class:`Backend` overrides; unspecified roles use a
        shared :class:`HTTPBackend`.
    cache
        A :class:`RequestCache`; identical requests are then answered once.
    log
        A :class:`RequestLog` receiving one entry per exchange.
    replay
        Serve exclusively from ``cache``; a miss raises
        :class:`CacheMissInReplayMode` and no backend is contacted.
    """

    def __init__(
        self,
        profiles: Mapping[str, BackendProfile] | Iterable[BackendProfile],
        backends: Mapping[str, Backend] | None = None,
        cache: RequestCache | None = None,
        log: RequestLog | None = None,
        replay: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if isinstance(profiles, Mapping):
            profiles = list(profiles.values())
        self.profiles: dict[str, BackendProfile] = {}
        for p in profiles:
            if p.role in self.profiles:
                raise ConfigurationError(f"more than one profile for role {p.role!r}")
            self.profiles[p.role] = p
        self.backends = dict(backends or {})
        self.cache = cache
        self.log = log if log is not None else RequestLog()
        self.replay = replay
        self._sleep = sleep
        self._default_backend = None
        self._semaphores = {
            role: threading.BoundedSemaphore(p.concurrency_limit) for role, p in self.profiles.items()
        }

    def __deepcopy__(self, memo):
        # shared resource handle (locks, cache, connections); estimators clone by reference
        return self

    def profile(self, role: str | BackendProfile) -> BackendProfile:
        if isinstance(role, BackendProfile):
            if self.profiles.get(role.role) != role:
                raise ConfigurationError(f"profile for role {role.role!r} is not registered")
            return role
        try:
            return self.profiles[role]
        except KeyError:
            raise RoleNotConfiguredError(role) from None

    def has_role(self, role: str) -> bool:
        return role in self.profiles

    def require(self, *roles: str) -> None:
        for role in roles:
            self.profile(role)

    def _backend(self, role: str) -> Backend:
        if role in self.backends:
            return self.backends[role]
        if self._default_backend is None:
            self._default_backend = HTTPBackend()
        return self._default_backend

    def _call(self, profile: BackendProfile, fn):
        backend = self._backend(profile.role)
        attempt = 0
        while True:
            attempt += 1
            try:
                with self._semaphores[profile.role]:
                    return fn(backend), attempt, backend.network
            except TransportError as exc:
                if not exc.transient or attempt >= profile.retry.max_attempts:
                    raise
                delay = profile.retry.delay(attempt)
                logger.warning(
                    "%s request failed (%s); retry %d/%d in %.2fs",
                    profile.role, exc, attempt, profile.retry.max_attempts - 1, delay,
                )
                self._sleep(delay)

    def _record(self, profile, kind, fp, source, latency_ms, network=False, attempts=0, usage=None):
        self.log.append(
            {
                "kind": kind,
                "role": profile.role,
                "model": profile.model_name,
                "fingerprint": fp,
                "source": source,
                "network": network,
                "attempts": attempts,
                "latency_ms": round(latency_ms, 3),
                "usage": usage,
            }
        )

    def chat_exchange(self, profile: str | BackendProfile, messages: list[dict]) -> ChatExchange:
        profile = self.profile(profile)
        if profile.role not in CHAT_ROLES:
            raise ConfigurationError(f"role {profile.role!r} does not serve chat completions")
        if not messages:
            raise ValueError("messages must be nonempty")
        messages = [{"role": m["role"], "content": m["content"]} for m in messages]
        fp = chat_fingerprint(profile, messages)
        start = time.perf_counter()
        if self.cache is not None and fp in self.cache:
            text = self.cache.get(fp)
            latency = (time.perf_counter() - start) * 1000
            self._record(profile, "chat", fp, "cache", latency)
            return ChatExchange(fp, tuple(messages), text, None, latency, "cache")
        if self.replay:
            raise CacheMissInReplayMode(fp)
        completion, attempts, network = self._call(profile, lambda b: b.complete(profile, messages))
        latency = (time.perf_counter() - start) * 1000
        if self.cache is not None:
            self.cache.put(fp, profile.role, completion.text)
        self._record(profile, "chat", fp, "backend", latency, network, attempts, completion.usage)
        return ChatExchange(fp, tuple(messages), completion.text, completion.usage, latency, "backend")

    def chat(self, profile: str | BackendProfile, messages: list[dict]) -> str:
        return self.chat_exchange(profile, messages).completion

    def complete(self, profile: str | BackendProfile, prompt: str) -> ChatExchange:
        """Single user-turn convenience wrapper around :meth:`chat_exchange`."""
        return self.chat_exchange(profile, [{"role": "user", "content": prompt}])

    def embed(self, profile: str | BackendProfile, text: str) -> list[float]:
        profile = self.profile(profile)
        if not text or not text.strip():
            raise EmbedInputError("cannot embed empty text")
        fp = embed_fingerprint(profile, text)
        start = time.perf_counter()
        if self.cache is not None and fp in self.cache:
            vec = self.cache.get(fp)
            self._record(profile, "embed", fp, "cache", (time.perf_counter() - start) * 1000)
            return list(vec)
        if self.replay:
            raise CacheMissInReplayMode(fp)
        vec, attempts, network = self._call(profile, lambda b: b.embed(profile, text))
        if not vec:
            raise GatewayError("embedding endpoint returned an empty vector")
        if self.cache is not None:
            self.cache.put(fp, profile.role, vec)
        self._record(profile, "embed", fp, "backend", (time.perf_counter() - start) * 1000, network, attempts)
        return list(vec)

    def classify_factuality(
        self, profile: str | BackendProfile, flat_table: str, claim: str, prompt_dir=None
    ) -> CriticVerdict:
        """Ask the critic whether ``claim`` is entailed by the table.

        Fails closed: any reply that is not a recognisable label is refuted.
        """
        from ..prompts import load_template

        if not claim or not claim.strip():
            raise ValueError("claim must be nonempty")
        prompt = load_template("critic", prompt_dir).render(table=flat_table, claim=claim)
        reply = self.complete(profile, prompt).completion
        label = parse_verdict(reply)
        if label is None:
            logger.warning("unparseable critic reply %r; treating claim as refuted", reply[:80])
            label = "refuted"
        return CriticVerdict(label)


_ENTAILED = {"entailed", "entail", "entails", "true", "yes", "supported", "consistent"}
_REFUTED = {"refuted", "refute", "refutes", "false", "no", "unsupported", "inconsistent"}


def parse_verdict(reply: str) -> str | None:
    words = reply.strip().split()
    if not words:
        return None
    word = words[0].strip(".,:;!\"'()[]*").lower()
    if word in _ENTAILED:
        return "entailed"
    if word in _REFUTED:
        return "refuted"
    return None
