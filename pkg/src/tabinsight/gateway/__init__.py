"""Model access: profiles, backends, caching, replay and similarity."""

from .backends import (
    Backend,
    Completion,
    HTTPBackend,
    ScriptedBackend,
    concat_knowledge_responder,
    hash_embed,
    prompt_text,
    section,
)
from .core import ChatExchange, CriticVerdict, Gateway, parse_verdict
from .profiles import (
    CHAT_ROLES,
    ROLES,
    BackendProfile,
    RetryPolicy,
    chat_fingerprint,
    embed_fingerprint,
)
from .similarity import SIM_BACKENDS, Similarity, cosine_similarity
from .store import RequestCache, RequestLog

__all__ = [
    "Backend",
    "BackendProfile",
    "CHAT_ROLES",
    "ChatExchange",
    "Completion",
    "CriticVerdict",
    "Gateway",
    "HTTPBackend",
    "ROLES",
    "RequestCache",
    "RequestLog",
    "RetryPolicy",
    "SIM_BACKENDS",
    "ScriptedBackend",
    "Similarity",
    "chat_fingerprint",
    "concat_knowledge_responder",
    "cosine_similarity",
    "embed_fingerprint",
    "hash_embed",
    "parse_verdict",
    "prompt_text",
    "section",
]
