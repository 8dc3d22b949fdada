from __future__ import annotations

import math
from typing import Sequence

from ..errors import DimensionMismatch, ZeroVectorError
from ..text import token_f1

SIM_BACKENDS = ("embedding-cosine", "token-f1")


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v) or not len(u):
        raise DimensionMismatch(f"vectors have dimensions {len(u)} and {len(v)}")
    nu = math.sqrt(math.fsum(x * x for x in u))
    nv = math.sqrt(math.fsum(x * x for x in v))
    if nu == 0 or nv == 0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    value = math.fsum(a * b for a, b in zip(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, value))


class Similarity:
    """Text similarity used to compare an ablation summary with the reference.

    ``embedding-cosine`` embeds both texts through the gateway's embedder
    role; ``token-f1`` is computed locally.
    """

    def __init__(self, backend: str = "embedding-cosine", gateway=None, embedder: str = "embedder"):
        if backend not in SIM_BACKENDS:
            raise ValueError(f"unknown similarity backend {backend!r}; expected one of {SIM_BACKENDS}")
        if backend == "embedding-cosine" and gateway is None:
            raise ValueError("embedding-cosine similarity needs a gateway")
        self.backend = backend
        self.gateway = gateway
        self.embedder = embedder

    def __call__(self, a: str, b: str) -> float:
        if self.backend == "token-f1":
            return token_f1(a, b)
        return cosine_similarity(self.gateway.embed(self.embedder, a), self.gateway.embed(self.embedder, b))
