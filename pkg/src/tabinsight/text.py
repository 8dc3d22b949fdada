"""Tokenization shared by the surface metrics and token-F1 similarity."""

import re
from collections import Counter

TOKENIZER_VERSION = "lower-alnum-v1"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def token_f1(a: str, b: str) -> float:
    """Bag-of-tokens F1 overlap between two texts.

    Two texts with no tokens are identical (1.0); one empty side gives 0.0.
    """
    ta, tb = tokenize(a), tokenize(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    overlap = sum((Counter(ta) & Counter(tb)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(ta)
    recall = overlap / len(tb)
    return 2 * precision * recall / (precision + recall)
