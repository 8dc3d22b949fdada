"""Surface metrics (ROUGE-L, BLEU, a basic METEOR) and judge-model metrics.

All surface metrics share :func:`tabinsight.text.tokenize`; its version tag
is recorded in every report so runs stay comparable.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyTextError, MetricParseError
from .prompts import load_template
from .table import DEFAULT_MAX_TOKENS, Table, serialize_table
from .text import tokenize

logger = logging.getLogger(__name__)

BLEU_MAX_N = 4
BLEU_SMOOTHING = "add-one on zero n-gram matches for n>=2"
METEOR_NAME = "meteor-basic"
PAIRWISE_CRITERIA = ("natural", "comprehensive", "informative")


def _tokens(text: str, what: str) -> list[str]:
    toks = tokenize(text)
    if not toks:
        raise EmptyTextError(f"{what} has no tokens")
    return toks


def lcs_length(a, b) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_f1(candidate: str, reference: str) -> float:
    cand = _tokens(candidate, "candidate")
    ref = _tokens(reference, "reference")
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_n: int = BLEU_MAX_N) -> float:
    """Sentence BLEU on a 0-100 scale.

    Uniform weights over 1..4-gram clipped precisions and the usual brevity
    penalty.  A zero match count for n >= 2 is smoothed to 1/(total+1); a
    zero unigram match gives 0.
    """
    cand = _tokens(candidate, "candidate")
    ref = _tokens(reference, "reference")
    log_sum = 0.0
    for n in range(1, max_n + 1):
        c_ngrams = _ngrams(cand, n)
        r_ngrams = _ngrams(ref, n)
        total = max(len(cand) - n + 1, 0)
        matches = sum(min(c, r_ngrams[g]) for g, c in c_ngrams.items())
        if matches == 0:
            if n == 1:
                return 0.0
            matches, total = 1, total + 1
        log_sum += math.log(matches / total) / max_n
    c, r = len(cand), len(ref)
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return 100.0 * bp * math.exp(log_sum)


def meteor_basic(candidate: str, reference: str, alpha: float = 0.9, gamma: float = 0.5, beta: float = 3.0) -> float:
    """Exact-match unigram METEOR without stemming or synonyms.

    Each candidate token aligns to the leftmost unused identical reference
    token.  ``F = 10PR / (R + 9P)`` and the fragmentation penalty is
    ``0.5 * (chunks / matches) ** 3``.
    """
    cand = _tokens(candidate, "candidate")
    ref = _tokens(reference, "reference")
    used = [False] * len(ref)
    alignment = []  # (cand_pos, ref_pos)
    for i, tok in enumerate(cand):
        for j, rtok in enumerate(ref):
            if not used[j] and rtok == tok:
                used[j] = True
                alignment.append((i, j))
                break
    m = len(alignment)
    if m == 0:
        return 0.0
    p = m / len(cand)
    r = m / len(ref)
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(alignment, alignment[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    penalty = gamma * (chunks / m) ** beta
    return fmean * (1 - penalty)


SURFACE_METRICS = {
    "rouge_l": rouge_l_f1,
    "bleu": bleu,
    METEOR_NAME: meteor_basic,
}


# -- judge metrics ----------------------------------------------------------------

_SCORE_RE = re.compile(r"(?<![\d.])([1-5](?:\.\d+)?)(?![\d])")


def parse_likert(reply: str) -> float | None:
    m = _SCORE_RE.search(reply or "")
    if not m:
        return None
    value = float(m.group(1))
    return value if 1.0 <= value <= 5.0 else None


def geval_insightfulness(gateway, t: Table, summary: str, role="judge", prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS) -> float | None:
    """Analytical-depth score in [1, 5]; None after two unreadable replies."""
    prompt = load_template("geval", prompt_dir).require("table", "summary").render(
        table=serialize_table(t, max_tokens).text, summary=summary
    )
    score = parse_likert(gateway.complete(role, prompt).completion)
    if score is None:
        reminder = "\n\nReply with a single number from 1 to 5."
        score = parse_likert(gateway.complete(role, prompt + reminder).completion)
    if score is None:
        logger.warning("judge gave no usable analytical-depth score")
    return score


def split_sentences(text: str) -> list[str]:
    """Split on . ? ! followed by whitespace; a period between digits never splits."""
    sentences, start = [], 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch not in ".?!":
            continue
        if ch == "." and 0 < i < n - 1 and text[i - 1].isdigit() and text[i + 1].isdigit():
            continue
        if i + 1 < n and not text[i + 1].isspace():
            continue
        piece = text[start:i + 1].strip()
        if piece:
            sentences.append(piece)
        start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


_VERIFY_RE = re.compile(r"\(\s*verification\s*\)\s*:?\s*\**\s*(true|false|t|f)\b", re.IGNORECASE)


def sentence_faithfulness(gateway, t: Table, summary: str, role="judge", prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS) -> float:
    """Fraction of summary sentences the judge verifies as true."""
    sentences = split_sentences(summary)
    if not sentences:
        raise EmptyTextError("summary has no sentences")
    prompt = load_template("faithfulness", prompt_dir).require("table", "summary").render(
        table=serialize_table(t, max_tokens).text, summary=summary
    )
    reply = gateway.complete(role, prompt).completion
    verdicts = [v.lower().startswith("t") for v in _VERIFY_RE.findall(reply)]
    if len(verdicts) != len(sentences):
        raise MetricParseError(
            f"judge verified {len(verdicts)} sentences, summary has {len(sentences)}",
            expected=len(sentences),
            found=len(verdicts),
        )
    return sum(verdicts) / len(verdicts)


_INDEX_RE = re.compile(r"better\s+summary\s+index\s*:?\s*\**\s*\[?\s*(?:summary\s+)?([AB])\b", re.IGNORECASE)


def parse_better_index(reply: str) -> str | None:
    m = _INDEX_RE.search(reply or "")
    if m:
        return m.group(1).upper()
    bare = (reply or "").strip().strip("[]().*").strip().upper()
    return bare if bare in ("A", "B") else None


def pairwise_compare(gateway, t: Table, summary_a: str, summary_b: str, criterion: str, role="judge", prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS) -> str:
    """Winner ``"A"``, ``"B"`` or ``"tie"``.

    The pair is judged in both presentation orders; the outcome is a win only
    when both orders agree.
    """
    if criterion not in PAIRWISE_CRITERIA:
        raise ValueError(f"criterion must be one of {PAIRWISE_CRITERIA}")
    template = load_template(f"pairwise_{criterion}", prompt_dir).require("table", "summary_a", "summary_b")
    flat = serialize_table(t, max_tokens).text
    first = parse_better_index(gateway.complete(role, template.render(table=flat, summary_a=summary_a, summary_b=summary_b)).completion)
    second = parse_better_index(gateway.complete(role, template.render(table=flat, summary_a=summary_b, summary_b=summary_a)).completion)
    if first is None or second is None:
        raise MetricParseError("judge reply has no 'Better Summary Index'")
    second = {"A": "B", "B": "A"}[second]
    return first if first == second else "tie"


@dataclass
class PairwiseTally:
    wins_a: int = 0
    wins_b: int = 0
    ties: int = 0
    failures: int = 0

    def add(self, outcome: str) -> None:
        if outcome == "A":
            self.wins_a += 1
        elif outcome == "B":
            self.wins_b += 1
        else:
            self.ties += 1

    @property
    def pairs(self) -> int:
        return self.wins_a + self.wins_b + self.ties

    @property
    def win_rate_a(self) -> float:
        return 100.0 * self.wins_a / self.pairs if self.pairs else 0.0

    def to_json(self) -> dict:
        return {
            "wins_a": self.wins_a,
            "wins_b": self.wins_b,
            "ties": self.ties,
            "failures": self.failures,
            "win_rate_a": self.win_rate_a,
        }
