"""Shared tokenizer plus from-scratch BLEU and TER.

BLEU here is the geometric mean of clipped n-gram precisions (orders 1..4 by
default) times a brevity penalty ``exp(1 - ref_len/hyp_len)`` applied when the
hypothesis is shorter than the reference. Two smoothing rules keep short
generations scoreable: a precision whose match count is zero is floored at
``PRECISION_FLOOR`` before entering the mean, and orders for which the
hypothesis has no n-grams at all are dropped from the mean entirely.

TER counts the word edits needed to turn the hypothesis into the reference:
insertions, deletions, substitutions, plus block shifts at cost 1 each. Shifts
are found greedily (at every step the block move that most reduces the plain
word-level Levenshtein distance is applied) under the usual heuristic bounds
(block length, candidate budget, iteration cap). The final score is edits
divided by reference length.

Both metrics consume the output of :func:`tokenize` and nothing else: text is
Unicode-lowercased, split on whitespace, and leading/trailing punctuation is
peeled off into standalone tokens. No stemming, no casing variants.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ValidationError

PRECISION_FLOOR = 1e-9
MAX_SHIFT_BLOCK = 10
MAX_SHIFT_CANDIDATES = 1000
MAX_SHIFT_ITERATIONS = 50


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split off leading/trailing punctuation.

    Idempotent under re-tokenization of the space-joined output; interior
    punctuation (``don't``, ``co-op``) is left alone.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        head: list[str] = []
        tail: list[str] = []
        while chunk and _is_punct(chunk[0]):
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_punct(chunk[-1]):
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


# --------------------------------------------------------------------------
# BLEU
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BleuBreakdown:
    """Score plus the parts it was assembled from.

    ``precisions`` holds one entry per scored n-gram order (orders with zero
    possible n-grams are absent), already floored where the raw precision was
    zero, so ``score == brevity_penalty * geometric_mean(precisions)``.
    """

    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    ref_len: int
    hyp_len: int


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(reference: list[str], hypothesis: list[str], max_order: int = 4) -> BleuBreakdown:
    """Clipped n-gram precision BLEU of ``hypothesis`` against one reference.

    Higher means more similar; 1.0 exactly iff the sequences are token-wise
    equal. An empty hypothesis scores 0 by convention; an empty reference is
    an error.
    """
    if not reference:
        raise ValidationError("empty reference")
    ref_len = len(reference)
    hyp_len = len(hypothesis)
    if hyp_len == 0:
        return BleuBreakdown(0.0, (), 0.0, ref_len, 0)

    precisions: list[float] = []
    for n in range(1, max_order + 1):
        possible = hyp_len - n + 1
        if possible <= 0:
            break
        ref_counts = _ngram_counts(reference, n)
        hyp_counts = _ngram_counts(hypothesis, n)
        matched = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
        p = matched / possible
        precisions.append(p if p > 0.0 else PRECISION_FLOOR)

    log_mean = sum(math.log(p) for p in precisions) / len(precisions)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return BleuBreakdown(bp * math.exp(log_mean), tuple(precisions), bp, ref_len, hyp_len)


# --------------------------------------------------------------------------
# TER
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TerBreakdown:
    """Edit total, its shift component, and the normalized score."""

    edits: int
    shifts: int
    ref_len: int
    score: float


@njit(cache=True)
def _levenshtein_ids(a: np.ndarray, b: np.ndarray) -> int:
    n = a.shape[0]
    m = b.shape[0]
    prev = np.arange(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            c = prev[j - 1] if ai == b[j - 1] else prev[j - 1] + 1
            d = prev[j] + 1
            e = cur[j - 1] + 1
            best = c
            if d < best:
                best = d
            if e < best:
                best = e
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


@njit(cache=True)
def _best_shift(ref: np.ndarray, hyp: np.ndarray,
                starts: np.ndarray, lengths: np.ndarray, dests: np.ndarray) -> tuple[int, int]:
    """Evaluate candidate block moves; return (index of best, its distance).

    Ties go to the earliest candidate, so enumeration order fixes the result.
    """
    n = hyp.shape[0]
    rem = np.empty(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    best_k = -1
    best_dist = np.int64(1) << 60
    for k in range(starts.shape[0]):
        i = starts[k]
        length = lengths[k]
        j = dests[k]
        m = 0
        for t in range(n):
            if t < i or t >= i + length:
                rem[m] = hyp[t]
                m += 1
        for t in range(j):
            buf[t] = rem[t]
        for t in range(length):
            buf[j + t] = hyp[i + t]
        for t in range(j, m):
            buf[t + length] = rem[t]
        dist = _levenshtein_ids(ref, buf)
        if dist < best_dist:
            best_dist = dist
            best_k = k
    return best_k, best_dist


def _encode(reference: list[str], hypothesis: list[str]) -> tuple[np.ndarray, np.ndarray]:
    ids: dict[str, int] = {}
    for tok in reference:
        ids.setdefault(tok, len(ids))
    for tok in hypothesis:
        ids.setdefault(tok, len(ids))
    ref = np.array([ids[t] for t in reference], dtype=np.int64)
    hyp = np.array([ids[t] for t in hypothesis], dtype=np.int64)
    return ref, hyp


def _shift_candidates(ref: np.ndarray, hyp: np.ndarray) -> list[tuple[int, int, int]]:
    """Block moves whose block matches a reference subsequence.

    A block found at reference position ``p`` is landed so it starts at index
    ``p`` of the rearranged hypothesis (clamped), which is where a shift can
    actually pay off. Enumeration order is (start, length, ref position).
    """
    ref_positions: dict[int, list[int]] = {}
    for p, tok in enumerate(ref.tolist()):
        ref_positions.setdefault(tok, []).append(p)
    hyp_list = hyp.tolist()
    n = len(hyp_list)
    ref_len = ref.shape[0]
    cands: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    for i in range(n):
        positions = ref_positions.get(hyp_list[i], [])
        length = 1
        while positions and length <= MAX_SHIFT_BLOCK and i + length <= n:
            for p in positions:
                j = min(p, n - length)
                cand = (i, length, j)
                if j != i and cand not in seen:
                    seen.add(cand)
                    cands.append(cand)
                    if len(cands) >= MAX_SHIFT_CANDIDATES:
                        return cands
            if i + length < n:
                nxt = hyp_list[i + length]
                positions = [p for p in positions if p + length < ref_len and ref[p + length] == nxt]
            else:
                positions = []
            length += 1
    return cands


def _apply_shift(hyp: np.ndarray, i: int, length: int, j: int) -> np.ndarray:
    rem = np.concatenate([hyp[:i], hyp[i + length:]])
    return np.concatenate([rem[:j], hyp[i:i + length], rem[j:]])


def ter(reference: list[str], hypothesis: list[str]) -> TerBreakdown:
    """Translation edit rate of ``hypothesis`` against one reference.

    Lower means more similar; 0.0 iff the sequences are token-wise equal. An
    empty hypothesis costs one deletion per reference token (score 1.0); an
    empty reference is an error. A shift is only ever applied when it strictly
    reduces the residual Levenshtein distance, so ``edits`` never exceeds the
    shift-free distance.
    """
    if not reference:
        raise ValidationError("empty reference")
    ref_len = len(reference)
    if not hypothesis:
        return TerBreakdown(ref_len, 0, ref_len, 1.0)

    ref, hyp = _encode(reference, hypothesis)
    current = int(_levenshtein_ids(ref, hyp))
    shifts = 0
    for _ in range(MAX_SHIFT_ITERATIONS):
        if current == 0:
            break
        cands = _shift_candidates(ref, hyp)
        if not cands:
            break
        starts = np.array([c[0] for c in cands], dtype=np.int64)
        lengths = np.array([c[1] for c in cands], dtype=np.int64)
        dests = np.array([c[2] for c in cands], dtype=np.int64)
        best_k, best_dist = _best_shift(ref, hyp, starts, lengths, dests)
        if best_dist >= current:
            break
        hyp = _apply_shift(hyp, *cands[best_k])
        shifts += 1
        current = int(best_dist)

    edits = shifts + current
    return TerBreakdown(edits, shifts, ref_len, edits / ref_len)
