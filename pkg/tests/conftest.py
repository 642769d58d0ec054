"""Shared fixtures and slow brute-force reference implementations.

The reference functions here recompute results with plain Python loops
and exact arithmetic where possible; production code is checked against
them rather than against itself.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from weavecache.memory import FrameRecord, as_token_matrix, pool_tokens
from weavecache.retrieval import QueryRecord


def make_frame(frame_id: int, timestamp_s: float, tokens) -> FrameRecord:
    """Build a FrameRecord directly, bypassing MemoryBuffer."""
    mat = as_token_matrix(tokens)
    return FrameRecord(
        frame_id=frame_id,
        timestamp_s=float(timestamp_s),
        token_keys=mat,
        pooled_key=pool_tokens(mat),
        label=None,
    )


def make_query(tokens) -> QueryRecord:
    return QueryRecord.from_tokens(tokens)


def random_view(rng: np.random.Generator, n: int, dim: int, max_tokens: int):
    """n random frames with 1..max_tokens tokens each, ids 0..n-1."""
    frames = []
    for i in range(n):
        n_tok = int(rng.integers(1, max_tokens + 1))
        tokens = rng.standard_normal((n_tok, dim))
        frames.append(make_frame(i, float(i), tokens))
    return frames


# --- reference implementations ---------------------------------------------


def ref_dot(a, b) -> float:
    total = 0.0
    for x, y in zip(a, b):
        total += float(x) * float(y)
    return total


def ref_cosine(a, b) -> float:
    na = math.sqrt(ref_dot(a, a))
    nb = math.sqrt(ref_dot(b, b))
    return ref_dot(a, b) / (na * nb)


def ref_mean_fraction(values) -> float:
    """Exact rational mean, rounded once at the end."""
    total = Fraction(0)
    for v in values:
        total += Fraction(float(v))
    return float(total / len(values))


def ref_max_sim(frame_tokens, query_tokens) -> float:
    """Late-interaction score via explicit loops."""
    total = 0.0
    for q in query_tokens:
        best = -math.inf
        for f in frame_tokens:
            best = max(best, ref_dot(q, f))
        total += best
    return total


def ref_entropy(probs) -> float:
    total = 0.0
    for p in probs:
        if p > 0.0:
            total -= p * math.log(p)
    return total


def ref_rank(ids, scores, top):
    """Score descending, frame_id ascending on exact ties."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], scores[i]) for i in order[:top]]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260817)
