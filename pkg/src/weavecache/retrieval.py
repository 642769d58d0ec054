"""Coarse-to-fine late-interaction retrieval over memory snapshots.

The coarse pass ranks every frame by cosine similarity between pooled
keys, one similarity op per frame. The fine pass re-scores survivors
with the token-level late-interaction score: each query token takes its
best raw inner product against the frame's tokens, and the per-token
maxima are summed. A frame with n_i tokens scored against a query with
n_q tokens therefore costs n_q * n_i similarity ops.

``sim_ops`` on a result counts exactly the ops the call performed, so
it is a machine-independent latency proxy:

    coarse:  n
    fine:    sum over scored frames of n_q * n_i
    c2f:     n + sum over coarse survivors of n_q * n_i

Scores are reported in descending order; exact ties break toward the
smaller frame_id. ``fine_oracle`` is the brute-force reference the
two-stage path is tested against: with m_coarse >= n the two must agree
exactly, below that the contraction is measured, never assumed sound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    InvalidParameterError,
    ZeroNormError,
)
from .memory import FrameRecord, MemorySnapshot, as_token_matrix, pool_tokens

__all__ = [
    "QueryRecord",
    "RetrievalResult",
    "coarse_load",
    "max_sim",
    "max_sim_cost",
    "c2f_load",
    "fine_oracle",
    "DEFAULT_K",
    "DEFAULT_M_COARSE",
]

DEFAULT_K = 64
# Coarse pool defaults to 4x the recall budget.
DEFAULT_M_COARSE = 4 * DEFAULT_K


@dataclass(frozen=True, eq=False)
class QueryRecord:
    """A query's token embeddings plus their exactly-rounded mean.

    Attributes:
        token_keys: read-only (n_tokens, dim) matrix.
        pooled_key: read-only (dim,) mean of token_keys.
    """

    token_keys: np.ndarray
    pooled_key: np.ndarray

    @classmethod
    def from_tokens(cls, tokens: Sequence[Sequence[float]]) -> "QueryRecord":
        mat = as_token_matrix(tokens)
        return cls(token_keys=mat, pooled_key=pool_tokens(mat))

    @property
    def n_tokens(self) -> int:
        return int(self.token_keys.shape[0])

    @property
    def dim(self) -> int:
        return int(self.token_keys.shape[1])


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked frames from one retrieval call.

    Attributes:
        entries: (frame_id, score) pairs, scores descending, exact ties
            broken toward the smaller frame_id.
        stage: "coarse", "fine", or "c2f".
        sim_ops: similarity ops this call performed (see module docs).
    """

    entries: tuple[tuple[int, float], ...]
    stage: str
    sim_ops: int

    def frame_ids(self) -> tuple[int, ...]:
        return tuple(fid for fid, _ in self.entries)


def _check_view(view: Sequence[FrameRecord]) -> None:
    if len(view) == 0:
        raise EmptyInputError("retrieval over an empty memory view")


def _check_query_dim(view: Sequence[FrameRecord], query: QueryRecord) -> None:
    frame_dim = int(view[0].token_keys.shape[1])
    if query.dim != frame_dim:
        raise DimensionError(
            f"query dim {query.dim} does not match frame dim {frame_dim}"
        )


def _ranked(ids: np.ndarray, scores: np.ndarray, top: int) -> tuple[tuple[int, float], ...]:
    """Sort by score descending, then frame_id ascending; keep ``top``."""
    order = np.lexsort((ids, -scores))
    order = order[:top]
    return tuple((int(ids[i]), float(scores[i])) for i in order)


def coarse_load(
    view: MemorySnapshot | Sequence[FrameRecord],
    query: QueryRecord,
    m_coarse: int = DEFAULT_M_COARSE,
) -> RetrievalResult:
    """Rank frames by cosine between pooled keys; keep the top m_coarse.

    Args:
        view: snapshot (or frame sequence) to scan.
        query: the query record.
        m_coarse: coarse pool size, >= 1. Clamped to n by taking
            min(m_coarse, n) survivors.

    Raises:
        InvalidParameterError: m_coarse < 1.
        EmptyInputError: empty view.
        DimensionError: query dim does not match the frames.
        ZeroNormError: the query or any scanned frame has a zero-norm
            pooled key; the message names the offender.
    """
    if m_coarse < 1:
        raise InvalidParameterError(f"m_coarse must be >= 1, got {m_coarse}")
    _check_view(view)
    _check_query_dim(view, query)

    if isinstance(view, MemorySnapshot):
        pooled = view.pooled_matrix()
        norms = view.pooled_norms()
    else:
        pooled = np.vstack([f.pooled_key for f in view])
        norms = np.linalg.norm(pooled, axis=1)

    q_norm = float(np.linalg.norm(query.pooled_key))
    if q_norm == 0.0:
        raise ZeroNormError("query pooled key has zero norm")
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        fid = view[int(zero[0])].frame_id
        raise ZeroNormError(f"frame {fid} pooled key has zero norm")

    scores = (pooled @ query.pooled_key) / (norms * q_norm)
    ids = np.array([f.frame_id for f in view], dtype=np.int64)
    n = len(view)
    return RetrievalResult(
        entries=_ranked(ids, scores, min(m_coarse, n)),
        stage="coarse",
        sim_ops=n,
    )


def max_sim(frame: FrameRecord, query: QueryRecord) -> float:
    """Late-interaction score of one frame against one query.

    For each query token, take the maximum raw inner product over the
    frame's tokens; sum those maxima over query tokens. Inner products
    are unnormalized by design; only the coarse pass normalizes.

    Raises:
        DimensionError: token dims disagree.
    """
    if query.dim != int(frame.token_keys.shape[1]):
        raise DimensionError(
            f"query dim {query.dim} does not match frame dim "
            f"{int(frame.token_keys.shape[1])}"
        )
    sims = query.token_keys @ frame.token_keys.T
    return float(np.sum(np.max(sims, axis=1)))


def max_sim_cost(frame: FrameRecord, query: QueryRecord) -> int:
    """Similarity ops max_sim performs: n_query_tokens * n_frame_tokens."""
    return query.n_tokens * frame.n_tokens


def fine_oracle(
    view: MemorySnapshot | Sequence[FrameRecord],
    query: QueryRecord,
    k: int = DEFAULT_K,
) -> RetrievalResult:
    """Brute force: max_sim against every frame, full sort, top k.

    The reference the coarse-to-fine path is checked against.

    Raises:
        InvalidParameterError: k < 1.
        EmptyInputError: empty view.
        DimensionError: query dim does not match the frames.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    _check_view(view)
    _check_query_dim(view, query)
    ids = np.empty(len(view), dtype=np.int64)
    scores = np.empty(len(view), dtype=np.float64)
    ops = 0
    for i, frame in enumerate(view):
        ids[i] = frame.frame_id
        scores[i] = max_sim(frame, query)
        ops += max_sim_cost(frame, query)
    return RetrievalResult(
        entries=_ranked(ids, scores, min(k, len(view))),
        stage="fine",
        sim_ops=ops,
    )


def c2f_load(
    view: MemorySnapshot | Sequence[FrameRecord],
    query: QueryRecord,
    m_coarse: int = DEFAULT_M_COARSE,
    k: int = DEFAULT_K,
) -> RetrievalResult:
    """Coarse pass, then max_sim re-ranking of the survivors; top k.

    The final order is by fine score only; coarse scores are discarded
    after the cut. With m_coarse >= n this equals ``fine_oracle``
    exactly. With m_coarse < n the coarse cut can drop true top-k
    frames; that miss rate is a measured property, not an invariant.

    Raises:
        InvalidParameterError: k < 1 or m_coarse < 1.
        EmptyInputError: empty view.
        DimensionError: query dim does not match the frames.
        ZeroNormError: zero-norm pooled key in the coarse pass.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    coarse = coarse_load(view, query, m_coarse)

    # Frame ids are dense in snapshot order, so index by id when the
    # view is the full snapshot; fall back to a dict otherwise.
    if len(view) and view[0].frame_id == 0 and view[-1].frame_id == len(view) - 1:
        lookup = view
    else:
        lookup = {f.frame_id: f for f in view}  # type: ignore[assignment]

    ids = np.empty(len(coarse.entries), dtype=np.int64)
    scores = np.empty(len(coarse.entries), dtype=np.float64)
    ops = coarse.sim_ops
    for i, (fid, _) in enumerate(coarse.entries):
        frame = lookup[fid]
        ids[i] = fid
        scores[i] = max_sim(frame, query)
        ops += max_sim_cost(frame, query)
    return RetrievalResult(
        entries=_ranked(ids, scores, min(k, len(coarse.entries))),
        stage="c2f",
        sim_ops=ops,
    )
