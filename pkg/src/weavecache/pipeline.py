"""Gated answering over streaming memory.

The answer path runs in at most two rounds. Round one scores the answer
options against the local window only. If the gate finds that
distribution confident enough, the local answer ships as is and no
retrieval cost is paid. Otherwise the query runs coarse-to-fine
retrieval over a snapshot of the full buffer, the recalled frames are
merged with the local window (deduplicated by frame_id, chronological
order), and the answerer scores the merged context from scratch.

Answerers are pluggable. The bundled MockAnswerer is embedding-only:
each option's logit is the best cosine between any context frame's
pooled key and that option's embedding, softened by a temperature. It
ignores the query text by construction, which makes it deterministic
and cheap; anything implementing ``score`` the same way can replace it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .config import RunConfig
from .core import Distribution, softmax
from .errors import EmptyInputError, EmptyMemoryError, ZeroNormError
from .gate import GateDecision, decide
from .memory import FrameRecord, MemoryBuffer
from .retrieval import QueryRecord, RetrievalResult, c2f_load

__all__ = [
    "Answerer",
    "MockAnswerer",
    "AnswerTrace",
    "answer_query",
    "trace_to_dict",
    "as_options_matrix",
    "TRACE_SCHEMA_VERSION",
]

TRACE_SCHEMA_VERSION = 1


class Answerer(Protocol):
    """Scores answer options against a frame context.

    Implementations must be deterministic: identical context, query,
    and options always produce the identical distribution.
    """

    def score(
        self,
        context_frames: Sequence[FrameRecord],
        query: QueryRecord,
        options: np.ndarray,
    ) -> Distribution:
        ...


def as_options_matrix(options: Sequence[Sequence[float]]) -> np.ndarray:
    """Validate answer-option embeddings into an (n_options, dim) matrix."""
    if isinstance(options, np.ndarray):
        arr = options.astype(np.float64, copy=True)
        if arr.ndim != 2:
            raise EmptyInputError("options must be a list of vectors")
    else:
        rows = list(options)
        if not rows:
            raise EmptyInputError("at least one answer option is required")
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2:
            raise EmptyInputError("options must all share one dimension")
    if arr.shape[0] == 0:
        raise EmptyInputError("at least one answer option is required")
    if not np.isfinite(arr).all():
        raise ValueError("option entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MockAnswerer:
    """Embedding-only answerer for simulation and tests.

    logit[a] = max over context frames of cosine(pooled_key, option_a),
    then softmax(logits / tau). Low tau sharpens toward one-hot.
    """

    tau: float = 1.0

    def score(
        self,
        context_frames: Sequence[FrameRecord],
        query: QueryRecord,
        options: np.ndarray,
    ) -> Distribution:
        if len(context_frames) == 0:
            raise EmptyInputError("scoring over an empty context")
        opts = as_options_matrix(options)
        opt_norms = np.linalg.norm(opts, axis=1)
        zero = np.flatnonzero(opt_norms == 0.0)
        if zero.size:
            raise ZeroNormError(f"option {int(zero[0])} has zero norm")
        pooled = np.vstack([f.pooled_key for f in context_frames])
        pooled_norms = np.linalg.norm(pooled, axis=1)
        zero = np.flatnonzero(pooled_norms == 0.0)
        if zero.size:
            fid = context_frames[int(zero[0])].frame_id
            raise ZeroNormError(f"frame {fid} pooled key has zero norm")
        sims = (pooled @ opts.T) / np.outer(pooled_norms, opt_norms)
        logits = np.max(sims, axis=0)
        return softmax([float(x) for x in logits], self.tau)


@dataclass(frozen=True)
class AnswerTrace:
    """Everything one query did on its way to an answer.

    Attributes:
        local_dist: distribution from the window-only pass.
        gate: the gate decision over local_dist.
        retrieved: retrieval result when the gate recalled, else None.
        final_dist: the shipped distribution (== local_dist when the
            gate answered locally).
        chosen_option: argmax of final_dist, ties to the smallest index.
        sim_ops_total: retrieval ops paid by this query (0 when local).
        wall_ms: wall-clock time of the whole call, informational only.
    """

    local_dist: Distribution
    gate: GateDecision
    retrieved: RetrievalResult | None
    final_dist: Distribution
    chosen_option: int
    sim_ops_total: int
    wall_ms: float


def _merge_context(
    local: Sequence[FrameRecord],
    snapshot: Sequence[FrameRecord],
    retrieved: RetrievalResult,
) -> list[FrameRecord]:
    """Recalled frames plus the local window, deduplicated, in time order."""
    seen: dict[int, FrameRecord] = {}
    for fid, _ in retrieved.entries:
        seen[fid] = snapshot[fid]
    for f in local:
        seen[f.frame_id] = f
    merged = list(seen.values())
    merged.sort(key=lambda f: (f.timestamp_s, f.frame_id))
    return merged


def answer_query(
    memory: MemoryBuffer,
    query: QueryRecord,
    options: Sequence[Sequence[float]],
    cfg: RunConfig,
    answerer: Answerer,
) -> AnswerTrace:
    """Answer one query against the buffer's current state.

    The local window length comes from the buffer itself; ``cfg``
    supplies the gate threshold and the retrieval budget (k, m_coarse).

    Raises:
        EmptyMemoryError: the buffer holds no frames.
        EmptyInputError: no answer options.
    """
    t0 = time.perf_counter()
    if len(memory) == 0:
        raise EmptyMemoryError("cannot answer against an empty memory")
    opts = as_options_matrix(options)

    local = memory.local_window()
    local_dist = answerer.score(local, query, opts)
    decision = decide(local_dist, cfg.delta)

    retrieved: RetrievalResult | None = None
    final_dist = local_dist
    if decision.recalled:
        snap = memory.snapshot()
        retrieved = c2f_load(snap, query, m_coarse=cfg.m_coarse, k=cfg.k)
        context = _merge_context(local, snap, retrieved)
        final_dist = answerer.score(context, query, opts)

    wall_ms = (time.perf_counter() - t0) * 1e3
    return AnswerTrace(
        local_dist=local_dist,
        gate=decision,
        retrieved=retrieved,
        final_dist=final_dist,
        chosen_option=final_dist.argmax(),
        sim_ops_total=0 if retrieved is None else retrieved.sim_ops,
        wall_ms=wall_ms,
    )


def trace_to_dict(trace: AnswerTrace) -> dict:
    """Versioned JSON-ready form of a trace (schema v1)."""
    retrieved = None
    if trace.retrieved is not None:
        retrieved = {
            "stage": trace.retrieved.stage,
            "sim_ops": trace.retrieved.sim_ops,
            "entries": [[fid, score] for fid, score in trace.retrieved.entries],
        }
    return {
        "v": TRACE_SCHEMA_VERSION,
        "local_dist": list(trace.local_dist.probs),
        "entropy_nats": trace.gate.entropy_nats,
        "threshold_nats": trace.gate.threshold_nats,
        "branch": trace.gate.branch.value,
        "retrieved": retrieved,
        "final_dist": list(trace.final_dist.probs),
        "chosen_option": trace.chosen_option,
        "sim_ops_total": trace.sim_ops_total,
        "wall_ms": trace.wall_ms,
    }
