"""Planted-relevance stream simulator and episode harness.

Streams are built from ``n_events`` orthonormal centroids. Each event
occupies one contiguous block of frames (block lengths are drawn once
from a seeded multinomial around the even split), and every frame's
tokens are its event's centroid plus isotropic Gaussian noise. Answer
options are the event centroids themselves; a query's tokens are drawn
the same way around its target's centroid, and its relevant set is the
target block.

Horizons control where the planted answer sits relative to the local
window at issue time:

  * current: issued at the target block's last frame, so the answer is
    on screen.
  * past: issued a few frames after a scene change, targeting an event
    at least one full block back. The window then straddles two
    irrelevant events (an ambiguous present), and the answer is behind
    any window no longer than a block.
  * mixed: alternates current, past, current, ... so half the answers
    sit inside the window and half beyond it.

Everything is reproducible: one seeded generator drives centroids,
block lengths, frame noise, and queries in a fixed order, and episode
replay is noise-free, so (stream seed, policy, config) determines every
metric except wall-clock time bit for bit.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .config import RunConfig, threads_from_env
from .errors import (
    ConfigError,
    EmptyInputError,
    InvalidParameterError,
    StreamFormatError,
)
from .memory import MemoryBuffer, frame_to_json_line, read_frame_lines
from .pipeline import AnswerTrace, MockAnswerer, answer_query, as_options_matrix
from .retrieval import QueryRecord

__all__ = [
    "HORIZONS",
    "POLICIES",
    "CSV_COLUMNS",
    "StreamConfig",
    "SimFrame",
    "SimQuery",
    "StreamData",
    "EpisodeMetrics",
    "QueryOutcome",
    "EpisodeResult",
    "generate_stream",
    "run_episode",
    "run_episode_detailed",
    "sweep_threshold",
    "delta_for_policy",
    "metrics_to_csv",
    "stream_jsonl_lines",
    "queries_jsonl_lines",
    "write_stream_files",
    "parse_query_lines",
    "read_queries_jsonl",
    "stream_from_lines",
    "load_stream_files",
]

logger = logging.getLogger(__name__)

HORIZONS = ("current", "past", "mixed")
POLICIES = ("gated", "local_only", "always_recall")

CSV_COLUMNS = (
    "delta",
    "recall_at_k",
    "answer_accuracy",
    "mean_sim_ops",
    "recall_trigger_rate",
    "mean_wall_ms",
)


@dataclass(frozen=True)
class StreamConfig:
    """Shape of one generated stream.

    Attributes:
        n_frames: total frames, >= 1.
        n_events: event count, 1 <= n_events <= min(n_frames, dim).
        dim: embedding dimension, >= 2 (centroids are orthonormal, so
            they also need n_events <= dim).
        tokens_per_frame: tokens per frame and per query, >= 1.
        noise_sigma: isotropic token noise scale, >= 0.
        n_queries: queries to plant, >= 0.
        query_horizon: "current", "past", or "mixed".
        seed: generator seed, >= 0.
    """

    n_frames: int = 500
    n_events: int = 8
    dim: int = 32
    tokens_per_frame: int = 8
    noise_sigma: float = 0.3
    n_queries: int = 100
    query_horizon: str = "mixed"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.n_events < 1 or self.n_events > self.n_frames:
            raise ConfigError(
                f"n_events must be in [1, n_frames], got {self.n_events} "
                f"with n_frames={self.n_frames}"
            )
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.n_events > self.dim:
            raise ConfigError(
                f"n_events must be <= dim for orthonormal centroids, got "
                f"{self.n_events} > {self.dim}"
            )
        if self.tokens_per_frame < 1:
            raise ConfigError(
                f"tokens_per_frame must be >= 1, got {self.tokens_per_frame}"
            )
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0.0:
            raise ConfigError(
                f"noise_sigma must be finite and >= 0, got {self.noise_sigma}"
            )
        if self.n_queries < 0:
            raise ConfigError(f"n_queries must be >= 0, got {self.n_queries}")
        if self.query_horizon not in HORIZONS:
            raise ConfigError(
                f"query_horizon must be one of {HORIZONS}, got "
                f"{self.query_horizon!r}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        wants_past = self.query_horizon in ("past", "mixed") and self.n_queries > 0
        if wants_past and self.n_events < 3:
            raise ConfigError(
                "past-horizon queries need n_events >= 3 (a block to stand "
                "on, a previous block, and an older target)"
            )


@dataclass(frozen=True)
class SimFrame:
    t: float
    tokens: np.ndarray
    label: str


@dataclass(frozen=True)
class SimQuery:
    qid: int
    issue_after_frame: int
    horizon: str
    target_event: int
    tokens: np.ndarray
    relevant: tuple[int, ...]


@dataclass(frozen=True)
class StreamData:
    """A generated stream plus its planted queries."""

    config: StreamConfig
    frames: tuple[SimFrame, ...]
    options: np.ndarray
    queries: tuple[SimQuery, ...]
    block_bounds: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class EpisodeMetrics:
    """Aggregates of one replayed episode; the CSV row columns.

    mean_sim_ops is exactly sum(per-query sim_ops_total) / n_queries.
    recall_at_k averages over queries whose gate recalled (0.0 when
    none did). wall time is informational and not deterministic.
    """

    delta: float
    recall_at_k: float
    answer_accuracy: float
    mean_sim_ops: float
    recall_trigger_rate: float
    mean_wall_ms: float


@dataclass(frozen=True)
class QueryOutcome:
    query: SimQuery
    trace: AnswerTrace
    correct: bool
    recall_at_k: float | None


@dataclass(frozen=True)
class EpisodeResult:
    metrics: EpisodeMetrics
    outcomes: tuple[QueryOutcome, ...]


def _orthonormal_centroids(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    gauss = rng.standard_normal((dim, dim))
    q_mat, r_mat = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r_mat))
    signs[signs == 0.0] = 1.0
    q_mat = q_mat * signs
    out = np.ascontiguousarray(q_mat[:, :n].T)
    out.setflags(write=False)
    return out


def _block_lengths(rng: np.random.Generator, cfg: StreamConfig) -> np.ndarray:
    floor = max(1, cfg.n_frames // (4 * cfg.n_events))
    extra = cfg.n_frames - floor * cfg.n_events
    lengths = np.full(cfg.n_events, floor, dtype=np.int64)
    if extra > 0:
        lengths = lengths + rng.multinomial(
            extra, np.full(cfg.n_events, 1.0 / cfg.n_events)
        )
    return lengths


def generate_stream(cfg: StreamConfig) -> StreamData:
    """Build a stream and its planted queries from one seed.

    The generator is consumed in a fixed order (centroids, block
    lengths, frame noise, then queries), so equal configs produce
    byte-identical serializations.
    """
    rng = np.random.default_rng(cfg.seed)
    centroids = _orthonormal_centroids(rng, cfg.n_events, cfg.dim)
    lengths = _block_lengths(rng, cfg)

    starts = np.zeros(cfg.n_events, dtype=np.int64)
    np.cumsum(lengths[:-1], out=starts[1:])
    bounds = tuple(
        (int(starts[b]), int(starts[b] + lengths[b] - 1))
        for b in range(cfg.n_events)
    )

    frames: list[SimFrame] = []
    for b in range(cfg.n_events):
        for _ in range(int(lengths[b])):
            tokens = centroids[b] + cfg.noise_sigma * rng.standard_normal(
                (cfg.tokens_per_frame, cfg.dim)
            )
            tokens.setflags(write=False)
            frames.append(
                SimFrame(t=float(len(frames)), tokens=tokens, label=f"event:{b}")
            )

    queries: list[SimQuery] = []
    for qid in range(cfg.n_queries):
        if cfg.query_horizon == "mixed":
            horizon = "current" if qid % 2 == 0 else "past"
        else:
            horizon = cfg.query_horizon
        if horizon == "current":
            target = int(rng.integers(0, cfg.n_events))
            issue = bounds[target][1]
        else:
            v = int(rng.integers(2, cfg.n_events))
            o_max = int(min(3, lengths[v] - 1))
            offset = int(rng.integers(0, o_max + 1))
            issue = bounds[v][0] + offset
            target = int(rng.integers(0, v - 1))
        tokens = centroids[target] + cfg.noise_sigma * rng.standard_normal(
            (cfg.tokens_per_frame, cfg.dim)
        )
        tokens.setflags(write=False)
        queries.append(
            SimQuery(
                qid=qid,
                issue_after_frame=issue,
                horizon=horizon,
                target_event=target,
                tokens=tokens,
                relevant=tuple(range(bounds[target][0], bounds[target][1] + 1)),
            )
        )

    return StreamData(
        config=cfg,
        frames=tuple(frames),
        options=centroids,
        queries=tuple(queries),
        block_bounds=bounds,
    )


def delta_for_policy(policy: str, cfg: RunConfig) -> float:
    """Resolve a policy name to its gate threshold.

    local_only is the +inf sentinel (never recall), always_recall is 0
    (the gate fires on every query), gated uses cfg.delta.
    """
    if policy == "gated":
        return cfg.delta
    if policy == "local_only":
        return math.inf
    if policy == "always_recall":
        return 0.0
    raise InvalidParameterError(
        f"policy must be one of {POLICIES}, got {policy!r}"
    )


def _min_labeled_run(frames: Sequence[SimFrame]) -> int | None:
    """Shortest same-label run, for the window-vs-block sanity warning."""
    best: int | None = None
    run = 0
    prev: str | None = None
    for f in frames:
        if f.label is None:
            return None
        if f.label == prev:
            run += 1
        else:
            if prev is not None:
                best = run if best is None else min(best, run)
            prev = f.label
            run = 1
    if prev is not None:
        best = run if best is None else min(best, run)
    return best


def run_episode_detailed(
    stream: StreamData,
    policy: str,
    cfg: RunConfig,
) -> EpisodeResult:
    """Replay a stream, answering each query the moment it is issued.

    Frames are appended in order; a query with issue_after_frame = p is
    answered right after frame p lands, so it can only ever see frames
    0..p. Replay itself draws no randomness.
    """
    delta = delta_for_policy(policy, cfg)
    eff_cfg = replace(cfg, delta=delta)
    n_frames = len(stream.frames)
    if n_frames == 0:
        raise EmptyInputError("cannot replay an empty stream")
    for q in stream.queries:
        if not (0 <= q.issue_after_frame < n_frames):
            raise InvalidParameterError(
                f"query {q.qid} issued after frame {q.issue_after_frame}, "
                f"stream has {n_frames}"
            )

    shortest = _min_labeled_run(stream.frames)
    if shortest is not None and cfg.window_c > shortest + 1:
        logger.warning(
            "window_c=%d exceeds the shortest event block (%d frames); "
            "past-horizon planting may leak into the window",
            cfg.window_c,
            shortest,
        )

    answerer = MockAnswerer(tau=cfg.tau)
    options = as_options_matrix(stream.options)
    buf = MemoryBuffer(window_c=cfg.window_c, dim=stream.config.dim)

    order = sorted(
        range(len(stream.queries)),
        key=lambda i: (stream.queries[i].issue_after_frame, i),
    )
    outcomes_by_qid: dict[int, QueryOutcome] = {}
    cursor = 0
    for idx, frame in enumerate(stream.frames):
        buf.append(frame.t, frame.tokens, frame.label)
        while (
            cursor < len(order)
            and stream.queries[order[cursor]].issue_after_frame == idx
        ):
            q = stream.queries[order[cursor]]
            trace = answer_query(
                buf,
                QueryRecord.from_tokens(q.tokens),
                options,
                eff_cfg,
                answerer,
            )
            rak: float | None = None
            if trace.retrieved is not None:
                hit = len(set(trace.retrieved.frame_ids()) & set(q.relevant))
                rak = hit / min(len(q.relevant), eff_cfg.k)
            outcomes_by_qid[q.qid] = QueryOutcome(
                query=q,
                trace=trace,
                correct=trace.chosen_option == q.target_event,
                recall_at_k=rak,
            )
            cursor += 1

    outcomes = tuple(outcomes_by_qid[q.qid] for q in stream.queries)
    n = len(outcomes)
    recalled = [o for o in outcomes if o.recall_at_k is not None]
    sum_rak = 0.0
    for o in recalled:
        sum_rak += o.recall_at_k  # type: ignore[operator]
    total_ops = 0
    correct = 0
    wall = 0.0
    for o in outcomes:
        total_ops += o.trace.sim_ops_total
        correct += 1 if o.correct else 0
        wall += o.trace.wall_ms
    metrics = EpisodeMetrics(
        delta=delta,
        recall_at_k=sum_rak / len(recalled) if recalled else 0.0,
        answer_accuracy=correct / n if n else 0.0,
        mean_sim_ops=total_ops / n if n else 0.0,
        recall_trigger_rate=len(recalled) / n if n else 0.0,
        mean_wall_ms=wall / n if n else 0.0,
    )
    return EpisodeResult(metrics=metrics, outcomes=outcomes)


def run_episode(stream: StreamData, policy: str, cfg: RunConfig) -> EpisodeMetrics:
    return run_episode_detailed(stream, policy, cfg).metrics


def sweep_threshold(
    stream: StreamData,
    deltas: Sequence[float],
    cfg: RunConfig,
) -> list[EpisodeMetrics]:
    """Replay the same stream once per threshold with the gated policy.

    The local pass does not depend on the threshold, so the set of
    recalling queries can only shrink as delta grows; mean_sim_ops is
    therefore non-increasing across an ascending sweep. Episodes run in
    a thread pool when WEAVECACHE_THREADS is above 1; results keep the
    given delta order either way.

    Raises:
        EmptyInputError: no thresholds.
        InvalidParameterError: a threshold is negative or NaN.
    """
    if len(deltas) == 0:
        raise EmptyInputError("sweep needs at least one delta")
    clean: list[float] = []
    for d in deltas:
        dv = float(d)
        if math.isnan(dv) or dv < 0.0:
            raise InvalidParameterError(f"delta must be >= 0 nats, got {d!r}")
        clean.append(dv)

    def one(delta: float) -> EpisodeMetrics:
        return run_episode(stream, "gated", replace(cfg, delta=delta))

    workers = threads_from_env()
    if workers > 1 and len(clean) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, clean))
    return [one(d) for d in clean]


# --- wire formats ----------------------------------------------------------


def _float_cell(x: float) -> str:
    return repr(float(x))


def metrics_to_csv(rows: Iterable[EpisodeMetrics]) -> str:
    """Render metrics as CSV (header + one line per row)."""
    out = [",".join(CSV_COLUMNS)]
    for m in rows:
        out.append(
            ",".join(
                _float_cell(getattr(m, col)) for col in CSV_COLUMNS
            )
        )
    return "\n".join(out) + "\n"


def stream_jsonl_lines(stream: StreamData) -> list[str]:
    """Frame lines in the memory module's stream format."""
    return [
        frame_to_json_line(f.t, f.tokens.tolist(), f.label)
        for f in stream.frames
    ]


def query_header_line(options: np.ndarray) -> str:
    obj = {
        "kind": "header",
        "options": [[float(x) for x in row] for row in options],
    }
    return json.dumps(obj, separators=(",", ":"))


def query_to_json_line(q: SimQuery) -> str:
    obj = {
        "kind": "query",
        "id": q.qid,
        "issue_after_frame": q.issue_after_frame,
        "horizon": q.horizon,
        "target_event": q.target_event,
        "relevant": list(q.relevant),
        "tokens": [[float(x) for x in row] for row in q.tokens],
    }
    return json.dumps(obj, separators=(",", ":"))


def queries_jsonl_lines(stream: StreamData) -> list[str]:
    """Header line with the option embeddings, then one line per query."""
    lines = [query_header_line(stream.options)]
    lines.extend(query_to_json_line(q) for q in stream.queries)
    return lines


def write_stream_files(
    stream: StreamData,
    stream_path: Union[str, Path],
    queries_path: Union[str, Path],
) -> None:
    with open(stream_path, "w", encoding="utf-8") as fp:
        for line in stream_jsonl_lines(stream):
            fp.write(line)
            fp.write("\n")
    with open(queries_path, "w", encoding="utf-8") as fp:
        for line in queries_jsonl_lines(stream):
            fp.write(line)
            fp.write("\n")


def _require(cond: bool, lineno: int, msg: str) -> None:
    if not cond:
        raise StreamFormatError(f"line {lineno}: {msg}")


def parse_query_lines(
    lines: Iterable[str],
) -> tuple[np.ndarray, list[SimQuery]]:
    """Parse queries-file lines; returns (options, queries).

    The first non-blank line must be the header carrying the option
    embeddings.
    """
    options: np.ndarray | None = None
    queries: list[SimQuery] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise StreamFormatError(f"line {lineno}: invalid JSON: {e}") from e
        _require(isinstance(obj, dict), lineno, "expected an object")
        kind = obj.get("kind")
        if options is None:
            _require(
                kind == "header",
                lineno,
                "first line must be the options header",
            )
            opts = obj.get("options")
            _require(
                isinstance(opts, list) and len(opts) > 0,
                lineno,
                "'options' must be a nonempty list of vectors",
            )
            try:
                options = as_options_matrix(opts)
            except (TypeError, ValueError) as e:
                raise StreamFormatError(f"line {lineno}: bad options: {e}") from e
            continue
        _require(kind == "query", lineno, "expected a query object")
        try:
            tokens = np.asarray(obj["tokens"], dtype=np.float64)
            if tokens.ndim != 2:
                raise ValueError("tokens must be a list of vectors")
            tokens.setflags(write=False)
            q = SimQuery(
                qid=int(obj["id"]),
                issue_after_frame=int(obj["issue_after_frame"]),
                horizon=str(obj["horizon"]),
                target_event=int(obj["target_event"]),
                tokens=tokens,
                relevant=tuple(int(x) for x in obj["relevant"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise StreamFormatError(f"line {lineno}: bad query: {e}") from e
        queries.append(q)
    if options is None:
        raise StreamFormatError("queries file has no header line")
    return options, queries


def read_queries_jsonl(
    path: Union[str, Path],
) -> tuple[np.ndarray, list[SimQuery]]:
    """Read a queries file; returns (options, queries)."""
    with open(path, "r", encoding="utf-8") as fp:
        return parse_query_lines(fp)


def stream_from_lines(
    stream_lines: Iterable[str],
    query_lines: Iterable[str],
    cfg: StreamConfig | None = None,
) -> StreamData:
    """Rebuild StreamData from stream-file and queries-file lines.

    ``cfg`` is only an annotation here (replay never consults it beyond
    the embedding dim, which is taken from the frames); when omitted a
    minimal placeholder describing the loaded shapes is attached.
    """
    frames: list[SimFrame] = []
    for t, tokens, label in read_frame_lines(stream_lines):
        arr = np.asarray(tokens, dtype=np.float64)
        arr.setflags(write=False)
        frames.append(SimFrame(t=t, tokens=arr, label=label or ""))
    if not frames:
        raise StreamFormatError("stream file has no frames")
    options, queries = parse_query_lines(query_lines)
    dim = frames[0].tokens.shape[1]
    if options.shape[1] != dim:
        raise StreamFormatError(
            f"options dim {options.shape[1]} does not match stream dim {dim}"
        )
    if cfg is None:
        # Annotation only; clamp so the placeholder never fails validation.
        cfg = StreamConfig(
            n_frames=len(frames),
            n_events=max(1, min(int(options.shape[0]), int(dim), len(frames))),
            dim=int(dim),
            tokens_per_frame=int(frames[0].tokens.shape[0]),
            noise_sigma=0.0,
            n_queries=len(queries),
            query_horizon="current",
            seed=0,
        )
    bounds: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(frames) + 1):
        if i == len(frames) or frames[i].label != frames[start].label:
            bounds.append((start, i - 1))
            start = i
    return StreamData(
        config=cfg,
        frames=tuple(frames),
        options=options,
        queries=tuple(queries),
        block_bounds=tuple(bounds),
    )


def load_stream_files(
    stream_path: Union[str, Path],
    queries_path: Union[str, Path],
    cfg: StreamConfig | None = None,
) -> StreamData:
    """Rebuild StreamData from a stream file and its queries file."""
    with open(stream_path, "r", encoding="utf-8") as fp:
        stream_lines = fp.readlines()
    with open(queries_path, "r", encoding="utf-8") as fp:
        query_lines = fp.readlines()
    return stream_from_lines(stream_lines, query_lines, cfg)
