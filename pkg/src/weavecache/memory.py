"""Append-only frame memory with a bounded local window.

Frames arrive in timestamp order and are never evicted or rewritten.
``local_window`` exposes the most recent ``window_c`` frames, which is
what a low-latency answer path is allowed to look at. ``snapshot``
returns an immutable view of everything appended so far, for retrieval
to scan while a writer keeps appending (single writer, many readers:
appends must come from one thread, snapshots and reads may come from
any).

The line format for stream files is JSONL, one frame per line:

    {"t": <seconds>, "tokens": [[...], ...], "label": "<optional tag>"}

``label`` is a ground-truth tag carried for evaluation; nothing in the
retrieval path reads it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .core import exact_mean
from .errors import (
    DimensionError,
    EmptyInputError,
    StreamFormatError,
    TimeOrderError,
)

__all__ = [
    "FrameRecord",
    "MemoryBuffer",
    "MemorySnapshot",
    "DEFAULT_WINDOW_C",
    "pool_tokens",
    "as_token_matrix",
    "frame_to_json_line",
    "read_frame_lines",
    "write_stream_jsonl",
    "load_stream_jsonl",
]

DEFAULT_WINDOW_C = 64


def as_token_matrix(tokens: Sequence[Sequence[float]]) -> np.ndarray:
    """Validate and convert one frame's tokens to a read-only float matrix.

    Args:
        tokens: nonempty sequence of same-dimension vectors.

    Returns:
        Array of shape (n_tokens, dim) with the writeable flag cleared.

    Raises:
        EmptyInputError: no tokens.
        DimensionError: ragged rows, empty rows, or a non-2d input.
        ValueError: non-finite entries.
    """
    if isinstance(tokens, np.ndarray):
        if tokens.ndim != 2:
            raise DimensionError(
                f"token matrix must be 2-d, got {tokens.ndim}-d"
            )
        if tokens.shape[0] == 0:
            raise EmptyInputError("frame must carry at least one token")
        if tokens.shape[1] == 0:
            raise DimensionError("tokens must have dim >= 1")
        arr = tokens.astype(np.float64, copy=True)
    else:
        rows = list(tokens)
        if len(rows) == 0:
            raise EmptyInputError("frame must carry at least one token")
        dim = len(rows[0])
        if dim == 0:
            raise DimensionError("tokens must have dim >= 1")
        for r in rows:
            if len(r) != dim:
                raise DimensionError(
                    f"ragged token dims: {len(r)} vs {dim}"
                )
        arr = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("token entries must be finite")
    arr.setflags(write=False)
    return arr


def pool_tokens(tokens: np.ndarray) -> np.ndarray:
    """Column-wise exactly-rounded mean of a token matrix.

    Shares its arithmetic with :func:`weavecache.core.mean_pool`, so a
    frame's pooled key and the scalar-path pool of the same tokens are
    equal bit for bit.
    """
    pooled = np.array(
        [exact_mean([float(x) for x in tokens[:, j]]) for j in range(tokens.shape[1])],
        dtype=np.float64,
    )
    pooled.setflags(write=False)
    return pooled


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One immutable frame.

    Attributes:
        frame_id: dense index, assigned 0, 1, 2, ... in append order.
        timestamp_s: capture time in seconds, non-decreasing across frames.
        token_keys: read-only (n_tokens, dim) matrix of token embeddings.
        pooled_key: read-only (dim,) mean of token_keys, exactly rounded.
        label: optional ground-truth tag, never read by retrieval.
    """

    frame_id: int
    timestamp_s: float
    token_keys: np.ndarray
    pooled_key: np.ndarray
    label: str | None = None

    @property
    def n_tokens(self) -> int:
        return int(self.token_keys.shape[0])

    @property
    def dim(self) -> int:
        return int(self.token_keys.shape[1])


class MemorySnapshot(Sequence[FrameRecord]):
    """Immutable view of the frames present when the snapshot was taken.

    Pooled keys and their norms are exposed as cached matrices so the
    coarse retrieval pass is one matrix-vector product.
    """

    def __init__(self, frames: tuple[FrameRecord, ...]):
        self._frames = frames
        self._pooled_matrix: np.ndarray | None = None
        self._pooled_norms: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._frames)

    def __getitem__(self, idx):  # type: ignore[override]
        return self._frames[idx]

    def __iter__(self) -> Iterator[FrameRecord]:
        return iter(self._frames)

    @property
    def frames(self) -> tuple[FrameRecord, ...]:
        return self._frames

    def pooled_matrix(self) -> np.ndarray:
        """(n, dim) matrix of pooled keys, row i belongs to frame_id i."""
        if self._pooled_matrix is None:
            mat = np.vstack([f.pooled_key for f in self._frames])
            mat.setflags(write=False)
            self._pooled_matrix = mat
        return self._pooled_matrix

    def pooled_norms(self) -> np.ndarray:
        if self._pooled_norms is None:
            norms = np.linalg.norm(self.pooled_matrix(), axis=1)
            norms.setflags(write=False)
            self._pooled_norms = norms
        return self._pooled_norms


class MemoryBuffer:
    """Append-only store of frames plus the local window over its tail.

    Args:
        window_c: local window capacity C, >= 1.
        dim: embedding dimension; inferred from the first append when
            omitted.
    """

    def __init__(self, window_c: int = DEFAULT_WINDOW_C, dim: int | None = None):
        if window_c < 1:
            raise ValueError(f"window_c must be >= 1, got {window_c}")
        if dim is not None and dim < 1:
            raise DimensionError(f"dim must be >= 1, got {dim}")
        self.window_c = int(window_c)
        self._dim = None if dim is None else int(dim)
        self._frames: list[FrameRecord] = []

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def last_timestamp_s(self) -> float | None:
        return self._frames[-1].timestamp_s if self._frames else None

    def append(
        self,
        timestamp_s: float,
        token_keys: Sequence[Sequence[float]],
        label: str | None = None,
    ) -> FrameRecord:
        """Append one frame; frames are immutable once stored.

        Equal timestamps are allowed, regressions are not.

        Raises:
            TimeOrderError: timestamp_s is behind the newest frame, or
                not finite.
            DimensionError: token dims disagree with the buffer.
            EmptyInputError: no tokens.
        """
        ts = float(timestamp_s)
        if not math.isfinite(ts):
            raise TimeOrderError(f"timestamp must be finite, got {ts!r}")
        if self._frames and ts < self._frames[-1].timestamp_s:
            raise TimeOrderError(
                f"timestamp regression: {ts} after "
                f"{self._frames[-1].timestamp_s}"
            )
        tokens = as_token_matrix(token_keys)
        if self._dim is None:
            self._dim = int(tokens.shape[1])
        elif tokens.shape[1] != self._dim:
            raise DimensionError(
                f"frame dim {tokens.shape[1]} does not match buffer dim "
                f"{self._dim}"
            )
        rec = FrameRecord(
            frame_id=len(self._frames),
            timestamp_s=ts,
            token_keys=tokens,
            pooled_key=pool_tokens(tokens),
            label=label,
        )
        self._frames.append(rec)
        return rec

    def local_window(self) -> tuple[FrameRecord, ...]:
        """The last min(C, n) frames in chronological order."""
        if not self._frames:
            return ()
        return tuple(self._frames[-self.window_c:])

    def snapshot(self) -> MemorySnapshot:
        """Immutable view of all frames appended so far."""
        return MemorySnapshot(tuple(self._frames))


# --- JSONL stream files ---------------------------------------------------


def frame_to_json_line(
    timestamp_s: float,
    tokens: Sequence[Sequence[float]],
    label: str | None = None,
) -> str:
    """Serialize one frame to its canonical JSONL line."""
    obj: dict = {
        "t": float(timestamp_s),
        "tokens": [[float(x) for x in row] for row in tokens],
    }
    if label is not None:
        obj["label"] = label
    return json.dumps(obj, separators=(",", ":"))


def read_frame_lines(
    lines: Iterable[str],
) -> Iterator[tuple[float, list[list[float]], str | None]]:
    """Parse stream JSONL lines, yielding (t, tokens, label) per frame.

    Blank lines are skipped. Every parse failure carries the offending
    1-based line number.

    Raises:
        StreamFormatError: malformed JSON or missing/ill-typed fields.
        DimensionError: ragged token dims, with the line number.
    """
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise StreamFormatError(f"line {lineno}: invalid JSON: {e}") from e
        if not isinstance(obj, dict):
            raise StreamFormatError(f"line {lineno}: expected an object")
        if "t" not in obj or "tokens" not in obj:
            raise StreamFormatError(
                f"line {lineno}: missing required keys 't' and 'tokens'"
            )
        t = obj["t"]
        if not isinstance(t, (int, float)) or isinstance(t, bool):
            raise StreamFormatError(f"line {lineno}: 't' must be a number")
        tokens = obj["tokens"]
        if not isinstance(tokens, list) or not tokens:
            raise StreamFormatError(
                f"line {lineno}: 'tokens' must be a nonempty list of vectors"
            )
        dim = None
        for row in tokens:
            if not isinstance(row, list) or not row:
                raise StreamFormatError(
                    f"line {lineno}: each token must be a nonempty list"
                )
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise DimensionError(
                    f"line {lineno}: ragged token dims: {len(row)} vs {dim}"
                )
            for x in row:
                if not isinstance(x, (int, float)) or isinstance(x, bool):
                    raise StreamFormatError(
                        f"line {lineno}: token entries must be numbers"
                    )
                if not math.isfinite(float(x)):
                    raise StreamFormatError(
                        f"line {lineno}: token entries must be finite"
                    )
        label = obj.get("label")
        if label is not None and not isinstance(label, str):
            raise StreamFormatError(f"line {lineno}: 'label' must be a string")
        yield float(t), tokens, label


def write_stream_jsonl(
    path: Union[str, Path],
    frames: Iterable[tuple[float, Sequence[Sequence[float]], str | None]],
) -> int:
    """Write frames to a JSONL stream file. Returns the frame count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fp:
        for t, tokens, label in frames:
            fp.write(frame_to_json_line(t, tokens, label))
            fp.write("\n")
            n += 1
    return n


def load_stream_jsonl(
    path: Union[str, Path],
    window_c: int = DEFAULT_WINDOW_C,
) -> MemoryBuffer:
    """Load a stream file into a fresh MemoryBuffer.

    Raises:
        StreamFormatError, DimensionError: per-line parse failures.
        TimeOrderError: timestamp regression between lines, with the
            line number.
    """
    buf = MemoryBuffer(window_c=window_c)
    with open(path, "r", encoding="utf-8") as fp:
        lineno = 0
        for t, tokens, label in read_frame_lines(fp):
            lineno += 1
            try:
                buf.append(t, tokens, label)
            except TimeOrderError as e:
                raise TimeOrderError(f"frame {lineno}: {e}") from e
    return buf
