"""Temporal reconstruction tasks over shuffled segments.

The transform keeps slot timestamps in chronological order while the
contents are permuted uniformly at random: slot i keeps the i-th
segment's start time but displays segment pi[i]. A model solving the
task must state, for each slot, the true time range of the content it
shows. The true range of segment i runs from its first frame's
timestamp to the next segment's start; the final segment closes at the
stream's last timestamp.

Scoring compares predicted ranges to the target after rounding both to
3 decimals (exact-match fraction) and reports Kendall's tau between the
orderings the predicted and true start times induce over the slots.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidParameterError,
    ShapeError,
    StreamFormatError,
    TimeOrderError,
)

__all__ = [
    "REORDER_INSTRUCTION",
    "Segment",
    "SegmentSequence",
    "ReorderTarget",
    "OverlapScore",
    "ReorderExample",
    "interleave",
    "segment_ranges",
    "shuffle_with_timestamps",
    "build_reorder_prompt",
    "make_reorder_example",
    "score_reorder",
    "kendall_tau",
    "score_histogram",
    "example_to_json_obj",
    "write_examples_jsonl",
    "read_examples_jsonl",
    "read_predictions_jsonl",
]

# First line of every reorder prompt. Downstream consumers key on this
# exact sentence; do not edit it.
REORDER_INSTRUCTION = (
    "These video segments are shuffled. List each segment's true time range."
)

ROUND_DECIMALS = 3


def _timestamps_of(frames: Sequence) -> list[float]:
    out = []
    for f in frames:
        ts = f.timestamp_s if hasattr(f, "timestamp_s") else float(f)
        out.append(float(ts))
    return out


@dataclass(frozen=True)
class Segment:
    """One slot of a shuffled sequence.

    Attributes:
        slot_index: position in presentation order.
        slot_timestamp_s: the chronological start time this slot keeps.
        content_frame_id: which segment's content this slot displays.
    """

    slot_index: int
    slot_timestamp_s: float
    content_frame_id: int


@dataclass(frozen=True)
class SegmentSequence:
    """A shuffled presentation: chronological slots, permuted contents.

    Invariants: slot timestamps strictly increase; content ids form a
    permutation of 0..n-1.
    """

    slots: tuple[Segment, ...]

    def __len__(self) -> int:
        return len(self.slots)

    def pi(self) -> tuple[int, ...]:
        """pi[i] is the segment whose content slot i displays."""
        return tuple(s.content_frame_id for s in self.slots)


@dataclass(frozen=True)
class ReorderTarget:
    """Ground truth: slot i's content truly spans true_time_of_slot[i]."""

    true_time_of_slot: tuple[tuple[float, float], ...]

    def __len__(self) -> int:
        return len(self.true_time_of_slot)


@dataclass(frozen=True)
class OverlapScore:
    """Reconstruction quality for one example.

    Attributes:
        exact_match_fraction: fraction of slots whose predicted range
            equals the target after rounding to 3 decimals.
        kendall_tau: rank correlation (tau-b) between predicted and true
            start-time orderings; 1.0 by convention below 2 slots, 0.0
            when a side is entirely tied.
    """

    exact_match_fraction: float
    kendall_tau: float


@dataclass(frozen=True)
class ReorderExample:
    """One training/eval example produced by the shuffle transform."""

    sequence: SegmentSequence
    pi: tuple[int, ...]
    prompt: str
    target: ReorderTarget


def interleave(frames: Sequence) -> tuple:
    """Lay frames out as (t_0, f_0, t_1, f_1, ...), 2 slots per frame.

    Args:
        frames: nonempty, chronologically ordered (non-decreasing
            timestamps; FrameRecords or bare timestamps).

    Raises:
        EmptyInputError: no frames.
        TimeOrderError: timestamps decrease.
    """
    if len(frames) == 0:
        raise EmptyInputError("interleave of zero frames")
    ts = _timestamps_of(frames)
    for i in range(1, len(ts)):
        if ts[i] < ts[i - 1]:
            raise TimeOrderError(
                f"frames not chronological: {ts[i]} after {ts[i - 1]}"
            )
    out: list = []
    for t, f in zip(ts, frames):
        out.append(t)
        out.append(f)
    return tuple(out)


def segment_ranges(
    timestamps: Sequence[float], group_size: int = 1
) -> tuple[tuple[float, float], ...]:
    """True time ranges of consecutive groups of ``group_size`` frames.

    Segment s starts at its first frame's timestamp and ends where the
    next segment starts; the final segment ends at the last timestamp.

    Raises:
        EmptyInputError: no timestamps.
        InvalidParameterError: group_size < 1.
        TimeOrderError: timestamps are not strictly increasing (ranges
            would collapse or overlap ambiguously).
    """
    if group_size < 1:
        raise InvalidParameterError(f"group_size must be >= 1, got {group_size}")
    ts = _timestamps_of(timestamps)
    if not ts:
        raise EmptyInputError("segment_ranges of zero frames")
    for i in range(1, len(ts)):
        if ts[i] <= ts[i - 1]:
            raise TimeOrderError(
                f"timestamps must strictly increase: {ts[i]} after {ts[i - 1]}"
            )
    starts = [ts[i] for i in range(0, len(ts), group_size)]
    ranges = []
    for s in range(len(starts)):
        end = starts[s + 1] if s + 1 < len(starts) else ts[-1]
        ranges.append((starts[s], end))
    return tuple(ranges)


def shuffle_with_timestamps(
    frames: Sequence,
    seed: int,
    group_size: int = 1,
) -> tuple[SegmentSequence, tuple[int, ...]]:
    """Shuffle segment contents while slot timestamps stay chronological.

    Args:
        frames: nonempty frames (or bare timestamps), strictly
            increasing in time.
        seed: permutation seed; the same seed always yields the same pi.
        group_size: frames per segment, >= 1. The tail segment may be
            shorter.

    Returns:
        (sequence, pi) where pi[i] is the segment slot i displays. pi is
        drawn uniformly from the symmetric group.
    """
    ranges = segment_ranges(frames, group_size)
    n = len(ranges)
    rng = np.random.default_rng(seed)
    pi = tuple(int(x) for x in rng.permutation(n))
    slots = tuple(
        Segment(
            slot_index=i,
            slot_timestamp_s=ranges[i][0],
            content_frame_id=pi[i],
        )
        for i in range(n)
    )
    return SegmentSequence(slots=slots), pi


def build_reorder_prompt(
    seq: SegmentSequence,
    frames: Sequence | None = None,
    group_size: int = 1,
) -> tuple[str, ReorderTarget]:
    """Render the reorder prompt and its ground-truth target.

    The prompt's first line is ``REORDER_INSTRUCTION`` verbatim. When
    the original frames are given the target ranges are derived from
    them; otherwise slot timestamps themselves bound the ranges (the
    group_size=1 case, where slot starts are the frame timestamps).

    Returns:
        (prompt_text, target) where target.true_time_of_slot[i] is the
        original range of the content shown in slot i.
    """
    if len(seq) == 0:
        raise EmptyInputError("prompt over zero slots")
    if frames is not None:
        ranges = segment_ranges(frames, group_size)
    else:
        starts = [s.slot_timestamp_s for s in seq.slots]
        ranges = tuple(
            (starts[i], starts[i + 1] if i + 1 < len(starts) else starts[-1])
            for i in range(len(starts))
        )
    if len(ranges) != len(seq):
        raise ShapeError(
            f"{len(seq)} slots but {len(ranges)} segments from the frames"
        )
    pi = seq.pi()
    lines = [REORDER_INSTRUCTION]
    for slot in seq.slots:
        lines.append(
            f"Slot {slot.slot_index} (t={slot.slot_timestamp_s!r}s): "
            f"segment {slot.content_frame_id}"
        )
    lines.append("Answer with one start,end pair per slot.")
    target = ReorderTarget(true_time_of_slot=tuple(ranges[p] for p in pi))
    return "\n".join(lines), target


def make_reorder_example(
    frames: Sequence,
    seed: int,
    group_size: int = 1,
) -> ReorderExample:
    """Shuffle frames and package prompt, permutation, and target."""
    seq, pi = shuffle_with_timestamps(frames, seed, group_size)
    prompt, target = build_reorder_prompt(seq, frames=frames, group_size=group_size)
    return ReorderExample(sequence=seq, pi=pi, prompt=prompt, target=target)


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall's tau-b between two equal-length value sequences.

    Returns 1.0 for fewer than two items (no pair can disagree) and 0.0
    when either side is entirely tied.

    Raises:
        ShapeError: length mismatch.
    """
    if len(x) != len(y):
        raise ShapeError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        return 1.0
    conc = disc = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0:
                ties_x += 1
            if dy == 0:
                ties_y += 1
            prod = dx * dy
            if prod > 0:
                conc += 1
            elif prod < 0:
                disc += 1
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0.0:
        return 0.0
    return (conc - disc) / denom


def _rounded(r: Sequence[float]) -> tuple[float, float]:
    return (round(float(r[0]), ROUND_DECIMALS), round(float(r[1]), ROUND_DECIMALS))


def score_reorder(
    predicted_ranges: Sequence[Sequence[float]],
    target: Union[ReorderTarget, Sequence[Sequence[float]]],
) -> OverlapScore:
    """Score predicted per-slot time ranges against the ground truth.

    Args:
        predicted_ranges: one (start_s, end_s) pair per slot.
        target: the ReorderTarget (or raw pairs) to compare against.

    Raises:
        ShapeError: slot counts differ or a range is not a pair.
    """
    truth = (
        target.true_time_of_slot
        if isinstance(target, ReorderTarget)
        else tuple(tuple(map(float, r)) for r in target)
    )
    if len(predicted_ranges) != len(truth):
        raise ShapeError(
            f"predicted {len(predicted_ranges)} ranges for {len(truth)} slots"
        )
    if len(truth) == 0:
        raise EmptyInputError("scoring zero slots")
    for r in predicted_ranges:
        if len(r) != 2:
            raise ShapeError(f"a range must be a (start, end) pair, got {r!r}")
    matches = 0
    for pred, true in zip(predicted_ranges, truth):
        if _rounded(pred) == _rounded(true):
            matches += 1
    tau = kendall_tau(
        [float(r[0]) for r in truth],
        [float(r[0]) for r in predicted_ranges],
    )
    return OverlapScore(
        exact_match_fraction=matches / len(truth),
        kendall_tau=tau,
    )


def score_histogram(
    values: Sequence[float], n_bins: int = 10
) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Histogram of scores over [0, 1]; the last bin is closed above.

    Returns:
        (bin_edges, counts) with n_bins + 1 edges.
    """
    if n_bins < 1:
        raise InvalidParameterError(f"n_bins must be >= 1, got {n_bins}")
    edges = tuple(i / n_bins for i in range(n_bins + 1))
    counts = [0] * n_bins
    for v in values:
        idx = min(int(float(v) * n_bins), n_bins - 1)
        idx = max(idx, 0)
        counts[idx] += 1
    return edges, tuple(counts)


# --- JSONL export ----------------------------------------------------------


def example_to_json_obj(example: ReorderExample) -> dict:
    """Canonical JSON object for one example (stable key order)."""
    return {
        "slots": [
            {"slot_ts": s.slot_timestamp_s, "content_frame": s.content_frame_id}
            for s in example.sequence.slots
        ],
        "prompt": example.prompt,
        "target_ranges": [
            [a, b] for a, b in example.target.true_time_of_slot
        ],
        "pi": list(example.pi),
    }


def write_examples_jsonl(
    path: Union[str, Path], examples: Iterable[ReorderExample]
) -> int:
    """Write examples one JSON object per line. Returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fp:
        for ex in examples:
            fp.write(json.dumps(example_to_json_obj(ex), separators=(",", ":")))
            fp.write("\n")
            n += 1
    return n


def _parse_ranges(obj, key: str, lineno: int) -> tuple[tuple[float, float], ...]:
    ranges = obj.get(key)
    if not isinstance(ranges, list) or not ranges:
        raise StreamFormatError(
            f"line {lineno}: '{key}' must be a nonempty list of [start, end] pairs"
        )
    out = []
    for r in ranges:
        if not isinstance(r, list) or len(r) != 2:
            raise StreamFormatError(
                f"line {lineno}: each range must be a [start, end] pair"
            )
        out.append((float(r[0]), float(r[1])))
    return tuple(out)


def read_examples_jsonl(path: Union[str, Path]) -> list[dict]:
    """Read exported examples; returns dicts with parsed target ranges.

    Each dict has keys "target_ranges" (tuple of pairs) and, when
    present in the file, "pi", "slots", and "prompt".
    """
    out = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, raw in enumerate(fp, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise StreamFormatError(f"line {lineno}: invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise StreamFormatError(f"line {lineno}: expected an object")
            parsed = dict(obj)
            parsed["target_ranges"] = _parse_ranges(obj, "target_ranges", lineno)
            out.append(parsed)
    return out


def read_predictions_jsonl(path: Union[str, Path]) -> list[tuple[tuple[float, float], ...]]:
    """Read predictions: one {"ranges": [[start, end], ...]} per line."""
    out = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, raw in enumerate(fp, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise StreamFormatError(f"line {lineno}: invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise StreamFormatError(f"line {lineno}: expected an object")
            out.append(_parse_ranges(obj, "ranges", lineno))
    return out
