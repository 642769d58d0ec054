"""Request and response models for the HTTP service.

JSON has no Infinity literal, so threshold-like fields travel as either
a number or the string "inf" (the never-recall sentinel). Helpers below
convert in both directions; responses never emit a bare non-finite
float.
"""

from __future__ import annotations

import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from ..errors import InvalidParameterError

WireFloat = Union[float, str]


def float_from_wire(value: Union[float, int, str], name: str = "value") -> float:
    """Accept a number or the strings inf/+inf/infinity (any case)."""
    if isinstance(value, bool):
        raise InvalidParameterError(f"{name} must be a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    low = value.strip().lower()
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(low)
    except ValueError as e:
        raise InvalidParameterError(
            f"{name} must be a number or 'inf', got {value!r}"
        ) from e


def float_to_wire(value: float) -> WireFloat:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- sessions ---------------------------------------------------------------


class CreateSessionRequest(StrictModel):
    window_c: int = Field(default=64, ge=1)
    dim: Optional[int] = Field(default=None, ge=1)


class SessionInfo(BaseModel):
    session_id: str
    n_frames: int
    dim: Optional[int]
    window_c: int
    last_timestamp_s: Optional[float]


class SessionList(BaseModel):
    sessions: list[SessionInfo]


class DeleteResponse(BaseModel):
    session_id: str
    deleted: bool


class FrameIn(StrictModel):
    t: float
    tokens: list[list[float]] = Field(min_length=1)
    label: Optional[str] = None


class AppendFramesRequest(StrictModel):
    frames: list[FrameIn] = Field(min_length=1)


class AppendResponse(BaseModel):
    appended: int
    n_frames: int


class WindowFrame(BaseModel):
    frame_id: int
    t: float
    label: Optional[str]
    n_tokens: int


class WindowResponse(BaseModel):
    window_c: int
    frames: list[WindowFrame]


# --- retrieval and answering ------------------------------------------------


class RetrieveRequest(StrictModel):
    tokens: list[list[float]] = Field(min_length=1)
    stage: Literal["coarse", "fine", "c2f"] = "c2f"
    k: int = Field(default=64, ge=1)
    m_coarse: int = Field(default=256, ge=1)


class RetrieveEntry(BaseModel):
    frame_id: int
    score: float


class RetrieveResponse(BaseModel):
    stage: str
    sim_ops: int
    entries: list[RetrieveEntry]


class AnswerRequest(StrictModel):
    tokens: list[list[float]] = Field(min_length=1)
    options: list[list[float]] = Field(min_length=1)
    delta: Optional[WireFloat] = None
    k: Optional[int] = Field(default=None, ge=1)
    m_coarse: Optional[int] = Field(default=None, ge=1)
    tau: Optional[float] = Field(default=None, gt=0)


class RetrievedModel(BaseModel):
    stage: str
    sim_ops: int
    entries: list[list[float]]


class TraceModel(BaseModel):
    v: int
    local_dist: list[float]
    entropy_nats: float
    threshold_nats: WireFloat
    branch: str
    retrieved: Optional[RetrievedModel]
    final_dist: list[float]
    chosen_option: int
    sim_ops_total: int
    wall_ms: float


# --- defaults ---------------------------------------------------------------


class DefaultsResponse(BaseModel):
    window_c: int
    k: int
    m_coarse: int
    delta: WireFloat
    tau: float


class HealthResponse(BaseModel):
    status: str
    version: str


# --- simulation -------------------------------------------------------------


class StreamConfigModel(StrictModel):
    n_frames: int = 500
    n_events: int = 8
    dim: int = 32
    tokens_per_frame: int = 8
    noise_sigma: float = 0.3
    n_queries: int = 100
    query_horizon: Literal["current", "past", "mixed"] = "mixed"
    seed: int = 0


class RunOverrides(StrictModel):
    window_c: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    m_coarse: Optional[int] = Field(default=None, ge=1)
    delta: Optional[WireFloat] = None
    tau: Optional[float] = Field(default=None, gt=0)


class GenerateRequest(StrictModel):
    config: StreamConfigModel = Field(default_factory=StreamConfigModel)


class GenerateResponse(BaseModel):
    n_frames: int
    n_queries: int
    stream_lines: list[str]
    query_lines: list[str]


class SimulateRequest(StrictModel):
    """Run one episode over a generated or uploaded stream.

    Exactly one source: ``config`` to generate in place, or both
    ``stream_lines`` and ``query_lines`` from earlier files.
    """

    config: Optional[StreamConfigModel] = None
    stream_lines: Optional[list[str]] = None
    query_lines: Optional[list[str]] = None
    policy: Literal["gated", "local_only", "always_recall"] = "gated"
    run: RunOverrides = Field(default_factory=RunOverrides)
    include_traces: bool = False


class MetricsModel(BaseModel):
    delta: WireFloat
    recall_at_k: float
    answer_accuracy: float
    mean_sim_ops: float
    recall_trigger_rate: float
    mean_wall_ms: float


class QueryTraceModel(BaseModel):
    qid: int
    horizon: str
    target_event: int
    correct: bool
    recall_at_k: Optional[float]
    trace: TraceModel


class SimulateResponse(BaseModel):
    metrics: MetricsModel
    csv: str
    traces: Optional[list[QueryTraceModel]] = None


class SweepRequest(StrictModel):
    config: Optional[StreamConfigModel] = None
    stream_lines: Optional[list[str]] = None
    query_lines: Optional[list[str]] = None
    deltas: list[WireFloat] = Field(min_length=1)
    run: RunOverrides = Field(default_factory=RunOverrides)


class SweepResponse(BaseModel):
    rows: list[MetricsModel]
    csv: str


# --- temporal reorder -------------------------------------------------------


class ShuffleRequest(StrictModel):
    timestamps: list[float] = Field(min_length=1)
    seed: int = Field(default=0, ge=0)
    group_size: int = Field(default=1, ge=1)
    count: int = Field(default=1, ge=1)


class SlotModel(BaseModel):
    slot_ts: float
    content_frame: int


class ExampleModel(BaseModel):
    slots: list[SlotModel]
    prompt: str
    target_ranges: list[list[float]]
    pi: list[int]


class ShuffleResponse(BaseModel):
    examples: list[ExampleModel]


class ScorePair(StrictModel):
    predicted: list[list[float]] = Field(min_length=1)
    target: list[list[float]] = Field(min_length=1)


class ScoreReorderRequest(StrictModel):
    pairs: list[ScorePair] = Field(min_length=1)
    n_bins: int = Field(default=10, ge=1)


class ScoreModel(BaseModel):
    exact_match_fraction: float
    kendall_tau: float


class HistogramModel(BaseModel):
    edges: list[float]
    counts: list[int]


class ScoreReorderResponse(BaseModel):
    scores: list[ScoreModel]
    mean_exact_match: float
    mean_kendall_tau: float
    histogram: HistogramModel


class ErrorBody(BaseModel):
    error: str
    type: str
