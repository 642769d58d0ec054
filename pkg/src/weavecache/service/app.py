"""FastAPI application exposing the memory stack.

Sessions wrap one MemoryBuffer each and live in process memory; every
session carries its own lock, so concurrent appends and queries against
one session serialize while distinct sessions proceed in parallel.
Domain errors map to 400, unknown sessions to 404; both return
``{"error": ..., "type": ...}`` bodies.

Run it with uvicorn:

    uvicorn weavecache.service.app:app
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import replace

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import DEFAULTS, RunConfig
from ..errors import (
    InvalidParameterError,
    SessionNotFoundError,
    WeavecacheError,
)
from ..memory import MemoryBuffer
from ..pipeline import AnswerTrace, MockAnswerer, answer_query
from ..reorder import example_to_json_obj, make_reorder_example, score_histogram, score_reorder
from ..retrieval import QueryRecord, c2f_load, coarse_load, fine_oracle
from ..simulator import (
    EpisodeMetrics,
    StreamConfig,
    StreamData,
    generate_stream,
    metrics_to_csv,
    queries_jsonl_lines,
    run_episode_detailed,
    stream_from_lines,
    stream_jsonl_lines,
    sweep_threshold,
)
from .schemas import (
    AnswerRequest,
    AppendFramesRequest,
    AppendResponse,
    CreateSessionRequest,
    DefaultsResponse,
    DeleteResponse,
    ErrorBody,
    ExampleModel,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    HistogramModel,
    MetricsModel,
    QueryTraceModel,
    RetrieveEntry,
    RetrieveRequest,
    RetrieveResponse,
    RunOverrides,
    ScoreModel,
    ScoreReorderRequest,
    ScoreReorderResponse,
    SessionInfo,
    SessionList,
    ShuffleRequest,
    ShuffleResponse,
    SimulateRequest,
    SimulateResponse,
    SweepRequest,
    SweepResponse,
    TraceModel,
    WindowFrame,
    WindowResponse,
    float_from_wire,
    float_to_wire,
)

__all__ = ["create_app", "app"]


class _Session:
    def __init__(self, session_id: str, window_c: int, dim: int | None):
        self.session_id = session_id
        self.buffer = MemoryBuffer(window_c=window_c, dim=dim)
        self.lock = threading.Lock()

    def info(self) -> SessionInfo:
        return SessionInfo(
            session_id=self.session_id,
            n_frames=len(self.buffer),
            dim=self.buffer.dim,
            window_c=self.buffer.window_c,
            last_timestamp_s=self.buffer.last_timestamp_s,
        )


class _Registry:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._sessions: dict[str, _Session] = {}

    def create(self, window_c: int, dim: int | None) -> _Session:
        with self._lock:
            sid = secrets.token_hex(8)
            while sid in self._sessions:
                sid = secrets.token_hex(8)
            sess = _Session(sid, window_c, dim)
            self._sessions[sid] = sess
            return sess

    def get(self, sid: str) -> _Session:
        with self._lock:
            sess = self._sessions.get(sid)
        if sess is None:
            raise SessionNotFoundError(f"no session {sid!r}")
        return sess

    def delete(self, sid: str) -> None:
        with self._lock:
            if sid not in self._sessions:
                raise SessionNotFoundError(f"no session {sid!r}")
            del self._sessions[sid]

    def all(self) -> list[_Session]:
        with self._lock:
            return list(self._sessions.values())


def _run_config(overrides: RunOverrides, window_c: int | None = None) -> RunConfig:
    """Defaults plus the request's non-None overrides."""
    updates: dict = {}
    if window_c is not None:
        updates["window_c"] = window_c
    if overrides.window_c is not None:
        updates["window_c"] = overrides.window_c
    if overrides.k is not None:
        updates["k"] = overrides.k
    if overrides.m_coarse is not None:
        updates["m_coarse"] = overrides.m_coarse
    if overrides.delta is not None:
        updates["delta"] = float_from_wire(overrides.delta, "delta")
    if overrides.tau is not None:
        updates["tau"] = overrides.tau
    return replace(DEFAULTS, **updates)


def _trace_model(trace: AnswerTrace) -> TraceModel:
    retrieved = None
    if trace.retrieved is not None:
        retrieved = {
            "stage": trace.retrieved.stage,
            "sim_ops": trace.retrieved.sim_ops,
            "entries": [[float(fid), float(s)] for fid, s in trace.retrieved.entries],
        }
    return TraceModel(
        v=1,
        local_dist=list(trace.local_dist.probs),
        entropy_nats=trace.gate.entropy_nats,
        threshold_nats=float_to_wire(trace.gate.threshold_nats),
        branch=trace.gate.branch.value,
        retrieved=retrieved,
        final_dist=list(trace.final_dist.probs),
        chosen_option=trace.chosen_option,
        sim_ops_total=trace.sim_ops_total,
        wall_ms=trace.wall_ms,
    )


def _metrics_model(m: EpisodeMetrics) -> MetricsModel:
    return MetricsModel(
        delta=float_to_wire(m.delta),
        recall_at_k=m.recall_at_k,
        answer_accuracy=m.answer_accuracy,
        mean_sim_ops=m.mean_sim_ops,
        recall_trigger_rate=m.recall_trigger_rate,
        mean_wall_ms=m.mean_wall_ms,
    )


def _stream_from_request(
    config, stream_lines, query_lines
) -> StreamData:
    has_cfg = config is not None
    has_lines = stream_lines is not None or query_lines is not None
    if has_cfg and has_lines:
        raise InvalidParameterError(
            "give either a config or stream_lines + query_lines, not both"
        )
    if has_cfg:
        return generate_stream(StreamConfig(**config.model_dump()))
    if stream_lines is None or query_lines is None:
        raise InvalidParameterError(
            "either a config or both stream_lines and query_lines are required"
        )
    return stream_from_lines(stream_lines, query_lines)


def create_app() -> FastAPI:
    app = FastAPI(title="weavecache", version=__version__)
    registry = _Registry()

    @app.exception_handler(SessionNotFoundError)
    async def _not_found(request: Request, exc: SessionNotFoundError):
        body = ErrorBody(error=str(exc), type=type(exc).__name__)
        return JSONResponse(status_code=404, content=body.model_dump())

    @app.exception_handler(WeavecacheError)
    async def _domain_error(request: Request, exc: WeavecacheError):
        body = ErrorBody(error=str(exc), type=type(exc).__name__)
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        # Non-finite inputs surface as ValueError from the core.
        body = ErrorBody(error=str(exc), type=type(exc).__name__)
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/defaults", response_model=DefaultsResponse)
    def defaults() -> DefaultsResponse:
        return DefaultsResponse(
            window_c=DEFAULTS.window_c,
            k=DEFAULTS.k,
            m_coarse=DEFAULTS.m_coarse,
            delta=float_to_wire(DEFAULTS.delta),
            tau=DEFAULTS.tau,
        )

    # --- sessions -----------------------------------------------------

    @app.post("/sessions", response_model=SessionInfo)
    def create_session(req: CreateSessionRequest) -> SessionInfo:
        sess = registry.create(req.window_c, req.dim)
        return sess.info()

    @app.get("/sessions", response_model=SessionList)
    def list_sessions() -> SessionList:
        return SessionList(sessions=[s.info() for s in registry.all()])

    @app.get("/sessions/{sid}", response_model=SessionInfo)
    def get_session(sid: str) -> SessionInfo:
        return registry.get(sid).info()

    @app.delete("/sessions/{sid}", response_model=DeleteResponse)
    def delete_session(sid: str) -> DeleteResponse:
        registry.delete(sid)
        return DeleteResponse(session_id=sid, deleted=True)

    @app.post("/sessions/{sid}/frames", response_model=AppendResponse)
    def append_frames(sid: str, req: AppendFramesRequest) -> AppendResponse:
        sess = registry.get(sid)
        with sess.lock:
            for frame in req.frames:
                sess.buffer.append(frame.t, frame.tokens, frame.label)
            return AppendResponse(
                appended=len(req.frames), n_frames=len(sess.buffer)
            )

    @app.get("/sessions/{sid}/window", response_model=WindowResponse)
    def window(sid: str) -> WindowResponse:
        sess = registry.get(sid)
        with sess.lock:
            frames = sess.buffer.local_window()
            return WindowResponse(
                window_c=sess.buffer.window_c,
                frames=[
                    WindowFrame(
                        frame_id=f.frame_id,
                        t=f.timestamp_s,
                        label=f.label,
                        n_tokens=f.n_tokens,
                    )
                    for f in frames
                ],
            )

    @app.post("/sessions/{sid}/retrieve", response_model=RetrieveResponse)
    def retrieve(sid: str, req: RetrieveRequest) -> RetrieveResponse:
        sess = registry.get(sid)
        query = QueryRecord.from_tokens(req.tokens)
        with sess.lock:
            snap = sess.buffer.snapshot()
        if req.stage == "coarse":
            result = coarse_load(snap, query, m_coarse=req.m_coarse)
        elif req.stage == "fine":
            result = fine_oracle(snap, query, k=req.k)
        else:
            result = c2f_load(snap, query, m_coarse=req.m_coarse, k=req.k)
        return RetrieveResponse(
            stage=result.stage,
            sim_ops=result.sim_ops,
            entries=[
                RetrieveEntry(frame_id=fid, score=score)
                for fid, score in result.entries
            ],
        )

    @app.post("/sessions/{sid}/answer", response_model=TraceModel)
    def answer(sid: str, req: AnswerRequest) -> TraceModel:
        sess = registry.get(sid)
        cfg = _run_config(
            RunOverrides(
                k=req.k, m_coarse=req.m_coarse, delta=req.delta, tau=req.tau
            ),
            window_c=sess.buffer.window_c,
        )
        query = QueryRecord.from_tokens(req.tokens)
        answerer = MockAnswerer(tau=cfg.tau)
        with sess.lock:
            trace = answer_query(sess.buffer, query, req.options, cfg, answerer)
        return _trace_model(trace)

    # --- simulation ---------------------------------------------------

    @app.post("/simulate/generate", response_model=GenerateResponse)
    def simulate_generate(req: GenerateRequest) -> GenerateResponse:
        stream = generate_stream(StreamConfig(**req.config.model_dump()))
        return GenerateResponse(
            n_frames=len(stream.frames),
            n_queries=len(stream.queries),
            stream_lines=stream_jsonl_lines(stream),
            query_lines=queries_jsonl_lines(stream),
        )

    @app.post("/simulate/run", response_model=SimulateResponse)
    def simulate_run(req: SimulateRequest) -> SimulateResponse:
        stream = _stream_from_request(
            req.config, req.stream_lines, req.query_lines
        )
        cfg = _run_config(req.run)
        result = run_episode_detailed(stream, req.policy, cfg)
        traces = None
        if req.include_traces:
            traces = [
                QueryTraceModel(
                    qid=o.query.qid,
                    horizon=o.query.horizon,
                    target_event=o.query.target_event,
                    correct=o.correct,
                    recall_at_k=o.recall_at_k,
                    trace=_trace_model(o.trace),
                )
                for o in result.outcomes
            ]
        return SimulateResponse(
            metrics=_metrics_model(result.metrics),
            csv=metrics_to_csv([result.metrics]),
            traces=traces,
        )

    @app.post("/simulate/sweep", response_model=SweepResponse)
    def simulate_sweep(req: SweepRequest) -> SweepResponse:
        stream = _stream_from_request(
            req.config, req.stream_lines, req.query_lines
        )
        cfg = _run_config(req.run)
        deltas = [float_from_wire(d, "delta") for d in req.deltas]
        rows = sweep_threshold(stream, deltas, cfg)
        return SweepResponse(
            rows=[_metrics_model(m) for m in rows],
            csv=metrics_to_csv(rows),
        )

    # --- temporal reorder ----------------------------------------------

    @app.post("/reorder/shuffle", response_model=ShuffleResponse)
    def reorder_shuffle(req: ShuffleRequest) -> ShuffleResponse:
        examples = []
        for i in range(req.count):
            ex = make_reorder_example(
                req.timestamps, seed=req.seed + i, group_size=req.group_size
            )
            examples.append(ExampleModel(**example_to_json_obj(ex)))
        return ShuffleResponse(examples=examples)

    @app.post("/reorder/score", response_model=ScoreReorderResponse)
    def reorder_score(req: ScoreReorderRequest) -> ScoreReorderResponse:
        scores = [
            score_reorder(pair.predicted, pair.target) for pair in req.pairs
        ]
        exact = [s.exact_match_fraction for s in scores]
        taus = [s.kendall_tau for s in scores]
        edges, counts = score_histogram(exact, n_bins=req.n_bins)
        return ScoreReorderResponse(
            scores=[
                ScoreModel(
                    exact_match_fraction=s.exact_match_fraction,
                    kendall_tau=s.kendall_tau,
                )
                for s in scores
            ],
            mean_exact_match=sum(exact) / len(exact),
            mean_kendall_tau=sum(taus) / len(taus),
            histogram=HistogramModel(edges=list(edges), counts=list(counts)),
        )

    return app


app = create_app()
