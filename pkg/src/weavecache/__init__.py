"""Streaming frame memory with entropy-gated coarse-to-fine recall.

The package keeps an append-only buffer of per-frame token embeddings,
answers option-scoring queries from a short local window, and falls
back to late-interaction retrieval over the whole history whenever the
local answer distribution is too flat to trust. A planted-relevance
simulator, a temporal-reorder transform, an HTTP service, and a CLI sit
on top of that core.
"""

from .config import DEFAULTS, RunConfig, load_config_file, run_config_from_sections
from .core import Distribution, cosine, dot, entropy, exact_mean, mean_pool, softmax
from .errors import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    EmptyMemoryError,
    InvalidDistributionError,
    InvalidParameterError,
    SessionNotFoundError,
    ShapeError,
    StreamFormatError,
    TimeOrderError,
    WeavecacheError,
    ZeroNormError,
)
from .gate import DEFAULT_DELTA_NATS, GateBranch, GateDecision, decide
from .memory import (
    DEFAULT_WINDOW_C,
    FrameRecord,
    MemoryBuffer,
    MemorySnapshot,
    load_stream_jsonl,
    write_stream_jsonl,
)
from .pipeline import AnswerTrace, MockAnswerer, answer_query, trace_to_dict
from .reorder import (
    REORDER_INSTRUCTION,
    kendall_tau,
    make_reorder_example,
    score_reorder,
    segment_ranges,
    shuffle_with_timestamps,
)
from .retrieval import (
    DEFAULT_K,
    DEFAULT_M_COARSE,
    QueryRecord,
    RetrievalResult,
    c2f_load,
    coarse_load,
    fine_oracle,
    max_sim,
)
from .simulator import (
    EpisodeMetrics,
    StreamConfig,
    StreamData,
    generate_stream,
    run_episode,
    run_episode_detailed,
    sweep_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DEFAULTS",
    "DEFAULT_DELTA_NATS",
    "DEFAULT_K",
    "DEFAULT_M_COARSE",
    "DEFAULT_WINDOW_C",
    "REORDER_INSTRUCTION",
    "AnswerTrace",
    "ConfigError",
    "DimensionError",
    "Distribution",
    "EmptyInputError",
    "EmptyMemoryError",
    "EpisodeMetrics",
    "FrameRecord",
    "GateBranch",
    "GateDecision",
    "InvalidDistributionError",
    "InvalidParameterError",
    "MemoryBuffer",
    "MemorySnapshot",
    "MockAnswerer",
    "QueryRecord",
    "RetrievalResult",
    "RunConfig",
    "SessionNotFoundError",
    "ShapeError",
    "StreamConfig",
    "StreamData",
    "StreamFormatError",
    "TimeOrderError",
    "WeavecacheError",
    "ZeroNormError",
    "answer_query",
    "c2f_load",
    "coarse_load",
    "cosine",
    "decide",
    "dot",
    "entropy",
    "exact_mean",
    "fine_oracle",
    "generate_stream",
    "kendall_tau",
    "load_config_file",
    "load_stream_jsonl",
    "make_reorder_example",
    "max_sim",
    "mean_pool",
    "run_config_from_sections",
    "run_episode",
    "run_episode_detailed",
    "score_reorder",
    "segment_ranges",
    "shuffle_with_timestamps",
    "softmax",
    "sweep_threshold",
    "trace_to_dict",
    "write_stream_jsonl",
]
