"""Run configuration, config files, and environment knobs.

A config file uses key = value lines grouped into [section] headers:

    [gate]
    delta_nats = 0.6

    [retrieval]
    k = 64
    m_coarse = 256

    [memory]
    window_c = 64

    [answerer]
    tau = 1.0

Command-line flags override file values, which override the shipped
defaults. ``WEAVECACHE_THREADS`` caps internal parallelism (threshold
sweeps run episodes in a thread pool when it is above 1).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Union

from .errors import ConfigError

__all__ = [
    "RunConfig",
    "DEFAULTS",
    "THREADS_ENV_VAR",
    "parse_config_text",
    "load_config_file",
    "run_config_from_sections",
    "threads_from_env",
]

THREADS_ENV_VAR = "WEAVECACHE_THREADS"


@dataclass(frozen=True)
class RunConfig:
    """Knobs for the answer path and its retrieval budget.

    Attributes:
        window_c: local window capacity C.
        k: maximum recalled frames per query.
        m_coarse: coarse pool size for the first retrieval stage.
        delta: recall threshold in nats; +inf never recalls, 0 always.
        tau: answerer softmax temperature.
    """

    window_c: int = 64
    k: int = 64
    m_coarse: int = 256
    delta: float = 0.6
    tau: float = 1.0

    def __post_init__(self) -> None:
        if self.window_c < 1:
            raise ConfigError(f"window_c must be >= 1, got {self.window_c}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.m_coarse < 1:
            raise ConfigError(f"m_coarse must be >= 1, got {self.m_coarse}")
        if math.isnan(self.delta) or self.delta < 0.0:
            raise ConfigError(f"delta must be >= 0 nats, got {self.delta}")
        if not math.isfinite(self.tau) or self.tau <= 0.0:
            raise ConfigError(f"tau must be finite and > 0, got {self.tau}")


DEFAULTS = RunConfig()

# (section, key) -> RunConfig field
_CONFIG_KEYS = {
    ("gate", "delta_nats"): "delta",
    ("retrieval", "k"): "k",
    ("retrieval", "m_coarse"): "m_coarse",
    ("memory", "window_c"): "window_c",
    ("answerer", "tau"): "tau",
}


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    return text


def parse_config_text(text: str) -> dict[str, dict[str, object]]:
    """Parse [section] / key = value text into nested dicts.

    Raises:
        ConfigError: a line is neither a section header, a key = value
            pair, a comment, nor blank; the message carries the line
            number.
    """
    sections: dict[str, dict[str, object]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section name")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if current is None:
            raise ConfigError(
                f"line {lineno}: key = value before any [section] header"
            )
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        sections[current][key] = _parse_value(value.strip())
    return sections


def load_config_file(path: Union[str, Path]) -> dict[str, dict[str, object]]:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_config_text(fp.read())


def run_config_from_sections(
    sections: dict[str, dict[str, object]],
    base: RunConfig = DEFAULTS,
) -> RunConfig:
    """Apply recognized config-file keys on top of ``base``.

    Unrecognized sections or keys raise so typos do not silently fall
    back to defaults.
    """
    known_fields = {f.name for f in fields(RunConfig)}
    updates: dict[str, object] = {}
    for section, entries in sections.items():
        for key, value in entries.items():
            field = _CONFIG_KEYS.get((section, key))
            if field is None:
                if section == "simulator":
                    # Generator knobs live in their own section and are
                    # consumed by the CLI, not by RunConfig.
                    continue
                raise ConfigError(f"unknown config key [{section}] {key}")
            assert field in known_fields
            updates[field] = value
    try:
        return replace(base, **updates)  # type: ignore[arg-type]
    except TypeError as e:
        raise ConfigError(f"bad config value type: {e}") from e


def threads_from_env(default: int = 1) -> int:
    """Read the WEAVECACHE_THREADS cap; absent or empty means ``default``.

    Raises:
        ConfigError: the value is not an integer >= 1.
    """
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(
            f"{THREADS_ENV_VAR} must be an integer >= 1, got {raw!r}"
        ) from e
    if n < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {n}")
    return n
