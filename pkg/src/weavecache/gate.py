"""Entropy gate deciding when to reach back into memory.

The local answer's distribution over options carries its own confidence
signal: Shannon entropy in nats. At or above the threshold the query
recalls from long-range memory; below it the local answer ships as is.
The boundary case recalls, so a threshold of 0 recalls always and a
threshold of +inf never does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .core import Distribution, entropy
from .errors import InvalidParameterError

__all__ = ["GateBranch", "GateDecision", "decide", "DEFAULT_DELTA_NATS"]

DEFAULT_DELTA_NATS = 0.6


class GateBranch(str, Enum):
    LOCAL_ANSWER = "local_answer"
    RECALL = "recall"


@dataclass(frozen=True)
class GateDecision:
    """Outcome of one gate evaluation.

    Attributes:
        entropy_nats: entropy of the local answer distribution.
        threshold_nats: the delta the entropy was compared against.
        branch: RECALL iff entropy_nats >= threshold_nats.
    """

    entropy_nats: float
    threshold_nats: float
    branch: GateBranch

    @property
    def recalled(self) -> bool:
        return self.branch is GateBranch.RECALL


def decide(local_dist: Distribution, delta: float = DEFAULT_DELTA_NATS) -> GateDecision:
    """Evaluate the gate for one local answer distribution.

    Args:
        local_dist: distribution over answer options from the local pass.
        delta: threshold in nats, >= 0; +inf is the never-recall
            sentinel.

    Raises:
        InvalidParameterError: delta is negative or NaN.
        InvalidDistributionError: local_dist fails validation (when a
            raw sequence is passed).
    """
    d = float(delta)
    if math.isnan(d) or d < 0.0:
        raise InvalidParameterError(f"delta must be >= 0 nats, got {delta!r}")
    h = entropy(local_dist)
    branch = GateBranch.RECALL if h >= d else GateBranch.LOCAL_ANSWER
    return GateDecision(entropy_nats=h, threshold_nats=d, branch=branch)
