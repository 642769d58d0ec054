"""Scalar vector and distribution primitives.

These functions define the reference semantics for every similarity and
uncertainty number in the package. Reductions run left to right in plain
Python so a given input always produces the same bits; the vectorized
paths in :mod:`weavecache.retrieval` are tested against these within
1e-9.

Conventions:
  * entropy is measured in nats, with ``0 * ln(0) == 0``
  * ``mean_pool`` is exactly rounded, so pooling k copies of a vector
    returns that vector unchanged
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from .errors import (
    DimensionError,
    EmptyInputError,
    InvalidDistributionError,
    InvalidParameterError,
    ZeroNormError,
)

__all__ = [
    "Distribution",
    "DISTRIBUTION_SUM_TOL",
    "as_vector",
    "dot",
    "cosine",
    "exact_mean",
    "mean_pool",
    "entropy",
    "softmax",
]

# |sum(probs) - 1| beyond this rejects a Distribution.
DISTRIBUTION_SUM_TOL = 1e-9


def as_vector(values: Sequence[float]) -> tuple[float, ...]:
    """Validate a single embedding vector and return it as a float tuple.

    Args:
        values: sequence of finite numbers, at least one entry.

    Raises:
        DimensionError: the sequence is empty.
        ValueError: an entry is NaN or infinite.
    """
    vec = tuple(float(v) for v in values)
    if not vec:
        raise DimensionError("vector must have dim >= 1")
    for v in vec:
        if not math.isfinite(v):
            raise ValueError(f"vector entries must be finite, got {v!r}")
    return vec


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    """Inner product <a, b> accumulated left to right.

    Args:
        a: first vector.
        b: second vector, same dimensionality.

    Returns:
        The raw (unnormalized) inner product.

    Raises:
        DimensionError: operands are empty or lengths differ.
    """
    if len(a) != len(b):
        raise DimensionError(f"dim mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise DimensionError("vectors must have dim >= 1")
    total = 0.0
    for x, y in zip(a, b):
        total += float(x) * float(y)
    return total


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity <a, b> / (||a|| * ||b||).

    Raises:
        DimensionError: operands are empty or lengths differ.
        ZeroNormError: either operand has zero norm.
    """
    num = dot(a, b)
    norm_a = math.sqrt(dot(a, a))
    norm_b = math.sqrt(dot(b, b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormError("cosine undefined for zero-norm vectors")
    return num / (norm_a * norm_b)


def exact_mean(values: Sequence[float]) -> float:
    """Arithmetic mean, correctly rounded.

    The sum is accumulated exactly over the integer representations of
    the inputs, so the only rounding happens in the final division. In
    particular the mean of k copies of v is exactly v.

    Raises:
        EmptyInputError: no values.
    """
    if len(values) == 0:
        raise EmptyInputError("mean of zero values is undefined")
    num = 0
    den = 1  # always a power of two
    for v in values:
        n, d = float(v).as_integer_ratio()
        if d > den:
            num *= d // den
            den = d
        elif d < den:
            n *= den // d
        num += n
    return num / (den * len(values))


def mean_pool(vectors: Sequence[Sequence[float]]) -> tuple[float, ...]:
    """Element-wise arithmetic mean of a nonempty list of vectors.

    Args:
        vectors: sequence of same-dimension vectors.

    Returns:
        The pooled vector as a float tuple.

    Raises:
        EmptyInputError: the list is empty.
        DimensionError: the vectors disagree on dimensionality.
    """
    if len(vectors) == 0:
        raise EmptyInputError("mean_pool of an empty token list")
    dim = len(vectors[0])
    if dim == 0:
        raise DimensionError("vectors must have dim >= 1")
    for v in vectors:
        if len(v) != dim:
            raise DimensionError(f"dim mismatch: {len(v)} vs {dim}")
    return tuple(
        exact_mean([float(v[i]) for v in vectors]) for i in range(dim)
    )


@dataclass(frozen=True)
class Distribution:
    """A probability distribution over a finite option set.

    Invariants are checked at construction: entries are finite and
    non-negative and sum to 1 within ``DISTRIBUTION_SUM_TOL``.
    """

    probs: tuple[float, ...]

    def __init__(self, probs: Sequence[float]) -> None:
        vals = tuple(float(p) for p in probs)
        if not vals:
            raise InvalidDistributionError("distribution over zero options")
        total = 0.0
        for p in vals:
            if not math.isfinite(p) or p < 0.0:
                raise InvalidDistributionError(
                    f"probabilities must be finite and >= 0, got {p!r}"
                )
            total += p
        if abs(total - 1.0) > DISTRIBUTION_SUM_TOL:
            raise InvalidDistributionError(
                f"probabilities sum to {total!r}, expected 1 within "
                f"{DISTRIBUTION_SUM_TOL}"
            )
        object.__setattr__(self, "probs", vals)

    def __len__(self) -> int:
        return len(self.probs)

    def argmax(self) -> int:
        """Index of the largest probability; ties go to the smallest index."""
        best = 0
        for i in range(1, len(self.probs)):
            if self.probs[i] > self.probs[best]:
                best = i
        return best


def entropy(dist: Union[Distribution, Sequence[float]]) -> float:
    """Shannon entropy in nats, with the 0 * ln(0) := 0 convention.

    Args:
        dist: a Distribution, or a raw probability sequence which is
            validated first.

    Raises:
        InvalidDistributionError: the probabilities are not a valid
            distribution.
    """
    if not isinstance(dist, Distribution):
        dist = Distribution(dist)
    total = 0.0
    for p in dist.probs:
        if p > 0.0:
            total += -p * math.log(p)
    return total


def softmax(scores: Sequence[float], tau: float = 1.0) -> Distribution:
    """Temperature softmax over raw scores.

    Args:
        scores: finite raw scores, at least one.
        tau: temperature, must be > 0. Small tau sharpens.

    Raises:
        EmptyInputError: no scores.
        InvalidParameterError: tau <= 0 or non-finite.
    """
    if len(scores) == 0:
        raise EmptyInputError("softmax of zero scores")
    if not math.isfinite(tau) or tau <= 0.0:
        raise InvalidParameterError(f"tau must be finite and > 0, got {tau!r}")
    scaled = [float(s) / tau for s in scores]
    peak = max(scaled)
    weights = [math.exp(s - peak) for s in scaled]
    total = 0.0
    for w in weights:
        total += w
    return Distribution([w / total for w in weights])
