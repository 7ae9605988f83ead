"""Normalized operations defined by an (a1, a2, b) triple of scalar maps.

A normalized operation maps a vector x to a1(x_i) / b(sum_j a2(x_j)); a
normalized contraction follows it with a dot product against a value vector.
The built-in triples:

- ``spherical``:  a1(u) = u,   a2(u) = u^2,  b(z) = sqrt(z)   (signed, L2 row norm)
- ``softmax``:    a1(u) = e^u, a2(u) = e^u,  b(z) = z         (probability weights)
- ``signed_l1``:  a1(u) = u,   a2(u) = |u|,  b(z) = z         (signed, L1 row norm)

The scalar maps are ordinary callables applied elementwise.  They accept
numpy arrays and Python scalars alike; the polynomial/absolute-value maps
also accept exact ``fractions.Fraction`` values, which is what the exact
arithmetic test mode relies on.  Declared property flags are claims checked
by the property suite, never assumptions the engine makes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

PROPERTY_FLAGS = frozenset({"sign_preserving", "shift_invariant", "positive_scale_invariant"})


class DegenerateDenominatorError(ValueError):
    """The aggregator produced a zero or non-finite denominator."""

    def __init__(self, z, context: str = ""):
        self.z = z
        msg = f"degenerate denominator: b applied to z={z!r} is zero or non-finite"
        super().__init__(msg + (f" ({context})" if context else ""))


def _identity(u):
    return u


def _square(u):
    return u * u


def _exp(u):
    return np.exp(u)


def _sqrt(z):
    return np.sqrt(z)


@dataclass(frozen=True)
class NormalizerSpec:
    """An (a1, a2, b) triple plus its declared algebraic properties.

    ``denom_epsilon`` is added inside b's argument at finalize time, so a
    spec with epsilon > 0 turns an all-zero-score row into a zero output
    instead of a degenerate denominator.  ``sfu_evals`` counts
    special-function (exponential) evaluations per score across a1 and a2;
    it feeds the cost model and is 0 for polynomial/absolute-value maps.
    """

    name: str
    a1: Callable
    a2: Callable
    b: Callable
    denom_epsilon: float = 0.0
    properties: frozenset = field(default_factory=frozenset)
    sfu_evals: int = 0

    def __post_init__(self):
        unknown = set(self.properties) - PROPERTY_FLAGS
        if unknown:
            raise ValueError(f"unknown property flags: {sorted(unknown)}")
        if self.denom_epsilon < 0:
            raise ValueError("denom_epsilon must be nonnegative")

    def with_epsilon(self, eps: float) -> NormalizerSpec:
        return replace(self, denom_epsilon=eps)

    def denominator(self, z, context: str = ""):
        """Apply b to z + denom_epsilon and insist the result is usable."""
        den = self.b(z + self.denom_epsilon) if self.denom_epsilon else self.b(z)
        if isinstance(den, (int, float, np.floating)):
            if not math.isfinite(den) or den == 0:
                raise DegenerateDenominatorError(z, context)
        elif den == 0:
            raise DegenerateDenominatorError(z, context)
        return den


SPHERICAL = NormalizerSpec(
    "spherical",
    a1=_identity,
    a2=_square,
    b=_sqrt,
    properties=frozenset({"sign_preserving", "positive_scale_invariant"}),
)

SOFTMAX = NormalizerSpec(
    "softmax",
    a1=_exp,
    a2=_exp,
    b=_identity,
    properties=frozenset({"shift_invariant"}),
    sfu_evals=2,
)

SIGNED_L1 = NormalizerSpec(
    "signed_l1",
    a1=_identity,
    a2=abs,
    b=_identity,
    properties=frozenset({"sign_preserving", "positive_scale_invariant"}),
)

BUILTIN_SPECS = {s.name: s for s in (SPHERICAL, SOFTMAX, SIGNED_L1)}


def get_spec(name: str) -> NormalizerSpec:
    try:
        return BUILTIN_SPECS[name]
    except KeyError:
        raise ValueError(f"unknown normalizer {name!r} (expected one of {sorted(BUILTIN_SPECS)})") from None


def _is_object_sequence(x) -> bool:
    arr = np.asarray(x)
    return arr.dtype == object


def normalize(x, spec: NormalizerSpec) -> np.ndarray:
    """Normalized operation: out_i = a1(x_i) / b(sum_j a2(x_j) + eps)."""
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"normalize expects a nonempty 1-D vector, got shape {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    z = spec.a2(arr).sum()
    den = spec.denominator(z)
    return spec.a1(arr) / den


def normalized_contraction(x, y, spec: NormalizerSpec):
    """Normalized contraction: (sum_i a1(x_i) y_i) / b(sum_i a2(x_i) + eps).

    Float inputs run vectorized.  Sequences of exact scalars (Fractions)
    take a pure-Python path so the arithmetic stays exact end to end.
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 1:
        raise ValueError("normalized_contraction expects nonempty vectors")
    if _is_object_sequence(x) or _is_object_sequence(y):
        num = sum(spec.a1(xi) * yi for xi, yi in zip(x, y))
        z = sum(spec.a2(xi) for xi in x)
        return num / spec.denominator(z)
    xa = np.asarray(x)
    ya = np.asarray(y)
    if xa.dtype not in (np.float32, np.float64):
        xa = xa.astype(np.float64)
        ya = ya.astype(np.float64)
    num = float(spec.a1(xa) @ ya)
    den = spec.denominator(spec.a2(xa).sum())
    return num / float(den)


def normalize_jvp(x, v, spec: NormalizerSpec) -> np.ndarray:
    """Directional derivative of ``normalize`` at x along v.

    Analytic forms are provided for the spherical and softmax triples (with
    epsilon 0); they back the finite-difference correctness checks.
    """
    xa = np.asarray(x, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if xa.shape != va.shape or xa.ndim != 1:
        raise ValueError(f"x and v must be 1-D and equal length, got {xa.shape} vs {va.shape}")
    if spec.denom_epsilon != 0.0:
        raise ValueError("normalize_jvp covers the epsilon-free forms only")
    if spec.name == "spherical":
        r2 = float(xa @ xa)
        if r2 == 0.0 or not math.isfinite(r2):
            raise DegenerateDenominatorError(r2, "jvp at x")
        r = math.sqrt(r2)
        return va / r - xa * (float(xa @ va) / (r2 * r))
    if spec.name == "softmax":
        n = normalize(xa, spec)
        return n * (va - float(n @ va))
    raise ValueError(f"normalize_jvp is defined for spherical and softmax, not {spec.name!r}")
