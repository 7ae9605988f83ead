"""Chunk-wise accumulation for normalized contractions and attention rows.

The running state is the pair (o, z): o accumulates sum a1(score_i) * value_i
(a scalar in contraction mode, a length-k vector in attention mode) and z
accumulates sum a2(score_i).  Chunks combine by plain addition of states, so
any split of the input produces the same final state; finalize divides by
b(z + eps) once at the end.

A second state flavor carries a running maximum m and keeps (o, z) scaled by
e^(-m).  That is the numerically safe path for exponential weights: the
scale factors cancel at finalize, and no single exponential ever sees a
large positive argument.

Contraction-mode accumulation takes a pure-Python path whenever the inputs
are not float arrays, so exact scalar types (fractions.Fraction, or any
value supporting + and *) stream exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .normalizers import DegenerateDenominatorError, NormalizerSpec

CONTRACTION = "contraction"
ATTENTION = "attention"

# Test hook: when -1.0, accumulate() flips the sign of the a1 term, which
# breaks the streamed-equals-one-shot property in a detectable way.
_fault_sign = 1.0


def set_fault_injection(enabled: bool) -> None:
    global _fault_sign
    _fault_sign = -1.0 if enabled else 1.0


@dataclass(eq=False)
class StreamState:
    """Accumulator pair (o, z); o is scalar or a length-k vector."""

    mode: str
    o: object
    z: object

    @property
    def k(self) -> int | None:
        return len(self.o) if self.mode == ATTENTION else None


@dataclass(eq=False)
class SafeStreamState:
    """(o, z) scaled by e^(-m), plus the running maximum m of consumed scores."""

    mode: str
    o: object
    z: float
    m: float


def init_state(mode: str = CONTRACTION, k: int | None = None, dtype=np.float64) -> StreamState:
    """Zero-initialized state; attention mode needs the value dimension k."""
    if mode == CONTRACTION:
        return StreamState(CONTRACTION, 0, 0)
    if mode == ATTENTION:
        if k is None or k < 1:
            raise ValueError("attention mode needs k >= 1")
        return StreamState(ATTENTION, np.zeros(k, dtype=dtype), 0.0)
    raise ValueError(f"unknown mode {mode!r}")


def init_safe_state(mode: str = CONTRACTION, k: int | None = None, dtype=np.float64) -> SafeStreamState:
    if mode == CONTRACTION:
        return SafeStreamState(CONTRACTION, 0.0, 0.0, -math.inf)
    if mode == ATTENTION:
        if k is None or k < 1:
            raise ValueError("attention mode needs k >= 1")
        return SafeStreamState(ATTENTION, np.zeros(k, dtype=dtype), 0.0, -math.inf)
    raise ValueError(f"unknown mode {mode!r}")


def accumulate(state: StreamState, scores, values, spec: NormalizerSpec) -> StreamState:
    """Consume one chunk: o += sum a1(s_i) * v_i, z += sum a2(s_i).

    Empty chunks are permitted and leave the state unchanged.  In attention
    mode ``values`` is an (s, k) array whose rows are scaled by a1(score).
    """
    n = len(scores)
    if n != len(values):
        raise ValueError(f"chunk length mismatch: {n} scores vs {len(values)} values")
    if n == 0:
        return StreamState(state.mode, state.o, state.z)
    flipped = _fault_sign < 0
    if state.mode == ATTENTION:
        s = np.asarray(scores)
        v = np.asarray(values)
        if v.ndim != 2 or v.shape[1] != len(state.o):
            raise ValueError(f"values shape {v.shape} does not match k={len(state.o)}")
        num = spec.a1(s) @ v
        o = state.o + (-num if flipped else num)
        z = state.z + spec.a2(s).sum()
        return StreamState(ATTENTION, o, z)
    s = np.asarray(scores)
    if s.dtype in (np.float32, np.float64):
        v = np.asarray(values)
        num = float(spec.a1(s) @ v)
        o = state.o + (-num if flipped else num)
        z = state.z + float(spec.a2(s).sum())
        return StreamState(CONTRACTION, o, z)
    # Exact path: works for any scalar type closed under + and *.
    o = state.o
    z = state.z
    for si, vi in zip(scores, values):
        term = spec.a1(si) * vi
        o = o + (-term if flipped else term)
        z = z + spec.a2(si)
    return StreamState(CONTRACTION, o, z)


def merge(s1: StreamState, s2: StreamState) -> StreamState:
    """Combine two independently accumulated states: (o1+o2, z1+z2)."""
    if s1.mode != s2.mode:
        raise ValueError(f"mode mismatch: {s1.mode} vs {s2.mode}")
    if s1.mode == ATTENTION and len(s1.o) != len(s2.o):
        raise ValueError(f"k mismatch: {len(s1.o)} vs {len(s2.o)}")
    return StreamState(s1.mode, s1.o + s2.o, s1.z + s2.z)


def finalize(state: StreamState, spec: NormalizerSpec):
    """Tail map: o / b(z + eps).  Errors on zero or non-finite denominators."""
    den = spec.denominator(state.z, context=f"finalize in {state.mode} mode")
    return state.o / den


def streamed_normalized_contraction(x, y, spec: NormalizerSpec, chunk_size: int):
    """Normalized contraction computed over ascending chunks of size s.

    The last chunk may be partial.  Empty total input is rejected here
    rather than surfacing as a 0/b(0) downstream.
    """
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    if n == 0:
        raise ValueError("streamed contraction needs at least one element")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    state = init_state(CONTRACTION)
    for lo in range(0, n, chunk_size):
        hi = min(lo + chunk_size, n)
        state = accumulate(state, x[lo:hi], y[lo:hi], spec)
    return finalize(state, spec)


def accumulate_safe(state: SafeStreamState, scores, values) -> SafeStreamState:
    """Running-max exponential accumulation (the stable softmax path).

    m' = max(m, max_i score_i); the old (o, z) are rescaled by e^(m - m')
    and the chunk contributes e^(score_i - m') terms, so no exponential
    argument is ever positive.
    """
    n = len(scores)
    if n != len(values):
        raise ValueError(f"chunk length mismatch: {n} scores vs {len(values)}")
    if n == 0:
        return SafeStreamState(state.mode, state.o, state.z, state.m)
    s = np.asarray(scores, dtype=np.float64)
    m_new = max(state.m, float(s.max()))
    scale = math.exp(state.m - m_new) if state.m != -math.inf else 0.0
    p = np.exp(s - m_new)
    if state.mode == ATTENTION:
        v = np.asarray(values)
        o = state.o * scale + p @ v
    else:
        v = np.asarray(values, dtype=np.float64)
        o = state.o * scale + float(p @ v)
    z = state.z * scale + float(p.sum())
    return SafeStreamState(state.mode, o, z, m_new)


def finalize_safe(state: SafeStreamState):
    """o / z; the e^(-m) factors cancel.  Errors if nothing was consumed."""
    if state.z == 0.0 or not math.isfinite(state.z):
        raise DegenerateDenominatorError(state.z, "finalize_safe")
    return state.o / state.z
