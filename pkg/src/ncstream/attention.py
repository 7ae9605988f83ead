"""Generalized attention: naive reference and the fused/streamed tile loop.

Both paths share one contract: S = score_scale * (Q K^T), each row of S
normalized by the active (a1, a2, b) triple, O = N(S) V.  The naive path
materializes the full y-by-x score matrix on purpose (it is the
memory-heavy oracle).  The streamed path never holds more than a
g_y-by-s_x score tile: an outer loop walks query groups, an inner loop
streams K/V chunks and folds each tile into per-row (o, z) accumulators,
finalizing once per row after the stream.  Partial tiles at the edges are
processed as smaller tiles, not padded, since padding with zero scores
would corrupt exponential-weight rows.

Precision: float64 tensors compute in float64 throughout.  For float32
tensors, score tiles are accumulated internally in float64 and rounded to
float32 before a1/a2 are applied (the same convention as tensor.matmul),
and the (o, z) accumulators stay float64 until the final cast.  With
half-precision emulation on, Q/K/V, every score tile, and the o
accumulator after each chunk are rounded to the binary16 grid while z
stays float32.

Exponential weights always route through the running-max accumulator here;
the plain accumulator would overflow at trivially small scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .normalizers import DegenerateDenominatorError, NormalizerSpec
from .tensor import DenseTensor, ShapeMismatchError, quantize_f16_array


class ConfigError(ValueError):
    """Invalid attention/tile configuration."""


@dataclass(frozen=True)
class TileConfig:
    """Query-group size g_y and key/value stream-chunk size s_x.

    Neither has to divide the axis it tiles.  The optional warp/thread
    labels w and t are accepted for forward compatibility but carry no
    cost semantics.
    """

    g_y: int = 64
    s_x: int = 64
    w: int | None = None
    t: int | None = None

    def __post_init__(self):
        if self.g_y < 1 or self.s_x < 1:
            raise ConfigError(f"tile sizes must be >= 1, got g_y={self.g_y}, s_x={self.s_x}")


def default_score_scale(spec: NormalizerSpec, k: int) -> float:
    """1/sqrt(k) for exponential weights, 1 for sign-preserving triples.

    Positive rescaling provably cannot change a positive-scale-invariant
    normalizer's output, so the scale is an identity there anyway.
    """
    if "sign_preserving" in spec.properties:
        return 1.0
    return 1.0 / math.sqrt(k)


@dataclass(frozen=True)
class AttentionConfig:
    spec: NormalizerSpec
    score_scale: float | None = None  # None -> default_score_scale at call time
    tile: TileConfig = field(default_factory=TileConfig)
    f16_emulation: bool = False

    def __post_init__(self):
        if self.score_scale is not None:
            if not math.isfinite(self.score_scale) or self.score_scale == 0.0:
                raise ConfigError(f"score_scale must be finite and nonzero, got {self.score_scale}")

    def resolve_scale(self, k: int) -> float:
        return self.score_scale if self.score_scale is not None else default_score_scale(self.spec, k)


class ScoreBufferMeter:
    """Tracks the peak number of transiently materialized score elements."""

    def __init__(self):
        self.peak_elements = 0

    def record(self, n: int) -> None:
        if n > self.peak_elements:
            self.peak_elements = n

    def peak_bytes(self, dtype_bytes: int) -> int:
        return self.peak_elements * dtype_bytes


def _uses_safe_path(spec: NormalizerSpec) -> bool:
    return spec.name == "softmax"


def _check_qkv(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> tuple[int, int, int]:
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeMismatchError(f"expected rank-2 Q/K/V, got {q.shape}, {k.shape}, {v.shape}")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError(f"Q and K feature dims differ: {q.shape} vs {k.shape}")
    if v.shape[0] != k.shape[0]:
        raise ShapeMismatchError(f"K and V row counts differ: {k.shape} vs {v.shape}")
    return q.shape[0], k.shape[0], q.shape[1]


def naive_attention_array(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    spec: NormalizerSpec,
    scale: float,
    meter: ScoreBufferMeter | None = None,
) -> np.ndarray:
    """Reference path on plain arrays; materializes all y*x scores."""
    y, x, _ = _check_qkv(q, k, v)
    f32 = q.dtype == np.float32
    if f32:
        s = (q.astype(np.float64) @ k.astype(np.float64).T).astype(np.float32)
    else:
        s = q @ k.T
    if scale != 1.0:
        s = s * np.asarray(scale, dtype=s.dtype)
    if meter is not None:
        meter.record(s.size)
    w1 = spec.a1(s)
    z = spec.a2(s).sum(axis=1)
    den = spec.b(z + spec.denom_epsilon) if spec.denom_epsilon else spec.b(z)
    bad = ~np.isfinite(den) | (den == 0)
    if bad.any():
        row = int(np.argmax(bad))
        raise DegenerateDenominatorError(float(z[row]), f"row {row}")
    weights = w1 / den[:, None]
    if f32:
        return (weights.astype(np.float64) @ v.astype(np.float64)).astype(np.float32)
    return weights @ v


def _streamed_tiles(q, k, v, spec, scale, tile, f16, meter, out):
    """General tile loop; q/k/v are float64 (values on the input grid)."""
    y, x, kdim = q.shape[0], k.shape[0], q.shape[1]
    g, s = tile.g_y, tile.s_x
    safe = _uses_safe_path(spec)
    out_f32 = out.dtype == np.float32
    kt = np.ascontiguousarray(k.T)
    for g0 in range(0, y, g):
        g1 = min(g0 + g, y)
        qg = q[g0:g1]
        rows = g1 - g0
        o_acc = np.zeros((rows, kdim), dtype=np.float32 if f16 else np.float64)
        z_acc = np.zeros(rows, dtype=np.float32 if f16 else np.float64)
        m_acc = np.full(rows, -np.inf) if safe else None
        for c0 in range(0, x, s):
            c1 = min(c0 + s, x)
            st = qg @ kt[:, c0:c1]
            if out_f32:
                st = st.astype(np.float32)
            if scale != 1.0:
                st *= np.asarray(scale, dtype=st.dtype)
            if f16:
                st = quantize_f16_array(st)
            assert st.size <= g * s, "transient score tile exceeded g_y * s_x"
            if meter is not None:
                meter.record(st.size)
            vc = v[c0:c1]
            if safe:
                m_new = np.maximum(m_acc, st.max(axis=1))
                alpha = np.exp(m_acc - m_new)  # exp(-inf) = 0 on the first chunk
                o_acc *= alpha[:, None]
                z_acc *= alpha
                p = np.exp(st - m_new[:, None])
                o_acc += p @ vc
                z_acc += p.sum(axis=1, dtype=z_acc.dtype)
                m_acc = m_new
            else:
                w1 = spec.a1(st)
                if f16:
                    o_acc += w1 @ vc.astype(np.float32)
                else:
                    o_acc += w1.astype(np.float64, copy=False) @ vc
                z_acc += spec.a2(st).sum(axis=1, dtype=z_acc.dtype)
            if f16:
                o_acc = quantize_f16_array(o_acc)
        if safe:
            bad = (z_acc == 0) | ~np.isfinite(z_acc)
            den = z_acc
        else:
            den = spec.b(z_acc + spec.denom_epsilon) if spec.denom_epsilon else spec.b(z_acc)
            bad = ~np.isfinite(den) | (den == 0)
        if bad.any():
            idx = int(np.argmax(bad))
            raise DegenerateDenominatorError(float(z_acc[idx]), f"row {g0 + idx}")
        out[g0:g1] = o_acc / den[:, None]


def _streamed_rowwise_scalar(q, k, v, spec, scale, meter, out):
    """Fast path for the 1x1 tile: one score at a time, scalar arithmetic.

    q/k/v are float64; out carries the target dtype.  Equivalent to the
    general loop with g_y = s_x = 1, just without per-step array overhead.
    """
    y, x = q.shape[0], k.shape[0]
    kdim = q.shape[1]
    safe = _uses_safe_path(spec)
    grid_f32 = out.dtype == np.float32
    a1, a2 = spec.a1, spec.a2
    if meter is not None:
        meter.record(1)
    for i in range(y):
        qi = q[i]
        o = np.zeros(kdim)
        z = 0.0
        m = -math.inf
        for j in range(x):
            sij = scale * float(qi @ k[j])
            if grid_f32:
                sij = float(np.float32(sij))
            if safe:
                if sij > m:
                    if m != -math.inf:
                        beta = math.exp(m - sij)
                        o *= beta
                        z *= beta
                    m = sij
                    o += v[j]
                    z += 1.0
                else:
                    p = math.exp(sij - m)
                    o += p * v[j]
                    z += p
            else:
                o += a1(sij) * v[j]
                z += a2(sij)
        if safe:
            if z == 0.0 or not math.isfinite(z):
                raise DegenerateDenominatorError(z, f"row {i}")
            den = z
        else:
            den = float(spec.b(z + spec.denom_epsilon)) if spec.denom_epsilon else float(spec.b(z))
            if den == 0.0 or not math.isfinite(den):
                raise DegenerateDenominatorError(z, f"row {i}")
        out[i] = o / den


def streamed_attention_array(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    spec: NormalizerSpec,
    scale: float,
    tile: TileConfig,
    f16: bool = False,
    meter: ScoreBufferMeter | None = None,
) -> np.ndarray:
    """Streamed path on plain arrays; transient scores bounded by the tile."""
    y, x, kdim = _check_qkv(q, k, v)
    in_dtype = q.dtype
    if f16:
        if in_dtype != np.float32:
            raise ConfigError("f16 emulation requires float32 inputs")
        q = quantize_f16_array(q)
        k = quantize_f16_array(k)
        v = quantize_f16_array(v)
    out = np.empty((y, kdim), dtype=in_dtype)
    q64 = q.astype(np.float64, copy=False)
    k64 = k.astype(np.float64, copy=False)
    v64 = v.astype(np.float64, copy=False)
    if tile.g_y == 1 and tile.s_x == 1 and not f16:
        _streamed_rowwise_scalar(q64, k64, v64, spec, scale, meter, out)
    else:
        _streamed_tiles(q64, k64, v64, spec, scale, tile, f16, meter, out)
    return out


def naive_generalized_attention(
    q: DenseTensor,
    k: DenseTensor,
    v: DenseTensor,
    cfg: AttentionConfig,
    meter: ScoreBufferMeter | None = None,
) -> DenseTensor:
    """Unfused oracle: full score matrix, rows normalized, then N(S) V."""
    if not (q.dtype == k.dtype == v.dtype):
        raise ShapeMismatchError(f"dtype mismatch: {q.dtype}, {k.dtype}, {v.dtype}")
    qa, ka, va = q.array, k.array, v.array
    if cfg.f16_emulation:
        if q.dtype != "float32":
            raise ConfigError("f16 emulation requires float32 inputs")
        qa, ka, va = (quantize_f16_array(a) for a in (qa, ka, va))
    out = naive_attention_array(qa, ka, va, cfg.spec, cfg.resolve_scale(q.shape[1]), meter)
    return DenseTensor(out, q.dtype, allow_nonfinite=cfg.f16_emulation)


def streamed_attention(
    q: DenseTensor,
    k: DenseTensor,
    v: DenseTensor,
    cfg: AttentionConfig,
    meter: ScoreBufferMeter | None = None,
) -> DenseTensor:
    """Fused path: same contract as the naive oracle, tile-bounded scores."""
    if not (q.dtype == k.dtype == v.dtype):
        raise ShapeMismatchError(f"dtype mismatch: {q.dtype}, {k.dtype}, {v.dtype}")
    out = streamed_attention_array(
        q.array, k.array, v.array, cfg.spec, cfg.resolve_scale(q.shape[1]),
        cfg.tile, cfg.f16_emulation, meter,
    )
    return DenseTensor(out, q.dtype, allow_nonfinite=cfg.f16_emulation)


def multi_head_attention_array(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    spec: NormalizerSpec,
    h: int,
    h_kv: int,
    scale: float | None = None,
    tile: TileConfig | None = None,
    path: str = "streamed",
    f16: bool = False,
    meter: ScoreBufferMeter | None = None,
) -> np.ndarray:
    """Grouped-query multi-head attention on [n, heads, d] arrays.

    Query head i reads key/value head floor(i * h_kv / h); every head runs
    the selected single-head path independently and outputs concatenate
    along the head axis.
    """
    if h < 1 or h_kv < 1 or h % h_kv != 0:
        raise ConfigError(f"query heads must be a multiple of kv heads, got h={h}, h_kv={h_kv}")
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise ShapeMismatchError(f"expected rank-3 inputs, got {q.shape}, {k.shape}, {v.shape}")
    if q.shape[1] != h or k.shape[1] != h_kv or v.shape[1] != h_kv:
        raise ShapeMismatchError(
            f"head axes do not match h={h}, h_kv={h_kv}: {q.shape}, {k.shape}, {v.shape}"
        )
    if path not in ("streamed", "naive"):
        raise ConfigError(f"unknown attention path {path!r}")
    d = q.shape[2]
    eff_scale = scale if scale is not None else default_score_scale(spec, d)
    eff_tile = tile if tile is not None else TileConfig()
    out = np.empty_like(q)
    for i in range(h):
        kv = (i * h_kv) // h
        if path == "streamed":
            out[:, i, :] = streamed_attention_array(
                q[:, i, :], k[:, kv, :], v[:, kv, :], spec, eff_scale, eff_tile, f16, meter
            )
        else:
            out[:, i, :] = naive_attention_array(
                q[:, i, :], k[:, kv, :], v[:, kv, :], spec, eff_scale, meter
            )
    return out


def multi_head_attention(
    q: DenseTensor,
    k: DenseTensor,
    v: DenseTensor,
    cfg: AttentionConfig,
    h: int,
    h_kv: int,
    path: str = "streamed",
    meter: ScoreBufferMeter | None = None,
) -> DenseTensor:
    out = multi_head_attention_array(
        q.array, k.array, v.array, cfg.spec, h, h_kv,
        scale=cfg.score_scale, tile=cfg.tile, path=path, f16=cfg.f16_emulation, meter=meter,
    )
    return DenseTensor(out, q.dtype)


def apply_multiplicity_array(k: np.ndarray, m) -> np.ndarray:
    """Scale key row i by multiplicity m_i, broadcast over trailing axes."""
    mv = np.asarray(m, dtype=np.float64)
    if mv.ndim != 1 or mv.shape[0] != k.shape[0]:
        raise ShapeMismatchError(f"multiplicity length {mv.shape} does not match {k.shape[0]} rows")
    if not np.isfinite(mv).all() or (mv < 0).any():
        raise ValueError("multiplicities must be finite and nonnegative")
    return k * mv.astype(k.dtype).reshape((-1,) + (1,) * (k.ndim - 1))


def apply_multiplicity(k: DenseTensor, m) -> DenseTensor:
    return DenseTensor(apply_multiplicity_array(k.array, m), k.dtype)
