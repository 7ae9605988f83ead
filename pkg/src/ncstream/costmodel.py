"""Analytic byte/FLOP/SFU cost model for naive vs streamed attention.

Conventions (documented here once, used by every report):

- The naive path is modeled as the single-tile instance of the streamed
  loop whose tile covers the whole problem, *plus* a global-level score
  matrix: it writes and re-reads all y*x scores at the top memory level.
  The streamed path materializes no scores at the top level at all; its
  scores exist only as the on-chip g_y-by-s_x tile.
- K and V are re-streamed once per query group (no cross-group cache),
  so global traffic multiplies their footprint by ceil(y / g_y).  The
  perfect-reuse lower bound (each operand moved exactly once) is reported
  alongside.
- Register traffic counts one operand read per element per tile-stage use:
  2 * (g*k + s*k + g*s) bytes for each tile step, covering the two matrix
  products and the score tile between them.
- matmul FLOPs are 2*y*x*k for each of the two products; elementwise FLOPs
  cover a1, a2, the denominator additions and the divide (4*y*x) plus one
  b per row.  One SFU op is one exponential evaluation; a1 and a2 count
  separately even where they share e^x, and the fused toggle halves that.
- Streaming reorders arithmetic but does not change it, so FLOP and SFU
  counts are identical between the two paths.

Tile sizes are clamped to the problem (min(g_y, y), min(s_x, x)) so the
on-chip figures match what a run actually holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

from .attention import TileConfig
from .normalizers import NormalizerSpec

_DTYPE_BYTES = {"float32": 4, "float64": 8}

# Stable column order for CSV/JSON emission.
COST_FIELDS = [
    "bytes_global_to_shared",
    "bytes_global_to_shared_min_reuse",
    "bytes_shared_to_register",
    "peak_onchip_bytes",
    "score_matrix_bytes_materialized",
    "score_tile_elements",
    "matmul_flops",
    "elementwise_flops",
    "sfu_ops",
    "dtype_bytes",
]


@dataclass(frozen=True)
class CostReport:
    path: str  # "naive" | "streamed"
    y: int
    x: int
    k: int
    dtype: str
    spec: str
    g_y: int | None
    s_x: int | None
    bytes_global_to_shared: int
    bytes_global_to_shared_min_reuse: int
    bytes_shared_to_register: int
    peak_onchip_bytes: int
    score_matrix_bytes_materialized: int
    score_tile_elements: int
    matmul_flops: int
    elementwise_flops: int
    sfu_ops: int
    dtype_bytes: int

    def to_dict(self) -> dict:
        return asdict(self)


def _validate_sizes(y: int, x: int, k: int, dtype: str) -> int:
    if y < 1 or x < 1 or k < 1:
        raise ValueError(f"sizes must be positive, got y={y}, x={x}, k={k}")
    if dtype not in _DTYPE_BYTES:
        raise ValueError(f"unknown dtype {dtype!r}")
    return _DTYPE_BYTES[dtype]


def _sfu_ops(y: int, x: int, spec: NormalizerSpec, fused_exp: bool) -> int:
    per_score = spec.sfu_evals // 2 if fused_exp else spec.sfu_evals
    return y * x * per_score


def cost_naive_attention(
    y: int, x: int, k: int, dtype: str, spec: NormalizerSpec, fused_exp: bool = False
) -> CostReport:
    db = _validate_sizes(y, x, k, dtype)
    return CostReport(
        path="naive",
        y=y, x=x, k=k, dtype=dtype, spec=spec.name, g_y=None, s_x=None,
        bytes_global_to_shared=db * (y * k + 2 * x * k + 2 * y * x + y * k),
        bytes_global_to_shared_min_reuse=db * (y * k + 2 * x * k + y * k),
        bytes_shared_to_register=2 * db * (y * k + x * k + y * x),
        peak_onchip_bytes=db * (y * k + 2 * x * k + y * x + y * k) + 4 * y,
        score_matrix_bytes_materialized=db * y * x,
        score_tile_elements=y * x,
        matmul_flops=4 * y * x * k,
        elementwise_flops=4 * y * x + y,
        sfu_ops=_sfu_ops(y, x, spec, fused_exp),
        dtype_bytes=db,
    )


def cost_streamed_attention(
    y: int, x: int, k: int, dtype: str, spec: NormalizerSpec,
    tile: TileConfig, fused_exp: bool = False,
) -> CostReport:
    db = _validate_sizes(y, x, k, dtype)
    g = min(tile.g_y, y)
    s = min(tile.s_x, x)
    n_groups = math.ceil(y / g)
    n_chunks = math.ceil(x / s)
    return CostReport(
        path="streamed",
        y=y, x=x, k=k, dtype=dtype, spec=spec.name, g_y=tile.g_y, s_x=tile.s_x,
        bytes_global_to_shared=db * (y * k + n_groups * 2 * x * k + y * k),
        bytes_global_to_shared_min_reuse=db * (y * k + 2 * x * k + y * k),
        bytes_shared_to_register=2 * db * (k * y * n_chunks + k * x * n_groups + y * x),
        peak_onchip_bytes=db * (g * k + 2 * s * k + g * s + g * k) + 4 * g,
        score_matrix_bytes_materialized=0,
        score_tile_elements=g * s,
        matmul_flops=4 * y * x * k,
        elementwise_flops=4 * y * x + y,
        sfu_ops=_sfu_ops(y, x, spec, fused_exp),
        dtype_bytes=db,
    )


# Ratio marker used when the streamed path eliminates a cost entirely.
ELIMINATED = float("inf")


@dataclass(frozen=True)
class CostComparison:
    """Per-field naive/streamed ratios; inf means eliminated in streamed."""

    y: int
    x: int
    k: int
    ratios: dict
    notes: tuple

    def to_dict(self) -> dict:
        out = {"y": self.y, "x": self.x, "k": self.k, "notes": list(self.notes)}
        out["ratios"] = {
            f: ("eliminated" if math.isinf(r) else r) for f, r in self.ratios.items()
        }
        return out


def compare_reports(naive: CostReport, streamed: CostReport) -> CostComparison:
    """Ratio (naive / streamed) for every cost field, plus scaling notes."""
    if (naive.y, naive.x, naive.k, naive.dtype) != (streamed.y, streamed.x, streamed.k, streamed.dtype):
        raise ValueError(
            f"reports describe different problems: "
            f"{(naive.y, naive.x, naive.k, naive.dtype)} vs {(streamed.y, streamed.x, streamed.k, streamed.dtype)}"
        )
    ratios = {}
    for f in COST_FIELDS:
        a = getattr(naive, f)
        b = getattr(streamed, f)
        if b == 0:
            ratios[f] = 1.0 if a == 0 else ELIMINATED
        else:
            ratios[f] = a / b
    notes = []
    if streamed.g_y is not None:
        notes.append(
            f"naive on-chip scores grow as y*x = {naive.score_tile_elements}; "
            f"streamed are tile-bounded at {streamed.score_tile_elements}"
        )
    if naive.sfu_ops == 0:
        notes.append("no special-function evaluations in either path")
    return CostComparison(naive.y, naive.x, naive.k, ratios, tuple(notes))
