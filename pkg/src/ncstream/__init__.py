"""Streamed normalized-contraction attention engine and analysis toolkit.

The engine generalizes attention's row normalization to any (a1, a2, b)
triple, streams it chunk-wise with a bounded working set, and verifies the
fused path against materializing oracles.  Around that core: a signed
attention model over gene bags, an analytic memory/FLOP/SFU cost model,
and a CLI for verification, desk-scale benchmarks and reports.
"""

from .attention import (
    AttentionConfig,
    ConfigError,
    ScoreBufferMeter,
    TileConfig,
    apply_multiplicity,
    default_score_scale,
    multi_head_attention,
    naive_generalized_attention,
    streamed_attention,
)
from .costmodel import (
    CostReport,
    compare_reports,
    cost_naive_attention,
    cost_streamed_attention,
)
from .grn import (
    CellSample,
    GRNConfig,
    GRNParams,
    extract_adjacency,
    grn_forward,
    grn_layer_forward,
    init_params,
    load_params,
    rms_norm,
    save_params,
)
from .normalizers import (
    BUILTIN_SPECS,
    SIGNED_L1,
    SOFTMAX,
    SPHERICAL,
    DegenerateDenominatorError,
    NormalizerSpec,
    get_spec,
    normalize,
    normalize_jvp,
    normalized_contraction,
)
from .rng import Xorshift64Star
from .streaming import (
    SafeStreamState,
    StreamState,
    accumulate,
    accumulate_safe,
    finalize,
    finalize_safe,
    init_safe_state,
    init_state,
    merge,
    streamed_normalized_contraction,
)
from .tensor import (
    CloseReport,
    DenseTensor,
    ShapeMismatchError,
    allclose,
    load_tensor,
    matmul,
    quantize_f16,
    save_tensor,
    transpose,
)

__version__ = "0.1.0"
