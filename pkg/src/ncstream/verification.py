"""Self-contained property suites behind the CLI verify command.

Each suite runs a desk-scale sweep of one family of guarantees and reports
its worst tolerance utilization: max over all checked elements of
|got - want| / (atol + rtol * |want|), so anything below 1.0 passes with
headroom to spare.  On failure the result carries the per-case seed that
reproduces it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import streaming
from .attention import (
    ScoreBufferMeter,
    TileConfig,
    naive_attention_array,
    streamed_attention_array,
)
from .costmodel import cost_naive_attention, cost_streamed_attention
from .grn import CellSample, GRNConfig, GRNParams, extract_adjacency, grn_forward, init_params
from .normalizers import (
    SIGNED_L1,
    SOFTMAX,
    SPHERICAL,
    normalize,
    normalize_jvp,
    normalized_contraction,
)

ALL_SPECS = (SPHERICAL, SOFTMAX, SIGNED_L1)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    worst: float  # worst tolerance utilization (<= 1.0 passes)
    detail: str
    fail_seed: int | None = None


def _utilization(got: np.ndarray, want: np.ndarray, rtol: float, atol: float) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    return float((np.abs(got - want) / (atol + rtol * np.abs(want))).max())


def _qkv(rng, y, x, k, dtype):
    return (
        rng.standard_normal((y, k)).astype(dtype),
        rng.standard_normal((x, k)).astype(dtype),
        rng.standard_normal((x, k)).astype(dtype),
    )


def validate_declared_properties(spec, seed: int = 0, n_cases: int = 100) -> list[str]:
    """Check every declared property flag numerically; returns violations.

    Flags are claims: a spec (including a user-supplied one) is only trusted
    after this comes back empty.
    """
    rng = np.random.default_rng(seed)
    violations = []
    for _ in range(n_cases):
        n = int(rng.integers(1, 24))
        x = rng.standard_normal(n) * 3.0
        x[np.abs(x) < 1e-6] = 0.5
        base = normalize(x, spec)
        if "sign_preserving" in spec.properties:
            if not np.all(np.sign(base) == np.sign(x)):
                violations.append(f"sign_preserving violated at x={x.tolist()}")
                break
        if "positive_scale_invariant" in spec.properties:
            for lam in (0.5, 3.0, 100.0):
                if _utilization(normalize(lam * x, spec), base, 1e-10, 1e-13) > 1.0:
                    violations.append(f"positive_scale_invariant violated at lam={lam}, x={x.tolist()}")
                    break
        if "shift_invariant" in spec.properties:
            for c in (-20.0, 0.7, 20.0):
                if _utilization(normalize(x + c, spec), base, 1e-9, 1e-12) > 1.0:
                    violations.append(f"shift_invariant violated at c={c}, x={x.tolist()}")
                    break
        if violations:
            break
    return violations


def suite_oracle_equivalence(seed: int) -> SuiteResult:
    """Streamed attention equals the materializing oracle for every tiling."""
    name = "oracle-equivalence"
    shapes = [(1, 1), (2, 3), (16, 16), (33, 17), (97, 33)]
    tiles = [TileConfig(1, 1), TileConfig(5, 3), TileConfig(128, 128)]
    tols = {np.float64: (1e-12, 1e-14), np.float32: (1e-5, 1e-6)}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dtype, (rtol, atol) in tols.items():
        for y, x in shapes:
            for k in (1, 8):
                case_seed = int(rng.integers(2**32))
                q, kk, v = _qkv(np.random.default_rng(case_seed), y, x, k, dtype)
                for spec in ALL_SPECS:
                    scale = 1.0 if "sign_preserving" in spec.properties else k ** -0.5
                    want = naive_attention_array(q, kk, v, spec, scale)
                    for tile in tiles:
                        got = streamed_attention_array(q, kk, v, spec, scale, tile)
                        u = _utilization(got, want, rtol, atol)
                        worst = max(worst, u)
                        if u > 1.0:
                            detail = (f"{spec.name} y={y} x={x} k={k} tile=({tile.g_y},{tile.s_x}) "
                                      f"dtype={np.dtype(dtype).name} seed={case_seed}")
                            return SuiteResult(name, False, u, detail, case_seed)
    return SuiteResult(name, True, worst, "streamed == naive across shapes, tiles, dtypes")


def suite_morphism(seed: int) -> SuiteResult:
    """Chunked accumulation equals one-shot; merge commutes and associates."""
    name = "morphism"
    rng = np.random.default_rng(seed)
    worst = 0.0
    for spec in ALL_SPECS:
        for _ in range(200):
            case_seed = int(rng.integers(2**32))
            r = np.random.default_rng(case_seed)
            n = int(r.integers(1, 121))
            x = r.standard_normal(n)
            y = r.standard_normal(n)
            chunk = int(r.integers(1, n + 2))
            want = normalized_contraction(x, y, spec)
            got = streaming.streamed_normalized_contraction(x, y, spec, chunk)
            u = abs(got - want) / (1e-15 + 1e-12 * abs(want))
            worst = max(worst, u)
            if u > 1.0:
                return SuiteResult(name, False, u,
                                   f"{spec.name} n={n} chunk={chunk} seed={case_seed}", case_seed)
    # Exact rational splits for the polynomial/absolute-value triples.
    for spec in (SPHERICAL, SIGNED_L1):
        for _ in range(50):
            case_seed = int(rng.integers(2**32))
            r = np.random.default_rng(case_seed)
            n = int(r.integers(1, 12))
            xs = [Fraction(int(v)) for v in r.integers(-5, 6, n)]
            ys = [Fraction(int(v)) for v in r.integers(-5, 6, n)]
            chunk = int(r.integers(1, n + 1))
            one = streaming.accumulate(streaming.init_state(), xs, ys, spec)
            st = streaming.init_state()
            for lo in range(0, n, chunk):
                st = streaming.accumulate(st, xs[lo:lo + chunk], ys[lo:lo + chunk], spec)
            if st.o != one.o or st.z != one.z:
                return SuiteResult(name, False, float("inf"),
                                   f"exact split mismatch {spec.name} seed={case_seed}", case_seed)
    for _ in range(200):
        case_seed = int(rng.integers(2**32))
        r = np.random.default_rng(case_seed)
        states = [streaming.StreamState(streaming.CONTRACTION, float(o), abs(float(z)))
                  for o, z in r.standard_normal((3, 2))]
        ab = streaming.merge(states[0], states[1])
        ba = streaming.merge(states[1], states[0])
        abc = streaming.merge(ab, states[2])
        acb = streaming.merge(states[0], streaming.merge(states[1], states[2]))
        u = max(
            abs(ab.o - ba.o) + abs(ab.z - ba.z),
            abs(abc.o - acb.o) / (1e-15 + 1e-12 * abs(acb.o)),
            abs(abc.z - acb.z) / (1e-15 + 1e-12 * abs(acb.z)),
        )
        worst = max(worst, u)
        if u > 1.0:
            return SuiteResult(name, False, u, f"merge algebra seed={case_seed}", case_seed)
    return SuiteResult(name, True, worst, "streamed == one-shot (float + exact), merge abelian")


def suite_invariance(seed: int) -> SuiteResult:
    """Declared normalizer properties, observed end to end."""
    name = "invariance"
    rng = np.random.default_rng(seed)
    worst = 0.0

    def check(u, what, case_seed):
        nonlocal worst
        worst = max(worst, u)
        if u > 1.0:
            return SuiteResult(name, False, u, f"{what} seed={case_seed}", case_seed)
        return None

    for _ in range(25):
        case_seed = int(rng.integers(2**32))
        r = np.random.default_rng(case_seed)
        q, k, v = _qkv(r, 8, 12, 8, np.float64)
        tile = TileConfig(3, 5)
        base = streamed_attention_array(q, k, v, SPHERICAL, 1.0, tile)
        for lam in (0.5, 3.0, 100.0):
            scaled = streamed_attention_array(lam * q, k, v, SPHERICAL, 1.0, tile)
            bad = check(_utilization(scaled, base, 1e-10, 1e-13), f"scale invariance lam={lam}", case_seed)
            if bad:
                return bad
        u_vec = r.standard_normal(8)
        shifted_k = k + np.outer(np.ones(12), u_vec)
        soft = streamed_attention_array(q, k, v, SOFTMAX, 8 ** -0.5, tile)
        soft_shift = streamed_attention_array(q, shifted_k, v, SOFTMAX, 8 ** -0.5, tile)
        bad = check(_utilization(soft_shift, soft, 1e-9, 1e-12), "shift invariance", case_seed)
        if bad:
            return bad
        perm = r.permutation(12)
        for spec in ALL_SPECS:
            scale = 1.0 if "sign_preserving" in spec.properties else 8 ** -0.5
            o1 = streamed_attention_array(q, k, v, spec, scale, tile)
            o2 = streamed_attention_array(q, k[perm], v[perm], spec, scale, tile)
            bad = check(_utilization(o2, o1, 1e-12, 1e-14), f"key permutation {spec.name}", case_seed)
            if bad:
                return bad
        vec = r.standard_normal(9)
        vec[np.abs(vec) < 1e-3] = 1.0
        odd = normalize(-vec, SPHERICAL) + normalize(vec, SPHERICAL)
        bad = check(float(np.abs(odd).max()) / 1e-12, "odd symmetry", case_seed)
        if bad:
            return bad
    for spec in ALL_SPECS:
        violations = validate_declared_properties(spec, seed=seed)
        if violations:
            return SuiteResult(name, False, float("inf"),
                               f"declared flags of {spec.name}: {violations[0]}", seed)
    h = 1e-6
    for spec in (SPHERICAL, SOFTMAX):
        for _ in range(200):
            case_seed = int(rng.integers(2**32))
            r = np.random.default_rng(case_seed)
            n = int(r.integers(2, 24))
            x = r.standard_normal(n) * 2.0
            while np.linalg.norm(x) < 0.1:
                x = r.standard_normal(n) * 2.0
            v = r.standard_normal(n)
            jvp = normalize_jvp(x, v, spec)
            fd = (normalize(x + h * v, spec) - normalize(x - h * v, spec)) / (2 * h)
            u = float(np.linalg.norm(jvp - fd)) / (1e-4 * max(float(np.linalg.norm(fd)), 1e-8))
            worst = max(worst, u)
            if u > 1.0:
                return SuiteResult(name, False, u, f"jvp vs fd {spec.name} seed={case_seed}", case_seed)
    return SuiteResult(name, True, worst, "scale/shift/permutation/sign/jvp properties hold")


def suite_cost_instrumentation(seed: int) -> SuiteResult:
    """Analytic score-tile/working-set figures match the instrumented loop."""
    name = "cost-instrumentation"
    rng = np.random.default_rng(seed)
    combos = [(64, 64, TileConfig(16, 16)), (97, 131, TileConfig(13, 7)), (16, 256, TileConfig(128, 2048))]
    for y, x, tile in combos:
        case_seed = int(rng.integers(2**32))
        q, k, v = _qkv(np.random.default_rng(case_seed), y, x, 8, np.float64)
        meter = ScoreBufferMeter()
        streamed_attention_array(q, k, v, SPHERICAL, 1.0, tile, meter=meter)
        expect = min(tile.g_y, y) * min(tile.s_x, x)
        report = cost_streamed_attention(y, x, 8, "float64", SPHERICAL, tile)
        if meter.peak_elements != expect or report.score_tile_elements != expect:
            return SuiteResult(name, False, float("inf"),
                               f"tile ({tile.g_y},{tile.s_x}) y={y} x={x}: meter={meter.peak_elements} "
                               f"model={report.score_tile_elements} want={expect}", case_seed)
        nmeter = ScoreBufferMeter()
        naive_attention_array(q, k, v, SPHERICAL, 1.0, meter=nmeter)
        nreport = cost_naive_attention(y, x, 8, "float64", SPHERICAL)
        if nmeter.peak_elements != y * x or nreport.score_tile_elements != y * x:
            return SuiteResult(name, False, float("inf"), f"naive materialization y={y} x={x}", case_seed)
    tile = TileConfig(16, 16)
    peaks = {cost_streamed_attention(64, x, 8, "float64", SPHERICAL, tile).peak_onchip_bytes
             for x in (256, 512, 1024)}
    if len(peaks) != 1:
        return SuiteResult(name, False, float("inf"), f"on-chip bytes vary with x: {sorted(peaks)}", None)
    return SuiteResult(name, True, 0.0, "instrumented peaks equal analytic tile figures")


def suite_f16_accuracy(seed: int) -> SuiteResult:
    """Half-precision emulation stays within 0.01 of the float32 reference."""
    name = "f16-accuracy"
    rng = np.random.default_rng(seed)
    q, k, v = _qkv(rng, 256, 256, 64, np.float32)
    ref = naive_attention_array(q, k, v, SPHERICAL, 1.0)
    got = streamed_attention_array(q, k, v, SPHERICAL, 1.0, TileConfig(32, 32), f16=True)
    frac = float(np.mean(np.abs(got - ref) <= 0.01))
    if frac < 0.99:
        return SuiteResult(name, False, 1.0 - frac, f"only {frac:.2%} within 0.01", seed)
    return SuiteResult(name, True, 1.0 - frac, f"{frac:.2%} of elements within 0.01 of float32")


def suite_grn(seed: int) -> SuiteResult:
    """Bag-model guarantees: deletion, relabeling, streamed==naive, adjacency."""
    name = "grn"
    cfg = GRNConfig(n_genes=10, d_model=16, n_layers=2, heads=4, kv_heads=2, n_outputs=3, seed=seed)
    params = init_params(cfg)
    rng = np.random.default_rng(seed)
    m = rng.integers(0, 6, cfg.n_genes).astype(np.float64)
    m[0] = 0.0
    sample = CellSample(m)
    logits = grn_forward(sample, params, cfg)
    naive_logits = grn_forward(sample, params, cfg, path="naive")
    u = _utilization(logits, naive_logits, 1e-10, 1e-13)
    if u > 1.0:
        return SuiteResult(name, False, u, "streamed vs naive forward", seed)
    keep = np.arange(cfg.n_genes) != 0
    cfg_del = replace(cfg, n_genes=cfg.n_genes - 1)
    params_del = GRNParams(params.embedding[keep], params.layers, params.w_out)
    logits_del = grn_forward(CellSample(m[keep]), params_del, cfg_del)
    u2 = _utilization(logits_del, logits, 1e-12, 1e-14)
    if u2 > 1.0:
        return SuiteResult(name, False, u2, "zero-multiplicity deletion changed logits", seed)
    perm = rng.permutation(cfg.n_genes)
    params_perm = GRNParams(params.embedding[perm], params.layers, params.w_out)
    logits_perm = grn_forward(CellSample(m[perm]), params_perm, cfg)
    u3 = _utilization(logits_perm, logits, 1e-12, 1e-14)
    if u3 > 1.0:
        return SuiteResult(name, False, u3, "gene relabeling changed logits", seed)
    adj = extract_adjacency(sample, params, cfg, layer=0, head=0, eps=0.0)
    norms = np.linalg.norm(adj, axis=1)
    u4 = float(np.abs(norms - 1.0).max()) / 1e-9
    if u4 > 1.0:
        return SuiteResult(name, False, u4, "adjacency rows not unit norm", seed)
    if not np.array_equal(init_params(cfg).embedding, params.embedding):
        return SuiteResult(name, False, float("inf"), "seeded init not deterministic", seed)
    return SuiteResult(name, True, max(u, u2, u3, u4), "deletion/relabeling/path/adjacency hold")


ALL_SUITES = (
    suite_morphism,
    suite_oracle_equivalence,
    suite_invariance,
    suite_cost_instrumentation,
    suite_f16_accuracy,
    suite_grn,
)


def run_verification(seed: int = 0, inject_fault: bool = False) -> list[SuiteResult]:
    """Run every suite; with fault injection on, the morphism suite must fail."""
    results = []
    if inject_fault:
        streaming.set_fault_injection(True)
    try:
        for suite in ALL_SUITES:
            results.append(suite(seed))
    finally:
        streaming.set_fault_injection(False)
    return results
