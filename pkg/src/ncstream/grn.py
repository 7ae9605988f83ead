"""Forward model over gene bags: signed attention with per-gene multiplicities.

One token per gene, no positional information (the input is a bag).  A cell
sample is just the multiplicity of each gene; that count scales the gene's
projected key rows at every layer, so a gene with multiplicity zero
contributes exactly nothing to anyone's attention output under the signed
L2 normalizer (a1(0) = a2(0) = 0).  Blocks are pre-norm: RMSNorm feeds each
sublayer and the residual adds the sublayer output back.  The pooled output
is the multiplicity-weighted mean of the final hidden states through a
linear head.

The query-key score matrix of a layer/head, row-normalized the same way the
attention rows are, reads as a signed gene-to-gene regulation map: positive
entries push the key gene's value vector into the query gene, negative
entries subtract it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.special import erf

from .attention import (
    ConfigError,
    TileConfig,
    apply_multiplicity_array,
    multi_head_attention_array,
)
from .normalizers import SPHERICAL
from .rng import Xorshift64Star
from .tensor import DenseTensor, load_tensor, save_tensor

_SQRT2 = np.sqrt(2.0)
_INIT_STD = 0.02


@dataclass(frozen=True)
class GRNConfig:
    n_genes: int
    d_model: int
    n_layers: int
    heads: int
    kv_heads: int
    n_outputs: int
    ffn_hidden: int | None = None  # None -> 4 * d_model
    rms_eps: float = 1e-6
    attn_denom_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if min(self.n_genes, self.d_model, self.heads, self.kv_heads, self.n_outputs) < 1:
            raise ConfigError("n_genes, d_model, heads, kv_heads, n_outputs must be >= 1")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.heads % self.kv_heads != 0:
            raise ConfigError(f"heads={self.heads} not a multiple of kv_heads={self.kv_heads}")
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.rms_eps <= 0 or self.attn_denom_eps <= 0:
            raise ConfigError("rms_eps and attn_denom_eps must be > 0")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @property
    def ffn_dim(self) -> int:
        return self.ffn_hidden if self.ffn_hidden is not None else 4 * self.d_model


@dataclass(frozen=True)
class GRNLayerParams:
    attn_gain: np.ndarray  # (k,)
    ffn_gain: np.ndarray   # (k,)
    w_q: np.ndarray        # (k, h*d)
    w_k: np.ndarray        # (k, h_kv*d)
    w_v: np.ndarray        # (k, h_kv*d)
    w_o: np.ndarray        # (h*d, k)
    w_ffn1: np.ndarray     # (k, ffn)
    w_ffn2: np.ndarray     # (ffn, k)


@dataclass(frozen=True)
class GRNParams:
    embedding: np.ndarray  # (x, k)
    layers: tuple
    w_out: np.ndarray      # (k, C)


@dataclass(frozen=True)
class CellSample:
    """Multiplicity of each gene; nonnegative reals, zero means absent."""

    multiplicities: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.multiplicities, dtype=np.float64)
        if m.ndim != 1:
            raise ValueError(f"multiplicities must be 1-D, got shape {m.shape}")
        if not np.isfinite(m).all() or (m < 0).any():
            raise ValueError("multiplicities must be finite and nonnegative")
        object.__setattr__(self, "multiplicities", m)


def rms_norm(x: np.ndarray, gain: np.ndarray, eps: float) -> np.ndarray:
    """gain_i * x_i / sqrt(mean(x^2) + eps), over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    ms = np.mean(x * x, axis=-1, keepdims=True)
    return np.asarray(gain) * x / np.sqrt(ms + eps)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def init_params(cfg: GRNConfig, seed: int | None = None) -> GRNParams:
    """Seeded Gaussian init, std 0.02 for all projections, gains 1.

    Draw order is fixed (embedding, then per layer q/k/v/o/ffn1/ffn2, then
    the output head) and the generator is the documented xorshift64* one,
    so the same seed yields bit-identical parameters everywhere.
    """
    rng = Xorshift64Star(cfg.seed if seed is None else seed)
    k, h, hkv, d, f = cfg.d_model, cfg.heads, cfg.kv_heads, cfg.head_dim, cfg.ffn_dim
    emb = rng.normal_matrix((cfg.n_genes, k), _INIT_STD)
    layers = []
    for _ in range(cfg.n_layers):
        layers.append(GRNLayerParams(
            attn_gain=np.ones(k),
            ffn_gain=np.ones(k),
            w_q=rng.normal_matrix((k, h * d), _INIT_STD),
            w_k=rng.normal_matrix((k, hkv * d), _INIT_STD),
            w_v=rng.normal_matrix((k, hkv * d), _INIT_STD),
            w_o=rng.normal_matrix((h * d, k), _INIT_STD),
            w_ffn1=rng.normal_matrix((k, f), _INIT_STD),
            w_ffn2=rng.normal_matrix((f, k), _INIT_STD),
        ))
    w_out = rng.normal_matrix((k, cfg.n_outputs), _INIT_STD)
    return GRNParams(emb, tuple(layers), w_out)


def _layer_qkv(h_state, m, layer, cfg):
    x = h_state.shape[0]
    normed = rms_norm(h_state, layer.attn_gain, cfg.rms_eps)
    q = (normed @ layer.w_q).reshape(x, cfg.heads, cfg.head_dim)
    k = apply_multiplicity_array(normed @ layer.w_k, m).reshape(x, cfg.kv_heads, cfg.head_dim)
    v = (normed @ layer.w_v).reshape(x, cfg.kv_heads, cfg.head_dim)
    return q, k, v


def grn_layer_forward(
    h_state: np.ndarray,
    m: np.ndarray,
    layer: GRNLayerParams,
    cfg: GRNConfig,
    path: str = "streamed",
    tile: TileConfig | None = None,
) -> np.ndarray:
    """One block: multiplicity-weighted signed attention, then the FFN.

    Pre-norm with residuals: H1 = H + Attn(RMSNorm(H)) Wo and
    out = H1 + FFN(RMSNorm(H1)), FFN(z) = GELU(z W1) W2.
    """
    x = h_state.shape[0]
    q, k, v = _layer_qkv(h_state, m, layer, cfg)
    spec = SPHERICAL.with_epsilon(cfg.attn_denom_eps)
    att = multi_head_attention_array(
        q, k, v, spec, cfg.heads, cfg.kv_heads, scale=1.0, tile=tile, path=path
    )
    h1 = h_state + att.reshape(x, cfg.heads * cfg.head_dim) @ layer.w_o
    ffn_in = rms_norm(h1, layer.ffn_gain, cfg.rms_eps)
    return h1 + gelu(ffn_in @ layer.w_ffn1) @ layer.w_ffn2


def grn_forward(
    sample: CellSample,
    params: GRNParams,
    cfg: GRNConfig,
    path: str = "streamed",
    tile: TileConfig | None = None,
) -> np.ndarray:
    """Run all layers and pool: logits = (multiplicity-weighted mean of H) W_out."""
    m = sample.multiplicities
    if m.shape[0] != cfg.n_genes:
        raise ValueError(f"sample has {m.shape[0]} genes, config expects {cfg.n_genes}")
    h_state = params.embedding.astype(np.float64, copy=True)
    for layer in params.layers:
        h_state = grn_layer_forward(h_state, m, layer, cfg, path, tile)
    total = float(m.sum())
    weights = m / total if total > 0 else np.full(cfg.n_genes, 1.0 / cfg.n_genes)
    pooled = weights @ h_state
    return pooled @ params.w_out


def extract_adjacency(
    sample: CellSample,
    params: GRNParams,
    cfg: GRNConfig,
    layer: int,
    head: int,
    eps: float | None = None,
) -> np.ndarray:
    """Signed regulation map: the row-normalized score matrix of one layer/head.

    Rows are query genes, columns key genes.  Computed at this sample's
    hidden states by the materializing path (a diagnostic, not a streamed
    op).  ``eps`` defaults to the model's denominator epsilon; pass 0 for
    the strict unit-norm check mode.
    """
    if not (0 <= layer < len(params.layers)):
        raise ConfigError(f"layer {layer} out of range [0, {len(params.layers)})")
    if not (0 <= head < cfg.heads):
        raise ConfigError(f"head {head} out of range [0, {cfg.heads})")
    m = sample.multiplicities
    h_state = params.embedding.astype(np.float64, copy=True)
    for lp in params.layers[:layer]:
        h_state = grn_layer_forward(h_state, m, lp, cfg)
    q, k, _ = _layer_qkv(h_state, m, params.layers[layer], cfg)
    kv = (head * cfg.kv_heads) // cfg.heads
    scores = q[:, head, :] @ k[:, kv, :].T
    eff_eps = cfg.attn_denom_eps if eps is None else eps
    spec = SPHERICAL.with_epsilon(eff_eps)
    den = spec.b((scores * scores).sum(axis=1) + eff_eps)
    bad = ~np.isfinite(den) | (den == 0)
    if bad.any():
        raise ConfigError(f"degenerate adjacency row {int(np.argmax(bad))} at eps={eff_eps}")
    return scores / den[:, None]


def write_adjacency_csv(adj: np.ndarray, path) -> None:
    """Long-form CSV: query gene id, key gene id, signed weight."""
    with open(path, "w", newline="") as fh:
        fh.write("query_gene,key_gene,weight\n")
        for i in range(adj.shape[0]):
            for j in range(adj.shape[1]):
                fh.write(f"{i},{j},{float(adj[i, j])!r}\n")


def _named_tensors(params: GRNParams) -> dict:
    named = {"embedding": params.embedding, "w_out": params.w_out}
    for i, layer in enumerate(params.layers):
        for fname in ("attn_gain", "ffn_gain", "w_q", "w_k", "w_v", "w_o", "w_ffn1", "w_ffn2"):
            named[f"layer{i}.{fname}"] = getattr(layer, fname)
    return named


def save_params(params: GRNParams, cfg: GRNConfig, directory) -> None:
    """Write a JSON manifest plus one NCT1 container per named tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    named = _named_tensors(params)
    manifest = {
        "format": "ncstream-grn-params",
        "config": asdict(cfg),
        "tensors": {name: f"{name}.nct" for name in named},
    }
    for name, arr in named.items():
        save_tensor(DenseTensor(arr, "float64"), directory / f"{name}.nct")
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_params(directory) -> tuple[GRNParams, GRNConfig]:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "ncstream-grn-params":
        raise ValueError(f"not a parameter manifest: {directory / 'manifest.json'}")
    cfg = GRNConfig(**manifest["config"])
    tensors = {
        name: load_tensor(directory / fname).array for name, fname in manifest["tensors"].items()
    }
    layers = []
    for i in range(cfg.n_layers):
        layers.append(GRNLayerParams(**{
            f: tensors[f"layer{i}.{f}"]
            for f in ("attn_gain", "ffn_gain", "w_q", "w_k", "w_v", "w_o", "w_ffn1", "w_ffn2")
        }))
    return GRNParams(tensors["embedding"], tuple(layers), tensors["w_out"]), cfg
