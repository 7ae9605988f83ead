"""Command-line surface: verification, desk-scale benchmarks, cost reports, demo.

    ncstream --cmd verify   [--seed N] [--inject-fault]
    ncstream --cmd bench    [--sizes YxXxK ...] [--spec NAME] [--gy G --sx S]
                            [--dtype float32|float64] [--f16] [--reps N] [--out DIR]
    ncstream --cmd cost     [--sizes YxXxK ...| --preset anchor] [--spec NAME] ...
    ncstream --cmd grn-demo [--seed N] [--out DIR]

A JSON config file (--config FILE) may carry any of the flag values by
name; config-file values override flags.  Exit codes: 0 success, 1
property/verification failure, 2 usage or configuration error.

CSV headers are stable:
  bench.csv: y,x,k,spec,path,tile,dtype,median_time_s,peak_score_buffer_bytes,repetitions
  cost.csv:  path,y,x,k,spec,dtype,g_y,s_x,<cost fields in costmodel.COST_FIELDS order>

All synthesized inputs come from the documented xorshift64* generator, so
every data artifact is deterministic given (config, seed); measured wall
times are the one exception.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attention import (
    ConfigError,
    ScoreBufferMeter,
    TileConfig,
    naive_attention_array,
    streamed_attention_array,
)
from .costmodel import COST_FIELDS, compare_reports, cost_naive_attention, cost_streamed_attention
from .grn import (
    CellSample,
    GRNConfig,
    GRNParams,
    extract_adjacency,
    grn_forward,
    init_params,
    save_params,
    write_adjacency_csv,
)
from .normalizers import get_spec
from .rng import Xorshift64Star
from .verification import run_verification

# The naive oracle materializes y*x scores; the default sweep refuses to go
# past this so it stays runnable on a laptop.  Larger sizes belong to the
# analytic cost command, which materializes nothing.
MAX_NAIVE_ELEMENTS = 2 ** 24

BENCH_CSV_HEADER = ["y", "x", "k", "spec", "path", "tile", "dtype",
                    "median_time_s", "peak_score_buffer_bytes", "repetitions"]
COST_CSV_HEADER = ["path", "y", "x", "k", "spec", "dtype", "g_y", "s_x"] + COST_FIELDS

PRESETS = {
    # One report at the wave-quantization-friendly anchor length 13824 = 108 * 128.
    "anchor": [(13824, 13824, 128)],
}

DEFAULT_SIZES = [(1024, 1024, 128), (2048, 2048, 128), (4096, 4096, 128)]


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    sizes: list
    spec_name: str
    g_y: int
    s_x: int
    dtype: str
    f16: bool
    seed: int
    reps: int
    out: Path
    preset: str | None = None
    inject_fault: bool = False
    fused_exp: bool = False


def _parse_size(token) -> tuple[int, int, int]:
    if isinstance(token, (list, tuple)):
        parts = [int(p) for p in token]
    else:
        parts = [int(p) for p in str(token).lower().split("x")]
    if len(parts) != 3 or min(parts) < 1:
        raise UsageError(f"bad size {token!r}, expected YxXxK with positive entries")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncstream", description=__doc__.splitlines()[0])
    p.add_argument("--cmd", required=True, choices=["verify", "bench", "cost", "grn-demo"])
    p.add_argument("--sizes", nargs="+", default=None, metavar="YxXxK",
                   help="problem sizes, e.g. 1024x1024x128")
    p.add_argument("--spec", default="spherical", help="normalizer name (spherical|softmax|signed_l1)")
    p.add_argument("--gy", type=int, default=64, help="query group tile size")
    p.add_argument("--sx", type=int, default=64, help="key/value stream chunk size")
    p.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    p.add_argument("--f16", action="store_true", help="emulate binary16 rounding in the streamed path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5, help="timed repetitions per bench cell")
    p.add_argument("--out", default="ncstream-out", help="output directory for artifacts")
    p.add_argument("--preset", default=None, choices=sorted(PRESETS), help="named size preset (cost)")
    p.add_argument("--config", default=None, help="JSON file whose values override flags")
    p.add_argument("--inject-fault", action="store_true",
                   help="test hook: flip one accumulator sign during verify")
    p.add_argument("--fused-exp", action="store_true",
                   help="cost model: count a shared a1=a2 exponential once per score")
    return p


_CONFIG_KEYS = {"cmd", "sizes", "spec", "gy", "sx", "dtype", "f16", "seed", "reps",
                "out", "preset", "inject_fault", "fused_exp"}


def parse_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = vars(args)
    if args.config is not None:
        with open(args.config) as fh:
            overrides = json.load(fh)
        unknown = set(overrides) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(overrides)
    sizes = values["sizes"]
    cfg = RunConfig(
        command=values["cmd"],
        sizes=[_parse_size(t) for t in sizes] if sizes is not None else None,
        spec_name=values["spec"],
        g_y=int(values["gy"]),
        s_x=int(values["sx"]),
        dtype=values["dtype"],
        f16=bool(values["f16"]),
        seed=int(values["seed"]),
        reps=int(values["reps"]),
        out=Path(values["out"]),
        preset=values["preset"],
        inject_fault=bool(values["inject_fault"]),
        fused_exp=bool(values["fused_exp"]),
    )
    get_spec(cfg.spec_name)  # validate the name up front
    if cfg.dtype not in ("float32", "float64"):
        raise UsageError(f"bad dtype {cfg.dtype!r}")
    if cfg.reps < 1:
        raise UsageError("reps must be >= 1")
    if cfg.f16 and cfg.dtype != "float32":
        raise UsageError("--f16 requires --dtype float32")
    TileConfig(cfg.g_y, cfg.s_x)  # validates positivity
    return cfg


def cmd_verify(cfg: RunConfig) -> int:
    results = run_verification(seed=cfg.seed, inject_fault=cfg.inject_fault)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"[{status}] {r.name}: worst tolerance utilization {r.worst:.3g} — {r.detail}"
        if not r.passed and r.fail_seed is not None:
            line += f" (rerun seed {r.fail_seed})"
        print(line)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verification FAILED in: {', '.join(failed)}", file=sys.stderr)
        return 1
    print("all verification suites passed")
    return 0


def _bench_inputs(y, x, k, dtype, seed):
    rng = Xorshift64Star(seed)
    dt = np.float32 if dtype == "float32" else np.float64
    return (
        rng.normal_matrix((y, k)).astype(dt),
        rng.normal_matrix((x, k)).astype(dt),
        rng.normal_matrix((x, k)).astype(dt),
    )


def cmd_bench(cfg: RunConfig) -> int:
    sizes = cfg.sizes if cfg.sizes is not None else DEFAULT_SIZES
    for y, x, _ in sizes:
        if y * x > MAX_NAIVE_ELEMENTS:
            raise UsageError(
                f"bench size {y}x{x} materializes more than {MAX_NAIVE_ELEMENTS} naive scores; "
                "use --cmd cost for large sizes"
            )
    spec = get_spec(cfg.spec_name)
    tile = TileConfig(cfg.g_y, cfg.s_x)
    dtype_bytes = 4 if cfg.dtype == "float32" else 8
    rows = []
    for idx, (y, x, k) in enumerate(sizes):
        q, kk, v = _bench_inputs(y, x, k, cfg.dtype, cfg.seed + idx)
        scale = 1.0 if "sign_preserving" in spec.properties else k ** -0.5
        runners = {
            "naive": lambda m: naive_attention_array(q, kk, v, spec, scale, meter=m),
            "streamed": lambda m: streamed_attention_array(
                q, kk, v, spec, scale, tile, f16=cfg.f16, meter=m),
        }
        for pname, run in runners.items():
            meter = ScoreBufferMeter()
            try:
                run(meter)  # warmup
                times = []
                for _ in range(cfg.reps):
                    t0 = time.perf_counter()
                    run(meter)
                    times.append(time.perf_counter() - t0)
                median = statistics.median(times)
                peak = meter.peak_bytes(dtype_bytes)
            except MemoryError:
                median = "OOM"
                peak = ""
            rows.append({
                "y": y, "x": x, "k": k, "spec": spec.name, "path": pname,
                "tile": f"{tile.g_y}x{tile.s_x}", "dtype": cfg.dtype,
                "median_time_s": median, "peak_score_buffer_bytes": peak,
                "repetitions": cfg.reps,
            })
            shown = median if median == "OOM" else f"{median:.4f}s"
            print(f"y={y} x={x} k={k} {pname:>8}: {shown}  peak score buffer {peak} bytes")
    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / "bench.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    from .plots import bench_chart  # deferred: pulls in matplotlib

    bench_chart(rows, cfg.out / "bench.svg")
    print(f"wrote {csv_path} and {cfg.out / 'bench.svg'}")
    return 0


def cmd_cost(cfg: RunConfig) -> int:
    if cfg.preset is not None:
        sizes = PRESETS[cfg.preset]
    elif cfg.sizes is not None:
        sizes = cfg.sizes
    else:
        sizes = DEFAULT_SIZES
    spec = get_spec(cfg.spec_name)
    tile = TileConfig(cfg.g_y, cfg.s_x)
    reports = []
    comparisons = []
    for y, x, k in sizes:
        naive = cost_naive_attention(y, x, k, cfg.dtype, spec, fused_exp=cfg.fused_exp)
        streamed = cost_streamed_attention(y, x, k, cfg.dtype, spec, tile, fused_exp=cfg.fused_exp)
        cmp_result = compare_reports(naive, streamed)
        reports.extend([naive, streamed])
        comparisons.append(cmp_result)
        print(f"-- y={y} x={x} k={k} spec={spec.name} dtype={cfg.dtype} tile={tile.g_y}x{tile.s_x}")
        for f in COST_FIELDS:
            ratio = cmp_result.ratios[f]
            shown = "eliminated" if ratio == float("inf") else f"{ratio:.4g}"
            print(f"   {f:<34} naive={getattr(naive, f):<16} streamed={getattr(streamed, f):<16} ratio={shown}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / "cost.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COST_CSV_HEADER)
        writer.writeheader()
        for r in reports:
            row = r.to_dict()
            row["g_y"] = "" if row["g_y"] is None else row["g_y"]
            row["s_x"] = "" if row["s_x"] is None else row["s_x"]
            writer.writerow(row)
    json_path = cfg.out / "cost.json"
    with open(json_path, "w") as fh:
        json.dump({
            "reports": [r.to_dict() for r in reports],
            "comparisons": [c.to_dict() for c in comparisons],
        }, fh, indent=2, sort_keys=True)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_grn_demo(cfg: RunConfig) -> int:
    model_cfg = GRNConfig(n_genes=12, d_model=16, n_layers=2, heads=4, kv_heads=2,
                          n_outputs=3, seed=cfg.seed)
    params = init_params(model_cfg)
    rng = Xorshift64Star(cfg.seed + 1)
    m = np.floor(rng.uniforms(model_cfg.n_genes) * 6.0)
    sample = CellSample(m)
    logits = grn_forward(sample, params, model_cfg)
    print(f"multiplicities: {m.astype(int).tolist()}")
    print(f"logits: {logits.tolist()}")

    cfg.out.mkdir(parents=True, exist_ok=True)
    logits_path = cfg.out / "grn_logits.csv"
    with open(logits_path, "w", newline="") as fh:
        fh.write("output_index,logit\n")
        for i, v in enumerate(logits):
            fh.write(f"{i},{float(v)!r}\n")
    adj = extract_adjacency(sample, params, model_cfg, layer=0, head=0)
    adj_path = cfg.out / "grn_adjacency.csv"
    write_adjacency_csv(adj, adj_path)
    save_params(params, model_cfg, cfg.out / "params")
    from .plots import adjacency_heatmap

    adjacency_heatmap(adj, cfg.out / "grn_adjacency.svg")

    zero_genes = [int(i) for i in np.flatnonzero(m == 0)]
    if not zero_genes:
        print("no zero-multiplicity genes in this sample; deletion check is vacuous")
    else:
        worst = 0.0
        for g in zero_genes:
            keep = np.arange(model_cfg.n_genes) != g
            reduced_cfg = replace(model_cfg, n_genes=model_cfg.n_genes - 1)
            reduced = GRNParams(params.embedding[keep], params.layers, params.w_out)
            logits_del = grn_forward(CellSample(m[keep]), reduced, reduced_cfg)
            worst = max(worst, float(np.abs(logits_del - logits).max()))
        ok = worst <= 1e-12
        print(f"zero-multiplicity deletion invariant for genes {zero_genes}: "
              f"max |delta logit| = {worst:.3e} -> {'held' if ok else 'VIOLATED'}")
        if not ok:
            return 1
    print(f"wrote {logits_path}, {adj_path}, {cfg.out / 'grn_adjacency.svg'}, "
          f"{cfg.out / 'params'}")
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except (UsageError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if cfg.command == "verify":
            return cmd_verify(cfg)
        if cfg.command == "bench":
            return cmd_bench(cfg)
        if cfg.command == "cost":
            return cmd_cost(cfg)
        return cmd_grn_demo(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
