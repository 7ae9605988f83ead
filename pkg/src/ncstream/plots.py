"""Figure rendering for the report paths.

Charts are written next to the CSV artifacts, SVG by default.  Output is
byte-deterministic for a fixed data set: the SVG id hash salt is pinned and
the creation date is stripped.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams.update({
    "svg.hashsalt": "ncstream",
    "figure.figsize": (9.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})

_PATH_STYLE = {"naive": dict(color="#c0392b", marker="o"), "streamed": dict(color="#2c6fbb", marker="s")}


def _savefig(fig, path) -> None:
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)


def bench_chart(rows: list[dict], path) -> None:
    """Wall time and peak score-buffer bytes against the key/value length x.

    Rows are the bench CSV records; entries whose time is "OOM" appear only
    as gaps in the time series.
    """
    fig, (ax_t, ax_m) = plt.subplots(1, 2)
    for pname, style in _PATH_STYLE.items():
        series = sorted((r for r in rows if r["path"] == pname), key=lambda r: r["x"])
        xs = [r["x"] for r in series]
        times = [r["median_time_s"] if r["median_time_s"] != "OOM" else None for r in series]
        mems = [r["peak_score_buffer_bytes"] for r in series]
        ax_t.plot([x for x, t in zip(xs, times) if t is not None],
                  [t for t in times if t is not None], label=pname, **style)
        ax_m.plot([x for x, m in zip(xs, mems) if m != ""],
                  [m for m in mems if m != ""], label=pname, **style)
    for ax, ylabel in ((ax_t, "median wall time [s]"), (ax_m, "peak score buffer [bytes]")):
        ax.set_xlabel("x (key/value length)")
        ax.set_ylabel(ylabel)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.legend()
    fig.suptitle("naive vs streamed attention")
    fig.tight_layout()
    _savefig(fig, path)


def adjacency_heatmap(adj, path, title: str = "signed gene-gene regulation") -> None:
    """Diverging heatmap of a signed adjacency matrix (red up, blue down)."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    vmax = max(abs(float(adj.min())), abs(float(adj.max())), 1e-12)
    im = ax.imshow(adj, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_xlabel("key gene")
    ax.set_ylabel("query gene")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="normalized score")
    fig.tight_layout()
    _savefig(fig, path)
