"""PNG figures for benchmark result tables."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _series(rows, key_x, key_y, label_of):
    series: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        y = row[key_y]
        if isinstance(y, float) and math.isnan(y):
            continue
        series.setdefault(label_of(row), []).append((row[key_x], y))
    return {k: sorted(v) for k, v in series.items()}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_portfolio(aggregates, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    label = (lambda r: r["method"] if r["ambiguity"] == "none" else f"{r['method']} ({r['ambiguity']})")
    for name, pts in _series(aggregates, "N", "oos_mean", label).items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("training samples N")
    ax.set_ylabel("mean out-of-sample cost")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_lotsizing(aggregates, path) -> Path:
    rows = [r for r in aggregates if r["method"] != "saa_full"]
    fig, ax = plt.subplots(figsize=(6, 4))
    label = (lambda r: f"{r['method']} (N={r['N']})")
    for name, pts in _series(rows, "M", "error_mean", label).items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xlabel("reduced size M")
    ax.set_ylabel("mean approximation error (%)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_table(table, out_dir) -> dict[str, Path]:
    out = Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    if table.config.problem == "portfolio":
        return {"portfolio_oos.png": plot_portfolio(table.aggregates, out / "portfolio_oos.png")}
    return {"lotsizing_error.png": plot_lotsizing(table.aggregates, out / "lotsizing_error.png")}
