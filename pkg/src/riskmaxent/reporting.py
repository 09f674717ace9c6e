"""Run outputs: delimited tables, occupancy graymaps, and summary figures.

CSV schemas are append-only contracts: columns are never reordered or
renamed between versions. Floats are written with ``repr`` so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

EPOCH_CSV_FIXED_COLUMNS = [
    "epoch",
    "mean_entropy",
    "cvar_entropy",
    "var_entropy",
    "kl_stop",
    "offpolicy_steps",
]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


class EpochCsvWriter:
    """Streams one row per epoch so long runs can be monitored in flight."""

    def __init__(self, path, config_names: Sequence[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.config_names = list(config_names)
        header = EPOCH_CSV_FIXED_COLUMNS + [f"ent_{name}" for name in self.config_names]
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(header)
        self._fh.flush()

    def write(self, report) -> None:
        row = [
            report.epoch,
            _fmt(report.mean_entropy),
            _fmt(report.cvar_entropy),
            _fmt(report.var_entropy),
            _fmt(report.kl_stop),
            report.offpolicy_steps,
        ]
        row += [_fmt(report.per_config_entropy.get(name, float("nan"))) for name in self.config_names]
        self._writer.writerow(row)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_heatmap(trajectories, out_path, side: float, grid: int = 40) -> np.ndarray:
    """Bin visited states on a grid x grid occupancy map and write it as a
    plain-text portable graymap (P2), counts normalized to [0, 255].

    ``trajectories`` is a sequence of (T, 2) state arrays (or one stacked
    (n, T, 2) array). Row 0 of the map is the top of the arena (max y).
    Returns the raw count matrix for callers that also want figures.
    """
    arrays = [np.asarray(t, dtype=np.float64).reshape(-1, 2) for t in trajectories]
    if not arrays:
        raise ValueError("cannot build a heatmap from an empty trajectory list")
    points = np.concatenate(arrays, axis=0)
    edges = np.linspace(0.0, side, grid + 1)
    counts, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=(edges, edges))
    # histogram2d returns x-rows/y-columns; render as image rows = y top-down
    image = counts.T[::-1, :]
    peak = image.max()
    levels = np.zeros_like(image, dtype=np.int64) if peak == 0 else np.rint(
        image * (255.0 / peak)
    ).astype(np.int64)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{grid} {grid}\n255\n")
        for row in levels:
            fh.write(" ".join(str(v) for v in row) + "\n")
    return counts


def read_pgm(path) -> np.ndarray:
    """Parse a plain P2 graymap back into an integer matrix (for tests)."""
    tokens: List[str] = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain graymap")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array([int(v) for v in tokens[4:]], dtype=np.int64)
    if data.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {data.size}")
    if data.size and data.max() > maxval:
        raise ValueError(f"{path}: pixel exceeds declared maximum")
    return data.reshape(height, width)


def plot_entropy_curves(reports, config_names: Sequence[str], out_path) -> None:
    """Training curves: overall mean, tail mean, and per-config entropies."""
    epochs = [r.epoch for r in reports]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(epochs, [r.mean_entropy for r in reports], label="mean")
    ax1.plot(epochs, [r.cvar_entropy for r in reports], label="tail mean")
    ax1.plot(epochs, [r.var_entropy for r in reports], label="percentile", ls="--", lw=0.8)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("entropy (nats)")
    ax1.legend()
    for name in config_names:
        ax2.plot(
            epochs,
            [r.per_config_entropy.get(name, float("nan")) for r in reports],
            label=name,
        )
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("entropy (nats)")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_alpha_sweep(rows, out_path) -> None:
    """Grouped bars of final per-config entropy vs the percentile level.

    ``rows`` are dicts with keys alpha, config, mean_entropy (already
    averaged over seeds).
    """
    alphas = sorted({r["alpha"] for r in rows})
    configs = sorted({r["config"] for r in rows})
    width = 0.8 / max(len(configs), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for ci, config in enumerate(configs):
        values = []
        for a in alphas:
            match = [r["mean_entropy"] for r in rows if r["alpha"] == a and r["config"] == config]
            values.append(match[0] if match else float("nan"))
        offsets = np.arange(len(alphas)) + (ci - (len(configs) - 1) / 2) * width
        ax.bar(offsets, values, width=width, label=config)
    ax.set_xticks(np.arange(len(alphas)))
    ax.set_xticklabels([str(a) for a in alphas])
    ax.set_xlabel("percentile level")
    ax.set_ylabel("entropy (nats)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_return_curves(curves, out_path) -> None:
    """Per-task return curves; ``curves`` maps label -> sequence of returns."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in curves.items():
        ax.plot(range(len(values)), values, label=str(label), lw=0.9)
    ax.set_xlabel("iteration")
    ax.set_ylabel("average return")
    if len(curves) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
