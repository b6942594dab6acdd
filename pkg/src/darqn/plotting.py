"""SVG figures from the CSV logs: learning curves and attention strips.

Output is byte-stable for identical input: matplotlib's SVG id salt is pinned
and the date metadata is dropped.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigError  # noqa: E402


class CsvSchemaError(ConfigError):
    def __init__(self, message, row=None, path=None):
        self.row = row
        self.path = path
        where = f"{path}:" if path else ""
        where += f"row {row}: " if row is not None else " "
        super().__init__(f"{where.strip()} {message}".strip())


def read_log(path, required):
    """Rows of a versioned darqn CSV as dicts of floats (empty cells -> NaN).

    ``row`` numbers in errors count data rows from 1.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# darqn"):
        raise CsvSchemaError("missing '# darqn ... vN' header line", None, path)
    reader = csv.reader(lines[1:])
    try:
        fields = next(reader)
    except StopIteration:
        raise CsvSchemaError("missing column row", None, path) from None
    missing = [f for f in required if f not in fields]
    if missing:
        raise CsvSchemaError(f"missing columns {missing}", None, path)
    rows = []
    for i, rec in enumerate(reader, start=1):
        if len(rec) != len(fields):
            raise CsvSchemaError(f"expected {len(fields)} cells, found {len(rec)}", i, path)
        row = dict(zip(fields, rec))
        for f in required:
            v = row[f]
            if v == "":
                row[f] = float("nan")
                continue
            try:
                row[f] = float(v)
            except ValueError:
                raise CsvSchemaError(f"column {f!r} is not numeric: {v!r}", i, path) from None
        rows.append(row)
    return rows


def smooth(values, window):
    """Trailing moving average; the first points average what is available."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or window <= 1:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": "darqn", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_learning_curves(csv_paths, out_path, labels=None, window=50):
    """Smoothed steps-until-collision against episode index, one line per training log."""
    labels = labels or [Path(p).parent.name or Path(p).stem for p in csv_paths]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for path, label in zip(csv_paths, labels):
        rows = [r for r in read_log(path, ["step", "steps_until_collision"]) if r.get("event", "episode") == "episode"]
        y = smooth([r["steps_until_collision"] for r in rows], window)
        ax.plot(np.arange(1, len(y) + 1), y, label=label, linewidth=1.2)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"steps until collision ({window}-episode mean)")
    if csv_paths:
        ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    _save(fig, out_path)


def plot_attention(csv_path, out_path, row=-1):
    """Bar strip of the attention weights of one recorded decision (oldest frame left)."""
    rows = read_log(csv_path, ["step"])
    fig, ax = plt.subplots(figsize=(6, 2.2))
    if rows:
        keys = sorted((k for k in rows[0] if k.startswith("w")), key=lambda k: int(k[1:]))
        w = np.array([float(rows[row][k]) for k in keys])
        L = len(w)
        ax.bar(np.arange(L), w, color=plt.cm.viridis(w / max(w.max(), 1e-12)))
        ax.set_xticks(np.arange(L), [f"t-{L - 1 - j}" if j < L - 1 else "t" for j in range(L)])
        ax.set_title(f"attention weights, step {int(rows[row]['step'])} (sum = {w.sum():.6f})", fontsize=9)
    ax.set_ylim(0, 1)
    ax.set_ylabel("weight")
    fig.tight_layout()
    _save(fig, out_path)
