"""Figures for sweeps and reasoning traces (written to files, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reasoning import ReasoningTrace  # noqa: E402
from .scene import Scene  # noqa: E402

FIG_SIZE = (5.0, 3.2)
DPI = 150
# drop the matplotlib version stamp so reruns give identical files
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_META)
    plt.close(fig)


def plot_gt_curve(curve, path, title=None):
    """Accuracy against the fraction of proposals carrying their true category."""
    xs = [p for p, _ in curve]
    ys = [a for _, a in curve]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.plot(xs, ys, marker="o", lw=1.2, color="#1f77b4")
    ax.set_xlabel("ground-truth category proportion")
    ax.set_ylabel("grounding accuracy")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_top_k(rows, path, title=None):
    """Bar chart of accuracy per truncation level; ``None`` is drawn as 'all'."""
    labels = ["all" if k is None else str(k) for k, _ in rows]
    accs = [a for _, a in rows]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    bars = ax.bar(labels, accs, color="#7f7f7f", width=0.6)
    for b, a in zip(bars, accs):
        ax.text(b.get_x() + b.get_width() / 2, a + 0.01, f"{a:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_xlabel("top-K categories kept")
    ax.set_ylabel("grounding accuracy")
    ax.set_ylim(0, 1.1)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_trace(trace: ReasoningTrace, path, title=None):
    """Heat map of attention per node (columns) after each round (rows)."""
    A = np.array([r.attention_out for r in trace.rounds])
    labels = []
    for r in trace.rounds:
        tag = r.role.split("-")[0]
        labels.append(f"{tag}:{r.clue}" if r.clue else tag)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(trace.ids) + 2), max(2.5, 0.3 * len(labels) + 1)))
    im = ax.imshow(A, aspect="auto", cmap="viridis", vmin=0, vmax=1)
    ax.set_xticks(range(len(trace.ids)), trace.ids, rotation=60, fontsize=7)
    ax.set_yticks(range(len(labels)), labels, fontsize=7)
    ax.set_xlabel("object")
    fig.colorbar(im, ax=ax, label="attention")
    if title or trace.selected:
        ax.set_title(title or f"selected {trace.selected}")
    _save(fig, path)


def plot_scene(scene: Scene, path, highlight=None, labels=None):
    """Top-down footprints; ``highlight`` ids are filled."""
    highlight = set(highlight or ())
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for p in scene.proposals:
        pts = np.vstack([p.box.footprint_corners(), p.box.footprint_corners()[:1]])
        ax.plot(pts[:, 0], pts[:, 1], color=p.mean_rgb if p.id not in highlight else "k", lw=1)
        if p.id in highlight:
            ax.fill(pts[:, 0], pts[:, 1], color=p.mean_rgb, alpha=0.6)
        name = (labels or {}).get(p.id, f"{p.id}\n{p.top_category()}")
        ax.text(p.box.center[0], p.box.center[1], name, ha="center", va="center", fontsize=6)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(scene.id)
    _save(fig, path)
