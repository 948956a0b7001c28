"""Render experiment figures to files.

Uses the Agg backend so rendering works headless, and writes PNGs with a
fixed Software tag so reruns produce stable bytes on one machine.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_PNG_METADATA = {"Software": "adopt-lab"}

Line = Tuple[str, Sequence[float], Sequence[float]]
Panel = Tuple[str, Sequence[Line]]


def decimate_indices(n: int, limit: int = 2000) -> list:
    """Evenly spaced indices into range(n), always ending at n - 1."""
    if n <= 0:
        return []
    if n <= limit:
        return list(range(n))
    stride = n // limit
    picked = list(range(0, n, stride))
    if picked[-1] != n - 1:
        picked.append(n - 1)
    return picked


def save_line_grid(panels: Sequence[Panel], path, xlabel: str, ylabel: str,
                   suptitle: Optional[str] = None, yscale: Optional[str] = None,
                   hline: Optional[float] = None) -> None:
    """One row of line plots; each panel is (title, [(label, x, y), ...])."""
    n = max(len(panels), 1)
    fig, axes = plt.subplots(1, n, figsize=(4.5 * n, 3.6), squeeze=False)
    for ax, (title, lines) in zip(axes[0], panels):
        for label, xs, ys in lines:
            ax.plot(xs, ys, label=label, linewidth=1.2)
        if hline is not None:
            ax.axhline(hline, color="gray", linestyle=":", linewidth=0.8)
        if yscale:
            ax.set_yscale(yscale)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if lines:
            ax.legend(fontsize=8)
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)


def save_loglog(lines: Sequence[Line], path, xlabel: str, ylabel: str,
                title: str) -> None:
    """Log-log single-axes plot with markers, for rate-versus-size trends."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for label, xs, ys in lines:
        ax.loglog(xs, ys, marker="o", label=label, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if lines:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
