"""Figure rendering for CLI artifacts. Import stays inside the CLI path so
library use never pulls in matplotlib."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .mesh import GridFunction


def render_field(u: GridFunction, path: str, title: str | None = None) -> str:
    mesh = u.mesh
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=130)
    if mesh.dim == 1:
        x = mesh.coords2[:, 0]
        order = np.argsort(x)
        ax.plot(x[order], u.values[order], lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("value")
    else:
        c = mesh.coords2
        tp = ax.tripcolor(c[:, 0], c[:, 1], mesh.elements, u.values,
                          shading="gouraud", cmap="viridis")
        fig.colorbar(tp, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.25)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_sequences(named: dict, path: str) -> str:
    """One panel per named sequence, shared x = member index."""
    named = {k: list(v) for k, v in named.items() if len(list(v))}
    n = max(1, len(named))
    fig, axes = plt.subplots(n, 1, figsize=(6.0, 2.6 * n), dpi=130, squeeze=False)
    for ax, (name, seq) in zip(axes[:, 0], named.items()):
        ax.plot(range(1, len(seq) + 1), seq, marker="o", ms=3, lw=1.0)
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.25)
    axes[-1, 0].set_xlabel("member")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
