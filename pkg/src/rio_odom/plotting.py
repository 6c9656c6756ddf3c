"""Static trajectory overlay (SVG by default)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import InvalidInputError  # noqa: E402
from .trajectory import Trajectory  # noqa: E402


def emit_plot(gt: Trajectory | None, est: Trajectory, path) -> Path:
    """Plot ``est`` (solid) over ``gt`` (dashed); byte-identical for identical inputs."""
    if len(est) == 0:
        raise InvalidInputError("nothing to plot: empty estimate")
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    with plt.rc_context({"svg.hashsalt": "rio-odom", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 6))
        if gt is not None and len(gt):
            ax.plot(gt.x, gt.y, "--", color="0.35", lw=1.2, label="ground truth")
        ax.plot(est.x, est.y, "-", color="tab:blue", lw=1.4, label="estimate")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, lw=0.3)
        ax.legend(loc="best")
        metadata = {"Date": None} if fmt in ("svg", "pdf") else None
        try:
            fig.savefig(path, format=fmt, metadata=metadata)
        finally:
            plt.close(fig)
    return path
