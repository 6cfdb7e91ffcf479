"""Static SVG figures. Output bytes are fixed for fixed inputs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..diagnostics import CorrelationFit, SpectralCDFs

_RC = {"svg.hashsalt": "thermolattice", "svg.fonttype": "none", "path.simplify": False}


def _save(fig: Figure, path: Path) -> Path:
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def cdf_overlay(cdfs: SpectralCDFs, path: Path, title: str = "") -> Path:
    """Step curve of the state's energy CDF over the matched Gaussian CDF."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    x = cdfs.jump_points
    pad = 0.05 * max(x[-1] - x[0], cdfs.gauss_sigma)
    xs = np.concatenate([[x[0] - pad], x, [x[-1] + pad]])
    ys = np.concatenate([[0.0], cdfs.F_values, [cdfs.F_values[-1]]])
    ax.step(xs, ys, where="post", label="F (state)", gid="cdf_step")
    grid = np.linspace(xs[0], xs[-1], 400)
    ax.plot(grid, cdfs.G(grid), label="G (Gaussian)", gid="cdf_gauss")
    ax.set_xlabel("energy")
    ax.set_ylabel("cumulative probability")
    ax.set_title(title or f"Delta = {cdfs.delta:.4g}")
    ax.legend(loc="upper left")
    return _save(fig, path)


def correlation_decay(fits: dict[str, CorrelationFit], path: Path) -> Path:
    """Lower and upper correlation brackets against distance, log scale."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for name, fit in fits.items():
        dist = np.array([s.distance for s in fit.samples], dtype=float)
        lower = np.maximum([s.lower for s in fit.samples], 1e-16)
        upper = np.maximum([s.upper for s in fit.samples], 1e-16)
        ax.semilogy(dist, lower, "o", label=f"{name} lower")
        ax.semilogy(dist, upper, "x", label=f"{name} upper")
        if not fit.degenerate and np.isfinite(fit.xi_hat):
            xs = np.linspace(dist.min(), dist.max(), 50)
            ax.semilogy(xs, fit.K_hat * np.exp(-xs / fit.xi_hat), "--", label=f"{name} fit, xi={fit.xi_hat:.3g}")
    ax.set_xlabel("distance")
    ax.set_ylabel("connected correlation")
    ax.legend(fontsize="small")
    return _save(fig, path)


def bounds_vs_N(rows: list[dict], path: Path) -> Path:
    """Left and right sides of each bound against system size.

    ``rows`` carry ``name``, ``N``, ``lhs``, ``rhs``; several rows of one name
    at the same ``N`` (different regions) are averaged.
    """
    grouped: dict[str, dict[int, list[tuple[float, float]]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if np.isfinite(r["lhs"]) and np.isfinite(r["rhs"]):
            grouped[r["name"]][r["N"]].append((r["lhs"], r["rhs"]))
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for i, (name, by_n) in enumerate(sorted(grouped.items())):
        Ns = sorted(by_n)
        lhs = [np.mean([v[0] for v in by_n[n]]) for n in Ns]
        rhs = [np.mean([v[1] for v in by_n[n]]) for n in Ns]
        color = f"C{i % 10}"
        ax.plot(Ns, lhs, "o-", color=color, label=f"{name} lhs")
        ax.plot(Ns, rhs, "s--", color=color, label=f"{name} rhs")
    ax.set_xlabel("N")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.legend(fontsize="x-small")
    return _save(fig, path)
