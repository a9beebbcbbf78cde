"""SVG figures for runs, sweeps and landscapes (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402

from .model import NetworkParams, forward  # noqa: E402
from .problems import HeatProblem, Problem  # noqa: E402
from .training import normalize_pressure  # noqa: E402

# fixed ids and no timestamp, so identical data gives identical files
plt.rcParams["svg.hashsalt"] = "pareto-pinn"
plt.rcParams["figure.dpi"] = 100


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def field_grid(problem: Problem, n: int = 101) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    (x0, x1), (y0, y1) = problem.bounds
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys)
    return X, Y, np.column_stack([X.ravel(), Y.ravel()])


def field_panels(problem: Problem, params: NetworkParams, n: int = 101):
    """(title, analytic, predicted) panels on a regular grid over the domain."""
    X, Y, pts = field_grid(problem, n)
    truth = problem.exact(pts)
    pred = forward(params, pts)
    if isinstance(problem, HeatProblem):
        return X, Y, [("u", truth[:, 0].reshape(X.shape), pred[:, 0].reshape(X.shape))]
    speed_t = np.hypot(truth[:, 0], truth[:, 1])
    speed_p = np.hypot(pred[:, 0], pred[:, 1])
    p_t = normalize_pressure(truth[:, 2])
    p_p = normalize_pressure(pred[:, 2])
    return X, Y, [("|(u, v)|", speed_t.reshape(X.shape), speed_p.reshape(X.shape)),
                  ("p", p_t.reshape(X.shape), p_p.reshape(X.shape))]


def plot_fields(path: str | Path, problem: Problem, params: NetworkParams,
                errors: dict[str, float] | None = None, n: int = 101) -> Path:
    """Three rows per output field: analytic, learned, absolute difference."""
    X, Y, panels = field_panels(problem, params, n)
    xname, yname = problem.coordinate_names
    fig, axes = plt.subplots(3, len(panels), figsize=(4.2 * len(panels), 9.5), squeeze=False)
    for col, (name, truth, pred) in enumerate(panels):
        lo, hi = min(truth.min(), pred.min()), max(truth.max(), pred.max())
        rows = [(f"analytic {name}", truth, dict(vmin=lo, vmax=hi, cmap="viridis")),
                (f"learned {name}", pred, dict(vmin=lo, vmax=hi, cmap="viridis")),
                (f"|error| {name}", np.abs(pred - truth), dict(cmap="magma"))]
        for row, (title, data, style) in enumerate(rows):
            ax = axes[row, col]
            mesh = ax.pcolormesh(X, Y, data, shading="auto", rasterized=False, **style)
            fig.colorbar(mesh, ax=ax)
            ax.set_title(title)
            ax.set_xlabel(xname)
            ax.set_ylabel(yname)
    if errors:
        text = "  ".join(f"{k} = {100 * v:.3g}%" for k, v in errors.items())
        fig.suptitle(text, color="tab:red")
    return _save(fig, path)


def _alpha_norm(alphas: Sequence[float]):
    lo, hi = min(alphas), max(alphas)
    if lo == hi:
        lo, hi = lo / 2, min(1.0, hi * 2)
    return LogNorm(vmin=lo, vmax=hi)


def plot_pareto(path: str | Path, entries, front: Sequence[tuple[float, float]] = ()) -> Path:
    """Loss trajectories in the (L_u, L_F) plane, log-log, coloured by alpha.

    ``entries`` are sweep entries with ``alpha`` and ``run.trajectory``;
    final points are drawn as crosses and ``front`` as a dashed line.
    """
    fig, ax = plt.subplots(figsize=(6, 5))
    alphas = [e.alpha for e in entries]
    norm = _alpha_norm(alphas)
    cmap = plt.get_cmap("viridis")
    for e in entries:
        traj = e.run.trajectory
        if not traj:
            continue
        lu = [r.L_u for r in traj]
        lf = [r.L_F for r in traj]
        ax.scatter(lu, lf, s=4, color=cmap(norm(e.alpha)), alpha=0.6)
        ax.scatter([lu[-1]], [lf[-1]], marker="x", s=60, color="tab:green" if not e.diverged else "tab:red")
    if len(front) > 1:
        fx, fy = zip(*sorted(front))
        ax.plot(fx, fy, "--", color="tab:green", lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("L_u")
    ax.set_ylabel("L_F")
    sm = plt.cm.ScalarMappable(norm=norm, cmap=cmap)
    fig.colorbar(sm, ax=ax, label="alpha")
    return _save(fig, path)


def plot_errors(path: str | Path, entries, error: str = "eps_u") -> Path:
    """Relative test error against epoch, one line per alpha."""
    fig, ax = plt.subplots(figsize=(6, 4))
    norm = _alpha_norm([e.alpha for e in entries])
    cmap = plt.get_cmap("viridis")
    for e in entries:
        traj = e.run.trajectory
        if not traj:
            continue
        ax.plot([r.epoch for r in traj], [r.errors[error] for r in traj],
                color=cmap(norm(e.alpha)), lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel(error)
    fig.colorbar(plt.cm.ScalarMappable(norm=norm, cmap=cmap), ax=ax, label="alpha")
    return _save(fig, path)


def plot_landscape(path: str | Path, coords: np.ndarray, grid: np.ndarray, title: str) -> Path:
    """Heatmap of log10 loss over the slice, centre marked with a cross."""
    fig, ax = plt.subplots(figsize=(5, 4.3))
    with np.errstate(divide="ignore", invalid="ignore"):
        shown = np.log10(np.where(grid > 0, grid, np.nan))
    A, B = np.meshgrid(coords, coords, indexing="ij")
    mesh = ax.pcolormesh(A, B, shown, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=f"log10 {title}")
    ax.plot([0.0], [0.0], marker="x", color="tab:red", ms=10, mew=2)
    ax.set_xlabel("a (delta)")
    ax.set_ylabel("b (eta)")
    ax.set_title(title)
    return _save(fig, path)
