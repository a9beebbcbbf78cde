"""Benchmark problems: the 1-D heat equation and steady Kovasznay flow.

Each problem knows its domain, its closed-form solution (value and input
derivatives), how to turn network jets into PDE residuals and how to draw a
:class:`DatasetBundle`.  Residual functions are written with plain arithmetic
so they accept either numpy arrays or graph nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .graph import InputJet, JetLayout

__all__ = [
    "HeatProblem",
    "KovasznayProblem",
    "Problem",
    "DatasetBundle",
    "heat_analytic",
    "heat_analytic_jet",
    "heat_residual",
    "kov_gamma",
    "kov_analytic",
    "kov_analytic_jets",
    "ns_residuals",
    "sample",
    "save_bundle",
    "load_bundle",
]


@dataclass(frozen=True)
class HeatProblem:
    """Rod of length ``M`` with diffusivity ``kappa`` on ``[0, M] x [0, T/2]``."""

    M: float = 1.0
    kappa: float = 1.0
    n_ic: int = 100
    n_bc: int = 200
    n_col: int = 2500
    n_test: int = 1000

    name = "heat"
    input_dim = 2
    output_dim = 1
    coordinate_names = ("x", "t")
    output_names = ("u",)
    # u_t and u_xx are all the PDE needs
    layout = JetLayout(2, (0,))

    def __post_init__(self):
        if not (self.M > 0 and self.kappa > 0):
            raise ValueError("M and kappa must be positive")
        if min(self.n_ic, self.n_bc, self.n_col, self.n_test) < 1:
            raise ValueError("dataset sizes must be >= 1")

    @property
    def T(self) -> float:
        return self.M ** 2 / self.kappa

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (0.0, self.M), (0.0, self.T / 2)

    def exact(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return heat_analytic(points[:, 0], points[:, 1], self)[:, None]

    def residuals(self, jets):
        (u,) = jets
        return [heat_residual(u, self.kappa)]


@dataclass(frozen=True)
class KovasznayProblem:
    """Kovasznay wake flow on ``[-M, M]^2`` with ``M * u0 = 1`` and ``rho = 1``.

    ``C`` is the additive pressure constant; :func:`sample` fixes it so the
    analytic pressure has zero mean over the test points.
    """

    M: float = 1.0
    nu: float = 1.0 / 40.0
    C: float = 0.0
    n_bc: int = 400
    n_col: int = 2500
    n_test: int = 1000

    name = "kovasznay"
    input_dim = 2
    output_dim = 3
    rho = 1.0
    coordinate_names = ("x", "y")
    output_names = ("u", "v", "p")
    layout = JetLayout.full(2)

    def __post_init__(self):
        if not (self.M > 0 and self.nu > 0):
            raise ValueError("M and nu must be positive")
        if min(self.n_bc, self.n_col, self.n_test) < 1:
            raise ValueError("dataset sizes must be >= 1")

    @property
    def u0(self) -> float:
        return 1.0 / self.M

    @property
    def gamma(self) -> float:
        return kov_gamma(self.nu)

    @property
    def Re(self) -> float:
        return 1.0 / self.nu

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (-self.M, self.M), (-self.M, self.M)

    def exact(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.stack(kov_analytic(points[:, 0], points[:, 1], self), axis=1)

    def residuals(self, jets):
        return list(ns_residuals(jets, self.rho, self.nu))


Problem = Union[HeatProblem, KovasznayProblem]


# ---------------------------------------------------------------------------
# heat equation

def heat_analytic(x, t, problem: HeatProblem):
    M, k = problem.M, problem.kappa
    return np.sin(np.pi * np.asarray(x) / M) * np.exp(-k * np.pi ** 2 * np.asarray(t) / M ** 2)


def heat_analytic_jet(points: np.ndarray, problem: HeatProblem) -> InputJet:
    """Closed-form value and derivatives of the heat solution (numpy arrays)."""
    x, t = np.asarray(points, dtype=np.float64).T
    M, k = problem.M, problem.kappa
    w = np.pi / M
    decay = np.exp(-k * w ** 2 * t)
    u = np.sin(w * x) * decay
    ux = w * np.cos(w * x) * decay
    ut = -k * w ** 2 * u
    return InputJet(u, (ux, ut), (-w ** 2 * u, (k * w ** 2) ** 2 * u))


def heat_residual(jet: InputJet, kappa: float):
    """``u_t - kappa * u_xx``; ``jet`` is over (x, t)."""
    return jet.first[1] - kappa * jet.second[0]


# ---------------------------------------------------------------------------
# Kovasznay flow

def kov_gamma(nu: float) -> float:
    if not nu > 0:
        raise ValueError("nu must be positive")
    return 1.0 / (2.0 * nu) - math.sqrt(1.0 / (4.0 * nu ** 2) + 4.0 * math.pi ** 2)


def kov_analytic(x, y, problem: KovasznayProblem):
    """Velocity ``(u, v)`` and pressure ``p`` of the scaled Kovasznay flow.

    The pressure is ``-u0^2/2 * exp(2 gamma x / M) + C``, the form that
    satisfies the momentum equations for ``rho = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    M, u0, gam = problem.M, problem.u0, problem.gamma
    e = np.exp(gam * x / M)
    ky = 2.0 * np.pi * y / M
    u = u0 * (1.0 - e * np.cos(ky))
    v = u0 * gam / (2.0 * np.pi) * e * np.sin(ky)
    p = -0.5 * u0 ** 2 * e * e + problem.C
    return u, v, p


def kov_analytic_jets(points: np.ndarray, problem: KovasznayProblem) -> list[InputJet]:
    """Closed-form jets of (u, v, p) over (x, y), as numpy arrays."""
    x, y = np.asarray(points, dtype=np.float64).T
    M, u0, gam = problem.M, problem.u0, problem.gamma
    g = gam / M
    k = 2.0 * np.pi / M
    e = np.exp(g * x)
    c, s = np.cos(k * y), np.sin(k * y)
    a = u0 * gam / (2.0 * np.pi)
    u = InputJet(
        u0 * (1.0 - e * c),
        (-u0 * g * e * c, u0 * k * e * s),
        (-u0 * g ** 2 * e * c, u0 * k ** 2 * e * c),
    )
    v = InputJet(
        a * e * s,
        (a * g * e * s, a * k * e * c),
        (a * g ** 2 * e * s, -a * k ** 2 * e * s),
    )
    e2 = e * e
    p = InputJet(
        -0.5 * u0 ** 2 * e2 + problem.C,
        (-u0 ** 2 * g * e2, np.zeros_like(x)),
        (-2.0 * u0 ** 2 * g ** 2 * e2, np.zeros_like(x)),
    )
    return [u, v, p]


def ns_residuals(jets, rho: float, nu: float):
    """Steady incompressible momentum (x, y) and continuity residuals."""
    u, v, p = jets
    ux, uy = u.first
    vx, vy = v.first
    fx = (u.value * ux + v.value * uy) + (1.0 / rho) * p.first[0] - nu * (u.second[0] + u.second[1])
    fy = (u.value * vx + v.value * vy) + (1.0 / rho) * p.first[1] - nu * (v.second[0] + v.second[1])
    fc = ux + vy
    return fx, fy, fc


# ---------------------------------------------------------------------------
# datasets

@dataclass
class DatasetBundle:
    """Sampled point sets.  Targets are ``(N, k)`` arrays; ``ic_*`` is empty for Kovasznay."""

    ic_points: np.ndarray
    ic_targets: np.ndarray
    bc_points: np.ndarray
    bc_targets: np.ndarray
    collocation_points: np.ndarray
    test_points: np.ndarray
    test_targets: np.ndarray
    pressure_offset: float = 0.0

    @property
    def sizes(self) -> tuple[int, ...]:
        return (len(self.ic_points), len(self.bc_points),
                len(self.collocation_points), len(self.test_points))

    def data_sets(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Labelled sets that each contribute one mean-squared term to the data loss."""
        out = []
        if len(self.ic_points):
            out.append((self.ic_points, self.ic_targets))
        out.append((self.bc_points, self.bc_targets))
        return out


def _uniform(rng, bounds, n):
    (x0, x1), (y0, y1) = bounds
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])


def _split(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (i < extra) for i in range(parts)]


def sample(problem: Problem, seed: int) -> DatasetBundle:
    """Draw IC/BC data, collocation and test points uniformly at random."""
    rng = np.random.default_rng(seed)
    if isinstance(problem, HeatProblem):
        (x0, x1), (t0, t1) = problem.bounds
        xi = rng.uniform(x0, x1, problem.n_ic)
        ic = np.column_stack([xi, np.zeros_like(xi)])
        ic_targets = heat_analytic(ic[:, 0], ic[:, 1], problem)[:, None]
        left, right = _split(problem.n_bc, 2)
        bc = np.concatenate([
            np.column_stack([np.full(left, x0), rng.uniform(t0, t1, left)]),
            np.column_stack([np.full(right, x1), rng.uniform(t0, t1, right)]),
        ])
        bc_targets = np.zeros((len(bc), 1))
        col = _uniform(rng, problem.bounds, problem.n_col)
        test = _uniform(rng, problem.bounds, problem.n_test)
        return DatasetBundle(ic, ic_targets, bc, bc_targets, col, test, problem.exact(test))

    if isinstance(problem, KovasznayProblem):
        lo, hi = -problem.M, problem.M
        n_left, n_right, n_bottom, n_top = _split(problem.n_bc, 4)
        bc = np.concatenate([
            np.column_stack([np.full(n_left, lo), rng.uniform(lo, hi, n_left)]),
            np.column_stack([np.full(n_right, hi), rng.uniform(lo, hi, n_right)]),
            np.column_stack([rng.uniform(lo, hi, n_bottom), np.full(n_bottom, lo)]),
            np.column_stack([rng.uniform(lo, hi, n_top), np.full(n_top, hi)]),
        ])
        col = _uniform(rng, problem.bounds, problem.n_col)
        test = _uniform(rng, problem.bounds, problem.n_test)
        offset = pressure_offset(problem, test)
        calibrated = replace(problem, C=offset)
        # velocity only on the boundary; pressure is learned from the PDE
        bc_targets = calibrated.exact(bc)[:, :2]
        return DatasetBundle(np.empty((0, 2)), np.empty((0, 2)), bc, bc_targets, col, test,
                             calibrated.exact(test), offset)

    raise TypeError(f"unknown problem type {type(problem).__name__}")


def pressure_offset(problem: KovasznayProblem, points: np.ndarray) -> float:
    """Constant ``C`` making the analytic pressure zero-mean over ``points``."""
    _, _, p = kov_analytic(points[:, 0], points[:, 1], replace(problem, C=0.0))
    return -float(np.mean(p))


# ---------------------------------------------------------------------------
# CSV round trip

def _write_csv(path: Path, header: list[str], points: np.ndarray, targets: np.ndarray | None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        rows = points if targets is None else np.hstack([points, targets])
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


def _read_csv(path: Path, n_coords: int) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    return arr[:, :n_coords], arr[:, n_coords:]


def save_bundle(bundle: DatasetBundle, problem: Problem, directory: str | Path) -> list[Path]:
    """One CSV per point set: coordinate columns first, then targets."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    coords = list(problem.coordinate_names)
    outs = list(problem.output_names)
    written = []
    if len(bundle.ic_points):
        _write_csv(d / "ic.csv", coords + outs, bundle.ic_points, bundle.ic_targets)
        written.append(d / "ic.csv")
    bc_names = outs if isinstance(problem, HeatProblem) else outs[:2]
    _write_csv(d / "bc.csv", coords + bc_names, bundle.bc_points, bundle.bc_targets)
    _write_csv(d / "collocation.csv", coords, bundle.collocation_points, None)
    _write_csv(d / "test.csv", coords + outs, bundle.test_points, bundle.test_targets)
    written += [d / "bc.csv", d / "collocation.csv", d / "test.csv"]
    return written


def load_bundle(directory: str | Path, problem: Problem) -> DatasetBundle:
    d = Path(directory)
    n = problem.input_dim
    if (d / "ic.csv").exists():
        ic, ic_t = _read_csv(d / "ic.csv", n)
    else:
        ic, ic_t = np.empty((0, n)), np.empty((0, 2))
    bc, bc_t = _read_csv(d / "bc.csv", n)
    col, _ = _read_csv(d / "collocation.csv", n)
    test, test_t = _read_csv(d / "test.csv", n)
    offset = 0.0
    if isinstance(problem, KovasznayProblem):
        offset = pressure_offset(problem, test)
    return DatasetBundle(ic, ic_t, bc, bc_t, col, test, test_t, offset)
