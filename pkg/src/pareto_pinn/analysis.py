"""Alpha sweeps, Pareto-front extraction, trade-off statistics and loss landscapes."""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import graph as g
from .export import load_run, problem_to_dict, save_run
from .model import NetworkConfig, NetworkParams
from .problems import Problem, sample
from .training import Objective, RunResult, TrainingConfig, derive_seeds, network_config_for, train_run

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999)


# ---------------------------------------------------------------------------
# run execution with an optional on-disk store

@dataclass(frozen=True)
class RunSpec:
    problem: Problem
    network_config: NetworkConfig | None
    training_config: TrainingConfig

    def resolved_network(self) -> NetworkConfig:
        return network_config_for(self.problem, self.network_config, self.training_config)

    def key(self) -> str:
        blob = json.dumps({
            "problem": problem_to_dict(self.problem),
            "network": self.resolved_network().to_dict(),
            "training": self.training_config.to_dict(),
        }, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def label(self) -> str:
        p = self.problem
        coef = f"kappa{p.kappa:g}" if p.name == "heat" else f"nu{p.nu:g}"
        tc = self.training_config
        mode = "lw" if tc.adaptive_weighting else f"a{tc.alpha:g}"
        if self.resolved_network().adaptive_activation:
            mode += "-af"
        return f"{p.name}-M{p.M:g}-{coef}-{mode}-e{tc.epochs}-s{tc.seed}"


class RunStore:
    """Directory of finished runs keyed by their full configuration.

    Runs are deterministic per configuration, so a stored run is reused
    instead of retrained.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, spec: RunSpec) -> Path:
        return self.root / f"{spec.label()}-{spec.key()}"

    def load(self, spec: RunSpec) -> RunResult | None:
        d = self.path(spec)
        if (d / "summary.json").exists():
            return load_run(d)
        return None

    def save(self, spec: RunSpec, result: RunResult) -> Path:
        d = self.path(spec)
        save_run(result, d)
        return d


def _execute(spec: RunSpec, store_root: str | None) -> RunResult:
    store = RunStore(store_root) if store_root else None
    if store is not None:
        cached = store.load(spec)
        if cached is not None:
            return cached
    log.info("training %s", spec.label())
    result = train_run(spec.problem, spec.network_config, spec.training_config)
    if store is not None:
        store.save(spec, result)
    return result


def _failed(spec: RunSpec, exc: BaseException) -> RunResult:
    net_cfg = spec.resolved_network()
    return RunResult(spec.problem, net_cfg, spec.training_config, None, [], True,
                     f"{type(exc).__name__}: {exc}")


def execute_runs(specs: Sequence[RunSpec], jobs: int = 1, store: RunStore | None = None) -> list[RunResult]:
    """Run (or load) every spec; order of results follows ``specs``.

    A run that raises is returned as a diverged result instead of aborting
    the batch.
    """
    root = str(store.root) if store else None
    if jobs <= 1 or len(specs) <= 1:
        out = []
        for spec in specs:
            try:
                out.append(_execute(spec, root))
            except Exception as exc:  # noqa: BLE001 - recorded on the entry
                out.append(_failed(spec, exc))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_execute, spec, root) for spec in specs]
        out = []
        for spec, fut in zip(specs, futures):
            try:
                out.append(fut.result())
            except Exception as exc:  # noqa: BLE001
                out.append(_failed(spec, exc))
        return out


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepEntry:
    alpha: float
    seed: int
    L_u: float
    L_F: float
    errors: dict[str, float]
    diverged: bool
    run: RunResult


@dataclass
class SweepResult:
    problem: Problem
    entries: list[SweepEntry]

    def usable(self) -> list[SweepEntry]:
        return [e for e in self.entries if not e.diverged]

    def points(self) -> list[tuple[float, float]]:
        return [(e.L_u, e.L_F) for e in self.usable()]


def _entry(alpha: float, run: RunResult) -> SweepEntry:
    nan = float("nan")
    if run.trajectory:
        f = run.final
        return SweepEntry(alpha, run.training_config.seed, f.L_u, f.L_F, dict(f.errors), run.diverged, run)
    return SweepEntry(alpha, run.training_config.seed, nan, nan, {}, True, run)


def sweep_specs(problem: Problem, alphas: Sequence[float], base_config: TrainingConfig,
                network_config: NetworkConfig | None = None,
                seeds: Sequence[int] | None = None) -> list[RunSpec]:
    if not alphas:
        raise ValueError("alpha list is empty")
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha {a} outside (0, 1)")
    seeds = list(seeds) if seeds is not None else [base_config.seed]
    return [RunSpec(problem, network_config, replace(base_config, alpha=float(a), seed=int(s)))
            for s in seeds for a in alphas]


def sweep_alpha(problem: Problem, alphas: Sequence[float], base_config: TrainingConfig,
                network_config: NetworkConfig | None = None, jobs: int = 1,
                store: RunStore | None = None, seeds: Sequence[int] | None = None) -> SweepResult:
    """Train one run per alpha (and per seed, if several are given)."""
    specs = sweep_specs(problem, alphas, base_config, network_config, seeds)
    runs = execute_runs(specs, jobs=jobs, store=store)
    return SweepResult(problem, [_entry(s.training_config.alpha, r) for s, r in zip(specs, runs)])


# ---------------------------------------------------------------------------
# Pareto front

def pareto_filter(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated subset, in input order.

    ``p`` dominates ``q`` when it is no worse in both coordinates and
    strictly better in one; identical points do not dominate each other.
    """
    pts = [(float(a), float(b)) for a, b in points]
    order = sorted(range(len(pts)), key=lambda i: pts[i])
    keep = [False] * len(pts)
    best_before = float("inf")  # min L_F over strictly smaller L_u
    i = 0
    while i < len(order):
        j = i
        x = pts[order[i]][0]
        while j < len(order) and pts[order[j]][0] == x:
            j += 1
        group = order[i:j]
        group_min = pts[group[0]][1]  # sorted by (x, y)
        for k in group:
            y = pts[k][1]
            keep[k] = not (best_before <= y or group_min < y)
        best_before = min(best_before, group_min)
        i = j
    return [p for p, k in zip(pts, keep) if k]


def tradeoff_rank_stat(sweep: SweepResult) -> tuple[float, float]:
    """Spearman correlation of alpha with final L_F and with final L_u.

    A convex, well-behaved front gives a strongly positive first value (more
    data weight costs physics loss) and a strongly negative second value.
    """
    usable = sweep.usable()
    if len(usable) < 3:
        raise ValueError(f"need at least 3 non-diverged entries, have {len(usable)}")
    alphas = [e.alpha for e in usable]
    with warnings.catch_warnings():
        # a constant loss column gives NaN, which is the honest answer
        warnings.simplefilter("ignore", stats.ConstantInputWarning)
        rho_f = stats.spearmanr(alphas, [e.L_F for e in usable]).statistic
        rho_u = stats.spearmanr(alphas, [e.L_u for e in usable]).statistic
    return float(rho_f), float(rho_u)


# ---------------------------------------------------------------------------
# loss landscapes

@dataclass
class LandscapeSlice:
    center: NetworkParams
    delta: dict[str, np.ndarray]
    eta: dict[str, np.ndarray]
    coords: np.ndarray
    L_u: np.ndarray
    L_F: np.ndarray
    total: np.ndarray
    flagged: np.ndarray
    alpha: float
    seed: int
    half_range: float
    resolution: int

    @property
    def center_index(self) -> int:
        return self.resolution // 2


def _blocks(params: dict[str, np.ndarray]):
    """Yield (layer, row) for every neuron of every layer."""
    n_layers = sum(1 for k in params if k.startswith("W"))
    for i in range(n_layers):
        for r in range(params[f"W{i}"].shape[0]):
            yield i, r


def filter_normalize(direction: dict[str, np.ndarray], center: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Rescale each neuron block of ``direction`` to the norm of the matching block of ``center``.

    A neuron block is one row of a weight matrix together with its bias.
    Zero blocks of ``center`` map to zero.
    """
    out = {k: np.array(v, dtype=np.float64) for k, v in direction.items()}
    for i, r in _blocks(center):
        w, b = f"W{i}", f"b{i}"
        c_norm = np.sqrt(np.sum(center[w][r] ** 2) + center[b][r] ** 2)
        d_norm = np.sqrt(np.sum(out[w][r] ** 2) + out[b][r] ** 2)
        scale = 0.0 if c_norm == 0.0 or d_norm == 0.0 else c_norm / d_norm
        out[w][r] *= scale
        out[b][r] *= scale
    if "a" in center:
        d = float(out["a"])
        out["a"] = np.asarray(0.0 if d == 0.0 else abs(float(center["a"])) * np.sign(d))
    return out


def random_directions(center: dict[str, np.ndarray], seed: int) -> tuple[dict, dict]:
    rng = np.random.default_rng(seed)
    raw = [{k: rng.standard_normal(np.shape(v)) for k, v in center.items()} for _ in range(2)]
    return filter_normalize(raw[0], center), filter_normalize(raw[1], center)


def landscape_slice(center: NetworkParams, loss_fn: Callable[[dict], tuple[float, float]], seed: int,
                    half_range: float = 1.0, resolution: int = 51, alpha: float = 0.5) -> LandscapeSlice:
    """Evaluate L_u, L_F and the weighted total on a 2-D slice through ``center``.

    ``loss_fn`` maps a parameter dict to ``(L_u, L_F)``.  Cells where the
    network produces non-finite values hold NaN and are marked in ``flagged``.
    """
    if resolution < 1 or resolution % 2 == 0:
        raise ValueError("resolution must be odd so the grid contains the center")
    theta = center.to_dict()
    delta, eta = random_directions(theta, seed)
    mid = resolution // 2
    step = half_range / mid if mid else 0.0
    coords = (np.arange(resolution) - mid) * step
    lu = np.full((resolution, resolution), np.nan)
    lf = np.full((resolution, resolution), np.nan)
    flagged = np.zeros((resolution, resolution), dtype=bool)
    for i, a in enumerate(coords):
        for j, b in enumerate(coords):
            point = {k: theta[k] + a * delta[k] + b * eta[k] for k in theta}
            try:
                lu[i, j], lf[i, j] = loss_fn(point)
            except (g.NonFiniteError, FloatingPointError):
                flagged[i, j] = True
    total = alpha * lu + (1.0 - alpha) * lf
    return LandscapeSlice(center, delta, eta, coords, lu, lf, total, flagged, alpha, seed,
                          half_range, resolution)


def run_landscape(run: RunResult, seed: int = 0, half_range: float = 1.0, resolution: int = 51) -> LandscapeSlice:
    """Landscape around a finished run, rebuilt on the run's own dataset."""
    data_seed, _ = derive_seeds(run.training_config.seed)
    bundle = sample(run.problem, data_seed)
    objective = Objective(run.problem, bundle, run.network_config)
    alpha = run.training_config.alpha
    return landscape_slice(run.params, objective.losses, seed, half_range, resolution, alpha)
