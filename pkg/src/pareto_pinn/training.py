"""Loss construction, the full-batch training loop and error metrics."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from . import graph as g
from .model import NetworkConfig, NetworkGraph, NetworkParams, init
from .optim import AdamState, LrSchedule, adam_step, lr_at
from .problems import DatasetBundle, HeatProblem, KovasznayProblem, Problem, sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    alpha: float = 0.5
    epochs: int = 100_000
    record_every: int = 100
    seed: int = 0
    adaptive_weighting: bool = False
    weighting_update_every: int = 10
    weighting_smoothing: float = 0.1
    adaptive_activation: bool = False
    initial_lr: float = 0.01
    decay_rate: float = 0.9
    decay_steps: int = 1000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.epochs < 1 or self.record_every < 1 or self.weighting_update_every < 1:
            raise ValueError("epochs, record_every and weighting_update_every must be >= 1")
        # omega = 0 is allowed: it freezes the weight, which the neutrality check relies on
        if not 0.0 <= self.weighting_smoothing <= 1.0:
            raise ValueError("weighting_smoothing must lie in [0, 1]")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.initial_lr, self.decay_rate, self.decay_steps)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrajectoryRecord:
    epoch: int
    L_u: float
    L_F: float
    L_total: float
    errors: dict[str, float]
    weight: float


@dataclass
class RunResult:
    problem: Problem
    network_config: NetworkConfig
    training_config: TrainingConfig
    params: NetworkParams
    trajectory: list[TrajectoryRecord]
    diverged: bool = False
    message: str = ""
    wall_time: float = 0.0

    @property
    def final(self) -> TrajectoryRecord:
        return self.trajectory[-1]


# ---------------------------------------------------------------------------
# loss pieces

def data_loss(predictions, targets) -> float:
    """Mean squared error, summed over output columns.

    Column-wise summation gives the Kovasznay ``MSE(u) + MSE(v)`` form; a
    single column is the plain MSE.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {tgt.shape}")
    if pred.shape[0] == 0:
        raise ValueError("data loss over an empty set")
    diff = (pred - tgt).reshape(len(pred), -1)
    return float(np.sum(np.mean(diff ** 2, axis=0)))


def weighted_total(L_u, L_F, alpha: float):
    """``alpha * L_u + (1 - alpha) * L_F``; accepts floats or graph nodes."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha * L_u + (1.0 - alpha) * L_F


def _flat_abs(grads) -> np.ndarray:
    if isinstance(grads, Mapping):
        grads = [np.ravel(v) for v in grads.values()]
        return np.abs(np.concatenate(grads)) if grads else np.zeros(0)
    return np.abs(np.ravel(np.asarray(grads, dtype=np.float64)))


def adaptive_weight_update(lam: float, grad_Lu, grad_LF, omega: float) -> float:
    """Moving-average update of the data weight from mean gradient magnitudes."""
    if not lam > 0:
        raise ValueError("weight must be positive")
    gu = _flat_abs(grad_Lu)
    gf = _flat_abs(grad_LF)
    if not (np.all(np.isfinite(gu)) and np.all(np.isfinite(gf))):
        raise FloatingPointError("non-finite gradient in weight update")
    denom = gu.mean() if gu.size else 0.0
    if denom == 0.0:
        raise ZeroDivisionError("mean data-loss gradient is zero; cannot rebalance")
    target = gf.mean() / denom
    return float((1.0 - omega) * lam + omega * target)


def relative_l2(predicted, truth) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch {predicted.shape} vs {truth.shape}")
    norm = np.linalg.norm(truth)
    if norm == 0.0:
        raise ValueError("relative error undefined for zero-norm truth")
    return float(np.linalg.norm(truth - predicted) / norm)


def normalize_pressure(p: np.ndarray) -> np.ndarray:
    """Shift a pressure field to zero mean over its points."""
    p = np.asarray(p, dtype=np.float64)
    return p - p.mean()


# ---------------------------------------------------------------------------
# graphs

def _mse_node(pred: g.Node, target: np.ndarray) -> g.Node:
    return (pred - g.constant(target)).square().mean()


class Objective:
    """Data, physics and test graphs for one problem/bundle, sharing parameters."""

    def __init__(self, problem: Problem, bundle: DatasetBundle, config: NetworkConfig):
        if config.input_dim != problem.input_dim or config.output_dim != problem.output_dim:
            raise ValueError(
                f"{problem.name} needs a {problem.input_dim}->{problem.output_dim} network, "
                f"got {config.input_dim}->{config.output_dim}")
        self.problem = problem
        self.bundle = bundle
        self.net = NetworkGraph(config)

        terms = []
        for points, targets in bundle.data_sets():
            out = self.net.jet(g.constant(g.seed_jet(points, None)), None)
            for k in range(targets.shape[1]):
                terms.append(_mse_node(g.component(out, 0, k), targets[:, k]))
        self.L_u = _sum_nodes(terms)

        layout = problem.layout
        jets = self.net.outputs(g.constant(g.seed_jet(bundle.collocation_points, layout)), layout)
        self.residuals = problem.residuals(jets)
        self.L_F = _sum_nodes([r.square().mean() for r in self.residuals])

        self._test = self.net.jet(g.constant(g.seed_jet(bundle.test_points, None)), None)

    def losses(self, bindings) -> tuple[float, float]:
        lu, lf = g.evaluate([self.L_u, self.L_F], bindings)
        return float(lu), float(lf)

    def gradients(self, bindings) -> tuple[float, float, dict, dict]:
        """Loss values and per-objective parameter gradients."""
        lu, lf = self.losses(bindings)
        gu = g.parameter_gradient(self.L_u)
        gf = g.parameter_gradient(self.L_F)
        # parameters reached by only one objective get explicit zeros
        for name, value in bindings.items():
            gu.setdefault(name, np.zeros_like(np.asarray(value, dtype=np.float64)))
            gf.setdefault(name, np.zeros_like(np.asarray(value, dtype=np.float64)))
        return lu, lf, gu, gf

    def predict_test(self, bindings) -> np.ndarray:
        return g.evaluate(self._test, bindings)[:, 0, :].T

    def test_errors(self, bindings) -> dict[str, float]:
        pred = self.predict_test(bindings)
        truth = self.bundle.test_targets
        if isinstance(self.problem, HeatProblem):
            return {"eps_u": relative_l2(pred[:, 0], truth[:, 0])}
        return {
            "eps_u": relative_l2(pred[:, 0], truth[:, 0]),
            "eps_v": relative_l2(pred[:, 1], truth[:, 1]),
            "eps_p": relative_l2(normalize_pressure(pred[:, 2]), truth[:, 2]),
        }


def _sum_nodes(nodes: list[g.Node]) -> g.Node:
    total = nodes[0]
    for n in nodes[1:]:
        total = total + n
    return total


def physics_loss(params: NetworkParams, collocation_points: np.ndarray, problem: Problem) -> float:
    """Mean squared PDE residual (summed over equations) at the given points."""
    pts = np.asarray(collocation_points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("need a non-empty (N, D) collocation set")
    net = NetworkGraph(params.config)
    layout = problem.layout
    jets = net.outputs(g.constant(g.seed_jet(pts, layout)), layout)
    loss = _sum_nodes([r.square().mean() for r in problem.residuals(jets)])
    return float(g.evaluate(loss, params.to_dict()))


# ---------------------------------------------------------------------------
# training loop

def derive_seeds(seed: int) -> tuple[int, int]:
    """Independent (data, init) seeds from one run seed."""
    data_seed, init_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(data_seed), int(init_seed)


def network_config_for(problem: Problem, base: NetworkConfig | None, training: TrainingConfig) -> NetworkConfig:
    base = base or NetworkConfig(problem.input_dim, problem.output_dim)
    if training.adaptive_activation and not base.adaptive_activation:
        base = replace(base, adaptive_activation=True)
    return base


def train_run(problem: Problem, network_config: NetworkConfig | None, training_config: TrainingConfig,
              bundle: DatasetBundle | None = None, params: NetworkParams | None = None) -> RunResult:
    """Train one PINN with full-batch Adam on the weighted (or adaptive) objective.

    A non-finite loss or gradient ends the run early with ``diverged=True``;
    the returned parameters and trajectory are the last finite ones.
    """
    tc = training_config
    net_cfg = network_config_for(problem, network_config, tc)
    data_seed, init_seed = derive_seeds(tc.seed)
    if bundle is None:
        bundle = sample(problem, data_seed)
    if params is None:
        params = init(net_cfg, init_seed)
    objective = Objective(problem, bundle, net_cfg)
    schedule = tc.schedule

    theta = params.to_dict()
    good = theta
    state = AdamState()
    lam = 1.0
    trajectory: list[TrajectoryRecord] = []
    diverged, message = False, ""
    start = time.perf_counter()

    def weights() -> tuple[float, float]:
        return (lam, 1.0) if tc.adaptive_weighting else (tc.alpha, 1.0 - tc.alpha)

    def record(epoch: int, lu: float, lf: float):
        wu, wf = weights()
        trajectory.append(TrajectoryRecord(
            epoch, lu, lf, wu * lu + wf * lf, objective.test_errors(theta), wu))

    try:
        for epoch in range(tc.epochs):
            lu, lf, gu, gf = objective.gradients(theta)
            good = theta
            if tc.adaptive_weighting and epoch % tc.weighting_update_every == 0:
                lam = adaptive_weight_update(lam, gu, gf, tc.weighting_smoothing)
            if epoch % tc.record_every == 0:
                record(epoch, lu, lf)
                if epoch % (tc.record_every * 50) == 0:
                    log.debug("epoch %d  L_u=%.3e  L_F=%.3e  %s", epoch, lu, lf, trajectory[-1].errors)
            wu, wf = weights()
            grads = {k: wu * gu[k] + wf * gf[k] for k in theta}
            theta, state = adam_step(theta, grads, state, lr_at(schedule, epoch))
        lu, lf = objective.losses(theta)
        good = theta
        record(tc.epochs, lu, lf)
    except (g.NonFiniteError, FloatingPointError, ZeroDivisionError) as exc:
        theta = good
        diverged = True
        message = f"{type(exc).__name__}: {exc}"
        log.warning("run diverged: %s", message)

    return RunResult(
        problem=problem,
        network_config=net_cfg,
        training_config=tc,
        params=NetworkParams.from_dict(net_cfg, theta),
        trajectory=trajectory,
        diverged=diverged,
        message=message,
        wall_time=time.perf_counter() - start,
    )
