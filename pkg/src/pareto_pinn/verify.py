"""Quick self-checks against independent oracles, run by ``pareto-pinn verify``."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable

import numpy as np

from . import graph as g
from .analysis import SweepEntry, SweepResult, pareto_filter, tradeoff_rank_stat
from .model import NetworkConfig, NetworkParams, forward, init, input_derivatives
from .problems import (HeatProblem, KovasznayProblem, heat_analytic_jet, heat_residual, kov_analytic_jets,
                       kov_gamma, ns_residuals, sample)
from .training import Objective, weighted_total


def _tiny(problem, adaptive=False, seed=0) -> tuple[Objective, dict]:
    cfg = NetworkConfig(2, problem.output_dim, hidden_layers=2, hidden_width=5, adaptive_activation=adaptive)
    params = init(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    params = NetworkParams(cfg, params.weights, [rng.normal(0, 0.3, b.shape) for b in params.biases],
                           params.slope_a)
    return Objective(problem, sample(problem, seed), cfg), params.to_dict()


def _fd_error(objective: Objective, theta: dict, which: int, h: float = 1e-5) -> float:
    grads = objective.gradients(theta)[2 + which]
    worst = 0.0
    for name, value in theta.items():
        value = np.asarray(value, dtype=np.float64)
        fd = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            shifted = []
            for step in (h, -h):
                th = {k: np.array(v, dtype=np.float64) for k, v in theta.items()}
                th[name][idx] += step
                shifted.append(objective.losses(th)[which])
            fd[idx] = (shifted[0] - shifted[1]) / (2 * h)
        scale = max(np.max(np.abs(fd)), 1e-12)
        worst = max(worst, float(np.max(np.abs(grads[name] - fd)) / scale))
    return worst


def check_parameter_gradients() -> str:
    small_heat = HeatProblem(M=0.8, kappa=0.5, n_ic=5, n_bc=6, n_col=8, n_test=4)
    small_kov = KovasznayProblem(M=0.9, nu=0.1, n_bc=8, n_col=8, n_test=4)
    worst = 0.0
    for problem in (small_heat, small_kov):
        for adaptive in (False, True):
            obj, theta = _tiny(problem, adaptive)
            worst = max(worst, _fd_error(obj, theta, 0), _fd_error(obj, theta, 1))
    assert worst < 1e-5, f"relative error {worst:.2e}"
    return f"max relative error {worst:.1e}"


def check_input_derivatives() -> str:
    obj, theta = _tiny(KovasznayProblem(n_bc=4, n_col=4, n_test=4))
    params = NetworkParams.from_dict(obj.net.config, theta)
    x = np.random.default_rng(5).uniform(-0.5, 0.5, size=(6, 2))
    jets = input_derivatives(params, x)
    h, worst = 1e-4, 0.0
    mid = forward(params, x)
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        up, down = forward(params, x + e), forward(params, x - e)
        for r, jet in enumerate(jets):
            worst = max(worst,
                        float(np.max(np.abs(jet.first[d].value - (up - down)[:, r] / (2 * h)))),
                        float(np.max(np.abs(jet.second[d].value - (up - 2 * mid + down)[:, r] / h ** 2))))
    assert worst < 1e-6, f"abs error {worst:.2e}"
    return f"max abs error {worst:.1e}"


def check_analytic_residuals() -> str:
    rng = np.random.default_rng(7)
    worst_heat = 0.0
    for M, kappa in ((0.2, 1.0), (1.0, 1.0), (5.0, 0.04)):
        prob = HeatProblem(M=M, kappa=kappa)
        (x0, x1), (t0, t1) = prob.bounds
        pts = np.column_stack([rng.uniform(x0, x1, 100), rng.uniform(t0, t1, 100)])
        worst_heat = max(worst_heat, float(np.max(np.abs(heat_residual(heat_analytic_jet(pts, prob), kappa)))))
    worst_kov = 0.0
    for M in (0.2, 1.0, 5.0):
        prob = KovasznayProblem(M=M)
        pts = rng.uniform(-M, M, size=(100, 2))
        res = ns_residuals(kov_analytic_jets(pts, prob), prob.rho, prob.nu)
        worst_kov = max(worst_kov, max(float(np.max(np.abs(r))) for r in res))
    assert worst_heat < 1e-10 and worst_kov < 1e-8, f"heat {worst_heat:.1e}, kovasznay {worst_kov:.1e}"
    return f"heat {worst_heat:.1e}, kovasznay {worst_kov:.1e}"


def check_gamma() -> str:
    nu = 1 / 40
    gam = kov_gamma(nu)
    # gamma is the negative root of gamma^2 - gamma/nu - 4 pi^2 = 0
    root = 1 / (2 * nu) - 0.5 * math.sqrt(1 / nu ** 2 + 16 * math.pi ** 2)
    assert abs(gam - root) < 1e-12 and abs(gam + 0.9637) < 1e-4, f"gamma {gam}"
    return f"gamma(1/40) = {gam:.6f}"


def _dominated_brute(p, points):
    return any(q[0] <= p[0] and q[1] <= p[1] and (q[0] < p[0] or q[1] < p[1]) for q in points)


def check_pareto_filter() -> str:
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 25))
        pts = [tuple(map(float, p)) for p in rng.integers(0, 6, size=(n, 2))]
        expect = [p for p in pts if not _dominated_brute(p, pts)]
        got = pareto_filter(pts)
        assert got == expect, f"{pts}: {got} != {expect}"
    return "200 random sets agree with brute force"


def check_rank_statistic() -> str:
    def sweep(pairs):
        return SweepResult(HeatProblem(), [SweepEntry(a, 0, 1.0, lf, {}, False, None) for a, lf in pairs])
    rho_f, _ = tradeoff_rank_stat(sweep([(0.1, 5.0), (0.5, 5.0), (0.9, 7.0)]))
    assert abs(rho_f - math.sqrt(3) / 2) < 1e-12, f"tie case {rho_f}"
    rho_f, _ = tradeoff_rank_stat(sweep([(0.1, 3.0), (0.5, 2.0), (0.9, 1.0)]))
    assert rho_f == -1.0
    return f"tie case {math.sqrt(3) / 2:.4f}"


def check_adaptive_slope_identity() -> str:
    prob = HeatProblem(n_ic=10, n_bc=10, n_col=20, n_test=10)
    base = NetworkConfig(2, 1)
    params = init(base, 3)
    adaptive_cfg = replace(base, adaptive_activation=True)
    adaptive = NetworkParams(adaptive_cfg, params.weights, params.biases, 1.0 / adaptive_cfg.scale_factor_n)
    bundle = sample(prob, 0)
    plain = Objective(prob, bundle, base).losses(params.to_dict())
    scaled = Objective(prob, bundle, adaptive_cfg).losses(adaptive.to_dict())
    assert plain == scaled, f"{plain} != {scaled}"
    return "losses bit-identical"


def check_gradient_decomposition() -> str:
    obj, theta = _tiny(HeatProblem(n_ic=5, n_bc=6, n_col=8, n_test=4))
    alpha = 0.3
    total = weighted_total(obj.L_u, obj.L_F, alpha)
    g.evaluate(total, theta)
    combined = g.parameter_gradient(total)
    _, _, gu, gf = obj.gradients(theta)
    worst = 0.0
    for k in theta:
        ref = alpha * gu[k] + (1 - alpha) * gf[k]
        worst = max(worst, float(np.max(np.abs(combined[k] - ref)) / max(np.max(np.abs(ref)), 1e-300)))
    assert worst < 1e-12, f"relative error {worst:.1e}"
    return f"relative error {worst:.1e}"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("parameter gradients vs finite differences", check_parameter_gradients),
    ("input derivatives vs finite differences", check_input_derivatives),
    ("analytic solutions satisfy their PDEs", check_analytic_residuals),
    ("Kovasznay gamma", check_gamma),
    ("Pareto filter vs brute force", check_pareto_filter),
    ("Spearman statistic", check_rank_statistic),
    ("adaptive slope n*a=1 matches plain tanh", check_adaptive_slope_identity),
    ("weighted gradient decomposition", check_gradient_decomposition),
]


def run_checks(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            detail = fn()
            echo(f"PASS  {name}: {detail}")
        except Exception as exc:  # noqa: BLE001 - report and continue
            ok = False
            echo(f"FAIL  {name}: {exc}")
    return ok
