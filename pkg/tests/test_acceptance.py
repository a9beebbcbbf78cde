"""Acceptance criteria, one test per criterion.

Tier 1 is fast.  Tier 2 reads deterministic runs from the run store in
``results/store`` and trains whatever is missing (about 18 minutes per
20k-epoch heat run on one core; ``python3 tests/desk_runs.py`` prefills
the store).  Tier 3 runs when ``PARETO_PINN_FULL=1`` is set or when its
runs are already stored.

Each test records a pass/fail line that is printed in the terminal summary.
"""

import math
import os
from statistics import median

import mpmath
import numpy as np
import pytest

import desk_runs as desk
from conftest import ACCEPTANCE
from pareto_pinn import verify
from pareto_pinn.analysis import SweepResult, _entry, tradeoff_rank_stat
from pareto_pinn.cli import PRESET_NAMES, preset
from pareto_pinn.problems import KovasznayProblem, kov_gamma


def record(cid: int, ok: bool, detail: str):
    ACCEPTANCE[cid] = ("PASS" if ok else "FAIL", detail)
    print(f"criterion {cid}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def oracle(cid: int, *checks):
    details = []
    try:
        for check in checks:
            details.append(check())
    except AssertionError as exc:
        record(cid, False, str(exc))
    record(cid, True, "; ".join(details))


def eps(runs, key="eps_u"):
    return [r.final.errors[key] for r in runs]


def fmt_pct(values):
    return "[" + ", ".join(f"{100 * v:.3g}%" for v in values) + "]"


def sweep_of(specs) -> SweepResult:
    runs = desk.load(specs)
    return SweepResult(specs[0].problem, [_entry(s.training_config.alpha, r) for s, r in zip(specs, runs)])


# ---------------------------------------------------------------------------
# tier 1

def test_c01_autodiff_matches_finite_differences():
    oracle(1, verify.check_parameter_gradients, verify.check_input_derivatives)


def test_c02_analytic_residuals_vanish():
    oracle(2, verify.check_analytic_residuals)


def test_c03_gamma_and_scaling_conventions():
    mpmath.mp.dps = 50
    nu = mpmath.mpf(1) / 40
    ref = float(1 / (2 * nu) - mpmath.sqrt(1 / (4 * nu ** 2) + 4 * mpmath.pi ** 2))
    gam = kov_gamma(1 / 40)
    ok = abs(gam - ref) < 1e-12 and abs(gam - (-0.9637)) < 1e-4
    for name in PRESET_NAMES:
        for e in preset(name) + preset(name, desk=True):
            p = e.make_problem()
            if isinstance(p, KovasznayProblem):
                ok &= p.Re == 1 / p.nu and p.M * p.u0 == 1.0
    for M in (0.2, 1.0, 5.0):
        p = KovasznayProblem(M=M)
        ok &= p.Re == 40.0 and p.M * p.u0 == 1.0
    record(3, ok, f"gamma(1/40) = {gam:.10f} (mpmath {ref:.10f}); Re = 1/nu, M*u0 = 1 on all presets")


def test_c04_module_invariants():
    oracle(4, verify.check_gradient_decomposition, verify.check_pareto_filter, verify.check_rank_statistic,
           _relative_l2_scale_invariance)


def _relative_l2_scale_invariance():
    from pareto_pinn.training import relative_l2
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        truth, pred = rng.normal(size=20), rng.normal(size=20)
        c = rng.choice([-1, 1]) * 10 ** rng.uniform(-3, 3)
        base = relative_l2(pred, truth)
        worst = max(worst, abs(relative_l2(c * pred, c * truth) - base) / base)
    assert worst <= 1e-12, f"relative_l2 scale variance {worst:.1e}"
    return f"relative_l2 scale invariance {worst:.1e}"


def test_c05_adaptive_slope_at_unit_gain():
    oracle(5, verify.check_adaptive_slope_identity)


# ---------------------------------------------------------------------------
# tier 2: 20k epochs, medians over three seeds

desk_mark = pytest.mark.desk


@desk_mark
def test_c06_heat_scale_kappa1():
    good, bad = (desk.load(g) for g in desk.GROUPS["heat_scale_kappa1"])
    m_good, m_bad = median(eps(good)), median(eps(bad))
    record(6, m_good < 0.01 and m_bad > 0.10,
           f"M=1 median eps_u {100 * m_good:.3g}% (<1%), M=0.2 median {100 * m_bad:.3g}% (>10%); "
           f"seeds {fmt_pct(eps(good))} / {fmt_pct(eps(bad))}")


@desk_mark
def test_c07_heat_scale_kappa004():
    good, bad = (desk.load(g) for g in desk.GROUPS["heat_scale_kappa004"])
    m_good, m_bad = median(eps(good)), median(eps(bad))
    record(7, m_good < 0.01 and m_bad > 0.20,
           f"M=1 median eps_u {100 * m_good:.3g}% (<1%), M=5 median {100 * m_bad:.3g}% (>20%); "
           f"seeds {fmt_pct(eps(good))} / {fmt_pct(eps(bad))}")


@desk_mark
def test_c08_heat_alpha_pair():
    high, low = (desk.load(g) for g in desk.GROUPS["heat_alpha_pair"])
    m_high, m_low = median(eps(high)), median(eps(low))
    record(8, m_high < m_low / 10,
           f"M=0.2 median eps_u alpha=0.999 {100 * m_high:.3g}% vs alpha=0.1 {100 * m_low:.3g}% "
           f"(ratio {m_low / m_high:.3g}, need >10)")


@desk_mark
def test_c09_convex_front_rank_statistics():
    rho_f, rho_u = tradeoff_rank_stat(sweep_of(desk.GROUPS["heat_sweep_M5"]))
    record(9, rho_f >= 0.8 and rho_u <= -0.8,
           f"M=5 kappa=1: rho(alpha, L_F) = {rho_f:.3f} (>=0.8), rho(alpha, L_u) = {rho_u:.3f} (<=-0.8)")


@desk_mark
def test_c10_adaptive_weighting():
    adaptive, base = (desk.load(g) for g in desk.GROUPS["heat_adaptive"])
    m_a, m_b = median(eps(adaptive)), median(eps(base))
    record(10, m_a < 0.05 and m_b > 0.10,
           f"M=0.2 median eps_u adaptive {100 * m_a:.3g}% (<5%), alpha=0.5 baseline {100 * m_b:.3g}% (>10%); "
           f"seeds {fmt_pct(eps(adaptive))}")


@desk_mark
def test_c11_scale_collapse_sign_agreement():
    small = tradeoff_rank_stat(sweep_of(desk.GROUPS["heat_sweep_M02_k004"]))
    unit = tradeoff_rank_stat(sweep_of(desk.GROUPS["heat_sweep_M1_k1"]))
    ok = all(math.copysign(1, a) == math.copysign(1, b) and a != 0 and b != 0 and not math.isnan(a + b)
             for a, b in zip(small, unit))
    record(11, ok, f"(M=0.2, kappa=0.04) rho_F={small[0]:.3f} rho_u={small[1]:.3f}; "
                   f"(M=1, kappa=1) rho_F={unit[0]:.3f} rho_u={unit[1]:.3f}")


# ---------------------------------------------------------------------------
# tier 3: optional

def _tier3(specs, cid):
    if os.environ.get("PARETO_PINN_FULL") != "1" and not desk.cached(specs):
        ACCEPTANCE[cid] = ("SKIP", "optional; set PARETO_PINN_FULL=1 or prefill with desk_runs.py --full")
        pytest.skip("optional full-budget criterion")
    return desk.load(specs)


@pytest.mark.full
def test_c12_full_budget_magnitudes():
    groups = [desk.FULL_GROUPS[k] for k in ("full_heat_kappa1", "full_heat_kappa004", "full_kovasznay")]
    runs = _tier3([s for g in groups for s in g], 12)
    # reported single-run errors: upper bounds, approximate values and lower bounds
    reference = {
        ("heat", 0.2, 1.0): ("approx", 0.36), ("heat", 1.0, 1.0): ("below", 0.00015),
        ("heat", 5.0, 1.0): ("below", 0.00015), ("heat", 0.2, 0.04): ("approx", 0.0004),
        ("heat", 1.0, 0.04): ("approx", 0.00007), ("heat", 5.0, 0.04): ("approx", 0.81),
        ("kovasznay", 0.2, 0.025): ("above", 0.13), ("kovasznay", 1.0, 0.025): ("below", 0.007),
        ("kovasznay", 5.0, 0.025): ("below", 0.007),
    }
    ok, parts = True, []
    for run in runs:
        p = run.problem
        kind, ref = reference[(p.name, p.M, p.kappa if p.name == "heat" else p.nu)]
        for name, got in run.final.errors.items():
            # within one order of magnitude of the reported figure
            within = {"approx": ref / 10 <= got <= ref * 10, "below": got <= ref * 10,
                      "above": got >= ref / 10}[kind]
            ok &= within
            parts.append(f"{p.name} M={p.M:g} {name}={100 * got:.3g}% ({kind} {100 * ref:.3g}%)")
    record(12, ok, "; ".join(parts))


@pytest.mark.full
def test_c13_kovasznay_pressure_scale():
    good, bad = desk.FULL_GROUPS["kovasznay_desk"]
    runs = _tier3(good + bad, 13)
    e_good, e_bad = runs[0].final.errors["eps_p"], runs[1].final.errors["eps_p"]
    record(13, e_good < 0.05 and e_bad > 0.10,
           f"nu=1/40, 20k epochs: M=1 eps_p {100 * e_good:.3g}% (<5%), M=0.2 eps_p {100 * e_bad:.3g}% (>10%)")
