import math

import mpmath
import numpy as np
import pytest

from pareto_pinn.problems import (HeatProblem, KovasznayProblem, heat_analytic, heat_analytic_jet, heat_residual,
                                  kov_analytic, kov_analytic_jets, kov_gamma, load_bundle, ns_residuals, sample,
                                  save_bundle)

SCALES = (0.2, 1.0, 5.0)


def mp_gamma(nu):
    mpmath.mp.dps = 40
    nu = mpmath.mpf(nu)
    return float(1 / (2 * nu) - mpmath.sqrt(1 / (4 * nu ** 2) + 4 * mpmath.pi ** 2))


def test_heat_analytic_values():
    p = HeatProblem()
    assert heat_analytic(0.0, 0.3, p) == 0.0
    assert abs(heat_analytic(1.0, 0.3, p)) < 1e-15
    assert heat_analytic(0.5, 0.0, p) == 1.0
    mpmath.mp.dps = 30
    ref = float(mpmath.sin(mpmath.pi / 4) * mpmath.exp(-mpmath.pi ** 2 / 10))
    assert heat_analytic(0.25, 0.1, p) == pytest.approx(ref, rel=1e-14)


def test_heat_domain():
    p = HeatProblem(M=5.0, kappa=0.04)
    assert p.T == 625.0
    assert p.bounds == ((0.0, 5.0), (0.0, 312.5))
    with pytest.raises(ValueError):
        HeatProblem(M=0.0)
    with pytest.raises(ValueError):
        HeatProblem(kappa=-1.0)


@pytest.mark.parametrize("M,kappa", [(0.2, 1.0), (1.0, 1.0), (5.0, 1.0), (0.2, 0.04), (5.0, 0.04)])
def test_heat_analytic_satisfies_pde(M, kappa):
    p = HeatProblem(M=M, kappa=kappa)
    pts = sample(p, 1).collocation_points[:100]
    assert np.max(np.abs(heat_residual(heat_analytic_jet(pts, p), kappa))) < 1e-10


@pytest.mark.parametrize("M", SCALES)
def test_kovasznay_analytic_satisfies_navier_stokes(M):
    p = KovasznayProblem(M=M)
    pts = sample(p, 2).collocation_points[:100]
    for r in ns_residuals(kov_analytic_jets(pts, p), p.rho, p.nu):
        assert np.max(np.abs(r)) < 1e-8


def test_gamma():
    assert kov_gamma(1 / 40) == pytest.approx(mp_gamma("0.025"), abs=1e-12)
    assert kov_gamma(1 / 40) == pytest.approx(-0.9637, abs=1e-4)
    assert kov_gamma(1.0) == pytest.approx(mp_gamma(1), abs=1e-12)
    with pytest.raises(ValueError):
        kov_gamma(0.0)


@pytest.mark.parametrize("M", SCALES)
def test_kovasznay_scaling_conventions(M):
    p = KovasznayProblem(M=M)
    assert p.Re == 40.0
    assert p.M * p.u0 == 1.0
    assert p.bounds == ((-M, M), (-M, M))


def _fd_jet_check(fn, pts, jets, h=1e-5):
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        up, mid, down = fn(pts + e), fn(pts), fn(pts - e)
        for r, jet in enumerate(jets):
            np.testing.assert_allclose(jet.value, mid[r], rtol=0, atol=1e-13)
            np.testing.assert_allclose(jet.first[d], (up[r] - down[r]) / (2 * h), rtol=1e-6, atol=1e-6)
            np.testing.assert_allclose(jet.second[d], (up[r] - 2 * mid[r] + down[r]) / h ** 2,
                                       rtol=1e-3, atol=1e-3)


def test_heat_jet_derivatives():
    p = HeatProblem(M=1.3, kappa=0.7)
    pts = sample(p, 0).collocation_points[:20]
    _fd_jet_check(lambda x: [heat_analytic(x[:, 0], x[:, 1], p)], pts, [heat_analytic_jet(pts, p)])


def test_kovasznay_jet_derivatives():
    p = KovasznayProblem(M=1.0, C=0.3)
    pts = sample(p, 0).collocation_points[:20]
    _fd_jet_check(lambda x: list(kov_analytic(x[:, 0], x[:, 1], p)), pts, kov_analytic_jets(pts, p))


def test_heat_sampling_geometry():
    p = HeatProblem(M=0.2, kappa=1.0)
    b = sample(p, 3)
    assert b.sizes == (100, 200, 2500, 1000)
    assert np.all(b.ic_points[:, 1] == 0.0)
    np.testing.assert_array_equal(b.ic_targets[:, 0], heat_analytic(b.ic_points[:, 0], 0.0, p))
    assert set(np.unique(b.bc_points[:, 0])) == {0.0, 0.2}
    assert np.sum(b.bc_points[:, 0] == 0.0) == 100
    assert np.all(b.bc_targets == 0.0)
    (x0, x1), (t0, t1) = p.bounds
    for pts in (b.collocation_points, b.test_points):
        assert np.all((pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= t0) & (pts[:, 1] <= t1))
    np.testing.assert_array_equal(b.test_targets, p.exact(b.test_points))


def test_kovasznay_sampling_geometry():
    p = KovasznayProblem(M=5.0)
    b = sample(p, 4)
    assert b.sizes == (0, 400, 2500, 1000)
    on_edge = np.isclose(np.abs(b.bc_points), 5.0).any(axis=1)
    assert on_edge.all()
    assert b.bc_targets.shape == (400, 2)
    # the analytic test pressure is zero-mean by construction of C
    assert abs(b.test_targets[:, 2].mean()) < 1e-12
    assert b.test_targets.shape == (1000, 3)


def test_sampling_is_deterministic():
    p = KovasznayProblem()
    a, b, c = sample(p, 5), sample(p, 5), sample(p, 6)
    assert np.array_equal(a.collocation_points, b.collocation_points)
    assert not np.array_equal(a.collocation_points, c.collocation_points)


@pytest.mark.parametrize("problem", [HeatProblem(M=5.0, kappa=0.04), KovasznayProblem(M=0.2)])
def test_bundle_csv_round_trip(tmp_path, problem):
    b = sample(problem, 8)
    files = save_bundle(b, problem, tmp_path)
    assert all(f.exists() for f in files)
    r = load_bundle(tmp_path, problem)
    for name in ("ic_points", "bc_points", "bc_targets", "collocation_points", "test_points", "test_targets"):
        assert np.array_equal(getattr(b, name), getattr(r, name)), name
    assert r.pressure_offset == b.pressure_offset
    header = (tmp_path / "test.csv").read_text().splitlines()[0]
    assert header == ",".join(problem.coordinate_names + problem.output_names)


def test_pressure_form_is_the_consistent_one():
    # the +u0^2 exp(2 gamma x) variant leaves an O(1) x-momentum residual
    p = KovasznayProblem()
    pts = sample(p, 0).collocation_points[:50]
    u, v, pr = kov_analytic_jets(pts, p)
    wrong_px = -2.0 * pr.first[0]
    fx_wrong = u.value * u.first[0] + v.value * u.first[1] + wrong_px - p.nu * (u.second[0] + u.second[1])
    assert np.max(np.abs(fx_wrong)) > 0.1
    assert math.isclose(p.gamma, kov_gamma(p.nu))
