import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jkoentropy.harness.presets import Barenblatt, riemann_smoothed
from jkoentropy.measure1d import GridDensity
from jkoentropy.refsolver import (CflError, FvConfig, GridTrajectory, fv_run, fv_step, gronwall_check,
                                  gronwall_constant, l1_distance, stable_dt)
from jkoentropy.transform import gaussian_b, zero_b

B = gaussian_b(0.5, 1.0)


def bump(center, width, lo=-2.0, hi=2.0, cells=200):
    return GridDensity.from_function(lambda y: np.clip(1 - ((y - center) / width) ** 2, 0, None), lo, hi, cells)


def test_zero_is_a_fixed_point():
    u = GridDensity(-1.0, 0.01, np.zeros(200))
    out = fv_step(u, B, 2.0, 1e-3)
    assert np.all(out.values == 0.0)


def test_cfl_violation_reports_recommended_step():
    u = bump(0.0, 0.5)
    limit = stable_dt(u, B, 2.0)
    with pytest.raises(CflError) as exc:
        fv_step(u, B, 2.0, 2 * limit)
    assert exc.value.recommended == pytest.approx(limit)
    fv_step(u, B, 2.0, limit)


def test_config_validation():
    with pytest.raises(ValueError):
        FvConfig(0.0, 0.0, 10, 1e-3, 1.0)
    with pytest.raises(ValueError):
        FvConfig(0.0, 0.1, 10, 1e-3, 1.0, nu=-1.0)
    with pytest.raises(ValueError):
        FvConfig(0.0, 0.1, 10, 1e-3, 1.0, cfl_safety=1.5)
    with pytest.raises(ValueError, match="y-grid"):
        fv_run(bump(0.0, 0.5), B, 2.0, FvConfig(-3.0, 0.02, 200, 1.0, 0.1))


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(0.2, 0.8), st.floats(1.5, 3.0), st.floats(0.0, 0.05))
def test_mass_and_nonnegativity(center, width, m, nu):
    u = bump(center, width)
    tr = fv_run(u, B, m, FvConfig(-2.0, 0.02, 200, 1.0, 0.02, nu=nu), snapshot_times=[0.005, 0.01])
    for s in tr.states:
        assert abs(s.mass - u.mass) < 1e-12
        assert np.all(s.values >= 0)


def test_sup_nonincreasing_without_convection():
    u = GridDensity.from_function(riemann_smoothed(), -2.5, 2.5, 250)
    tr = fv_run(u, zero_b(), 2.0, FvConfig(-2.5, 0.02, 250, 1.0, 0.1), snapshot_times=np.linspace(0, 0.1, 21))
    sups = [float(np.max(s.values)) for s in tr.states]
    assert np.all(np.diff(sups) <= 1e-15)


def test_translation_equivariance_without_convection():
    cfg = FvConfig(-2.0, 0.02, 200, 1.0, 0.05)
    a = fv_run(bump(-0.3, 0.4), zero_b(), 2.0, cfg).at(0.05).values
    b = fv_run(bump(0.3, 0.4), zero_b(), 2.0, cfg).at(0.05).values
    # 0.6 is 30 cells
    np.testing.assert_allclose(b[30:], a[:-30], atol=1e-12)


def test_viscosity_refinement_converges():
    u = GridDensity.from_function(riemann_smoothed(), -2.5, 2.5, 250)
    sols = [fv_run(u, B, 2.0, FvConfig(-2.5, 0.02, 250, 1.0, 0.05, nu=nu)).at(0.05) for nu in (0.08, 0.04, 0.02, 0.01)]
    gaps = [l1_distance(sols[i], sols[i + 1]) for i in range(3)]
    assert np.all(np.diff(gaps) < 0)


def test_barenblatt_closed_form_solves_the_pde():
    bb = Barenblatt(2.0)
    y = np.linspace(-0.8, 0.8, 161) * bb.support_radius(0.1)
    ut_scale = np.max(np.abs(bb(0.1 + 1e-3, y) - bb(0.1 - 1e-3, y))) / 2e-3
    r1 = np.max(np.abs(bb.pde_residual(0.1, y, 1e-3)))
    r2 = np.max(np.abs(bb.pde_residual(0.1, y, 5e-4)))
    # a wrong exponent or constant leaves an O(1) residual relative to u_t
    assert r1 < 1e-3 * ut_scale
    assert r1 / r2 == pytest.approx(4.0, rel=0.1)


def test_barenblatt_error_is_first_order_or_better():
    bb = Barenblatt(2.0)
    errs = []
    dys = (0.04, 0.02, 0.01)
    for dy in dys:
        cells = int(round(4 / dy))
        tr = fv_run(bb.density(0.1, -2, 2, cells), zero_b(), 2.0, FvConfig(-2.0, dy, cells, 1.0, 0.2, t0=0.1))
        errs.append(l1_distance(tr.at(0.2), bb.density(0.2, -2, 2, cells)))
    errs = np.array(errs)
    assert np.all(errs <= 0.05 * np.array(dys))
    orders = np.diff(np.log(errs)) / np.diff(np.log(dys))
    assert np.min(orders) >= 1.0


def test_l1_distance_examples():
    u = bump(-1.0, 0.3)
    v = bump(1.0, 0.3)
    assert l1_distance(u, u) == 0.0
    assert l1_distance(u, v) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        l1_distance(u, bump(0.0, 0.3, cells=100))


def _pair(b, times):
    cfg = FvConfig(-2.5, 0.02, 250, 1.0, times[-1])
    u = GridDensity.from_function(riemann_smoothed(), -2.5, 2.5, 250)
    v = bump(0.2, 0.7, -2.5, 2.5, 250)
    return fv_run(u, b, 2.0, cfg, times), fv_run(v, b, 2.0, cfg, times)


def test_l1_contraction_without_convection():
    times = np.linspace(0, 0.1, 11)
    u, v = _pair(zero_b(), times)
    res = gronwall_check(u, v, 0.0)
    assert res.passed and np.all(np.diff(res.distances) <= 1e-12)


def test_gronwall_quasi_contraction():
    times = np.linspace(0, 0.1, 11)
    u, v = _pair(B, times)
    sup = max(float(np.max(s.values)) for s in u.states + v.states)
    C = gronwall_constant(2.0, sup, B)
    # ||b|| = 0.5, ||b'|| = 0.5 sqrt(2) exp(-1/2)
    assert C == pytest.approx(2 * sup * (2 * 0.5 * np.sqrt(2) * np.exp(-0.5) + 0.5), rel=1e-6)
    assert gronwall_check(u, v, C).passed


def test_gronwall_check_detects_growth():
    g = GridDensity(0.0, 1.0, np.array([1.0, 0.0]))
    h = GridDensity(0.0, 1.0, np.array([0.0, 1.0]))
    u = GridTrajectory([0.0, 1.0], [g, g])
    v = GridTrajectory([0.0, 1.0], [g, h])
    res = gronwall_check(u, v, 0.5)
    assert not res.passed and res.violations == 1 and res.worst_ratio == np.inf
    with pytest.raises(ValueError):
        gronwall_check(u, GridTrajectory([0.0], [g]), 0.5)


def test_snapshot_lookup_and_save_load(tmp_path):
    u = bump(0.0, 0.5)
    tr = fv_run(u, B, 2.0, FvConfig(-2.0, 0.02, 200, 1.0, 0.02), snapshot_times=[0.01])
    assert tr.times == [0.0, 0.01, 0.02]
    with pytest.raises(KeyError):
        tr.at(0.015)
    tr.save(tmp_path / "fv")
    back = GridTrajectory.load(tmp_path / "fv")
    assert back.times == tr.times
    for a, b in zip(back.states, tr.states):
        np.testing.assert_array_equal(a.values, b.values)
