import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jkoentropy.energy import EnergyFunctional, quantile_potential
from jkoentropy.harness.presets import Barenblatt
from jkoentropy.jko import (JkoConfig, JkoRunError, JkoStepError, Trajectory, diagnostics_check,
                            energy_checks, entropy_dissipation_check, holder_check, jko_step,
                            max_principle_excess, max_principle_level, run, step_objective)
from jkoentropy.measure1d import GridDensity, Quantile, to_density, to_quantile, wasserstein2

PM = EnergyFunctional.constant(2.0)  # a = m/(m-1) = 2
SIN_EF = EnergyFunctional.analytic(2.0, lambda x: 2 + 0.5 * np.sin(x), lambda x: 0.5 * np.cos(x),
                                   lambda x: -0.5 * np.sin(x), x_range=(-3, 3))


def barenblatt_quantile(n=200, t=0.1):
    return to_quantile(Barenblatt(2.0).density(t, -2.0, 2.0, 4000), n)


def test_step_objective_two_point_example():
    # n = 2, one increment dG = 1, xi = n dG = 2, H = a xi^(1-m)/m = 2 * 2^-1 / 2 = 1/2, weight 1/n
    G = np.array([0.0, 1.0])
    assert step_objective(G, G, 0.1, EnergyFunctional.constant(2.0, 2.0)) == 0.25


def test_step_objective_transport_part_and_limits():
    q = barenblatt_quantile()
    F = quantile_potential(q, PM)
    assert step_objective(q, q, 1e-3, PM) == F
    shifted = q.shift(0.1)
    # transport part is (1/2 tau)(1/n) sum 0.1^2 = 0.01 / (2 tau)
    assert step_objective(shifted, q, 1e-3, PM) == pytest.approx(F + 5.0, rel=1e-12)
    assert step_objective(shifted, q, 1e12, PM) == pytest.approx(F, rel=1e-12)
    assert step_objective(np.array([0.0, 1.0, 1.0]), q.values[:3], 1.0, PM) == np.inf


def test_step_is_a_stationary_point_of_the_objective():
    q = barenblatt_quantile(60)
    cfg = JkoConfig(tau=1e-3, n_quantiles=60)
    G, gnorm, _ = jko_step(q, cfg, SIN_EF)
    assert gnorm <= cfg.inner_tol
    h = 1e-7
    g = G.values
    for i in (0, 7, 30, 59):
        e = np.zeros_like(g)
        e[i] = h
        fd = (step_objective(g + e, q, cfg.tau, SIN_EF) - step_objective(g - e, q, cfg.tau, SIN_EF)) / (2 * h)
        assert abs(fd) < 1e-6


def test_step_decreases_energy_and_satisfies_canonical_estimate():
    q = to_quantile(GridDensity.from_function(lambda x: np.clip(1 - 4 * (x - 0.3) ** 2, 0, None) ** 0.5,
                                              -1, 1.5, 2500), 200)
    cfg = JkoConfig(tau=1e-3, n_quantiles=200)
    G, _, _ = jko_step(q, cfg, SIN_EF)
    F_prev, F_new = quantile_potential(q, SIN_EF), quantile_potential(G, SIN_EF)
    assert F_new <= F_prev
    assert wasserstein2(G, q) ** 2 <= 2 * cfg.tau * (F_prev - F_new)
    assert np.all(np.diff(G.values) > 0)


def test_barenblatt_step_is_symmetric_and_spreads():
    q = barenblatt_quantile()
    G, _, _ = jko_step(q, JkoConfig(tau=1e-4, n_quantiles=200), PM)
    g = G.values
    assert np.max(np.abs(g + g[::-1])) < 1e-8
    assert g[-1] > q.values[-1] and g[0] < q.values[0]


def test_step_failure_carries_best_iterate():
    q = barenblatt_quantile()
    with pytest.raises(JkoStepError) as exc:
        jko_step(q, JkoConfig(tau=1e-2, n_quantiles=200, inner_max_iter=1), PM)
    assert exc.value.best.n == 200 and exc.value.grad_norm > 0
    with pytest.raises(JkoRunError) as exc:
        run(q, PM, JkoConfig(tau=1e-2, n_quantiles=200, t_end=0.05, inner_max_iter=1))
    assert len(exc.value.partial) == 1


def test_config_validation():
    for kw in ({"tau": 0.0}, {"tau": 1e-3, "inner_tol": 0.0}, {"tau": 1e-3, "n_quantiles": 4},
               {"tau": 1e-3, "t_end": 0.0}):
        with pytest.raises(ValueError):
            JkoConfig(**kw)
    assert JkoConfig(tau=0.03, t_end=0.1).steps == 4


@pytest.fixture(scope="module")
def bb_runs():
    q = barenblatt_quantile()
    coarse = run(q, PM, JkoConfig(tau=2e-3, n_quantiles=200, t_end=0.1))
    fine = run(q, PM, JkoConfig(tau=1e-3, n_quantiles=200, t_end=0.1))
    return q, coarse, fine


def test_run_length_mass_and_estimates(bb_runs):
    _, coarse, _ = bb_runs
    assert len(coarse) == 51 and len(coarse.per_step) == 51
    for q in coarse.states[::10]:
        assert abs(to_density(q, -3.0, 1e-3, 6000).mass - 1.0) < 1e-8
    assert all(c.passed for c in energy_checks(coarse))
    rep = diagnostics_check(coarse, PM, (-3, 3))
    assert rep.passed, rep.lines()


def test_tau_halving_consistency(bb_runs):
    q, coarse, fine = bb_runs
    F0 = quantile_potential(q, PM)
    for t in (0.02, 0.05, 0.1):
        assert wasserstein2(coarse.at(t), fine.at(t)) <= np.sqrt(2 * F0 * 2e-3)


def test_holder_and_max_principle(bb_runs):
    q, coarse, _ = bb_runs
    assert holder_check(coarse, np.linspace(0, 0.1, 41)).passed
    k = max_principle_level(q, PM)
    assert max(max_principle_excess(s, PM, k) for s in coarse.states) <= 1e-3


def test_piecewise_constant_interpolation(bb_runs):
    _, coarse, _ = bb_runs
    assert coarse.index_at(0.0) == 0
    assert coarse.index_at(1e-4) == 1
    assert coarse.index_at(2e-3) == 1
    assert coarse.index_at(2.1e-3) == 2
    assert coarse.index_at(5.0) == len(coarse) - 1


def test_single_state_diagnostics_pass():
    q = barenblatt_quantile()
    traj = run(q, PM, JkoConfig(tau=1.0, n_quantiles=200, t_end=1e-9))
    assert len(traj) == 1
    assert diagnostics_check(traj, PM, (-3, 3)).passed


def test_porous_medium_dissipation_has_no_source_term(bb_runs):
    _, coarse, _ = bb_runs
    c = entropy_dissipation_check(coarse, PM)
    assert PM.a_second_derivative_sup == 0.0
    # rhs reduces to E(rho0)
    assert f"rhs = {coarse.per_step[0].entropy:.6g}" in c.detail


def test_trajectory_save_load(tmp_path, bb_runs):
    _, coarse, _ = bb_runs
    coarse.save(tmp_path / "traj")
    back = Trajectory.load(tmp_path / "traj")
    assert back.tau == coarse.tau and back.t0 == coarse.t0
    assert back.per_step == coarse.per_step
    for a, b in zip(back.states, coarse.states):
        np.testing.assert_array_equal(a.values, b.values)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(-0.5, 0.5), st.floats(2e-4, 5e-3), st.floats(1.5, 3.0))
def test_one_step_invariants(width, center, tau, m):
    ef = EnergyFunctional.analytic(m, lambda x: 2 + 0.5 * np.sin(x), lambda x: 0.5 * np.cos(x),
                                   lambda x: -0.5 * np.sin(x), x_range=(-3, 3))
    d = GridDensity.from_function(lambda x: np.clip(1 - ((x - center) / width) ** 2, 0, None), -2, 2, 4000)
    q = to_quantile(d, 80)
    G, _, _ = jko_step(q, JkoConfig(tau=tau, n_quantiles=80), ef)
    F_prev, F_new = quantile_potential(q, ef), quantile_potential(G, ef)
    assert F_new <= F_prev
    assert wasserstein2(G, q) ** 2 <= 2 * tau * (F_prev - F_new) * (1 + 1e-8)
    assert isinstance(G, Quantile) and np.all(np.diff(G.values) > 0)
