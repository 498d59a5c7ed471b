import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jkoentropy.energy import (EnergyFunctional, GeneralAdjoint, adjoint_H, check_kappa_convexity, entropy,
                               potential, quantile_entropy, quantile_potential, second_moment)
from jkoentropy.measure1d import GridDensity, to_quantile

SIN_EF = EnergyFunctional.analytic(2.0, lambda x: 2 + np.sin(x), np.cos, lambda x: -np.sin(x))


def uniform(lo, hi, cells=1000):
    return GridDensity(lo, (hi - lo) / cells, np.full(cells, 1.0 / (hi - lo)))


def test_potential_examples():
    assert potential(uniform(0, 1), EnergyFunctional.constant(2.0, 1.0)) == pytest.approx(0.5, abs=1e-14)
    tiny = GridDensity(0.0, 1.0, np.full(1000, 1e-3))
    assert potential(tiny, EnergyFunctional.constant(2.0, 1.0)) < 1e-3
    # (1/2) int_0^pi (2 + sin x) / pi^2 dx = (pi + 1) / pi^2; midpoint error ~ h^2
    val = potential(uniform(0, np.pi, 10000), SIN_EF)
    assert val == pytest.approx((np.pi + 1) / np.pi**2, abs=1e-8)


def test_entropy_examples():
    assert entropy(uniform(0, 1)) == pytest.approx(0.0, abs=1e-14)
    assert entropy(uniform(0, 2)) == pytest.approx(-np.log(2), abs=1e-14)
    assert entropy(uniform(0, 0.5)) == pytest.approx(np.log(2), abs=1e-14)
    padded = GridDensity(0.0, 0.5, np.array([0.0, 1.0, 1.0, 0.0]))
    assert entropy(padded) == pytest.approx(0.0, abs=1e-14)


def test_second_moment_examples():
    assert second_moment(uniform(-1, 1, 20000)) == pytest.approx(1 / 3, abs=1e-8)
    assert second_moment(uniform(0, 1, 20000)) == pytest.approx(1 / 3, abs=1e-8)
    bump = GridDensity(0.7 - 5e-5, 1e-4, np.array([1e4]))
    assert second_moment(bump) == pytest.approx(0.49, abs=1e-8)


def test_quantile_functionals_on_uniform_density():
    ef = EnergyFunctional.constant(2.0, 1.0)
    q = to_quantile(uniform(0, 2), 200)
    # 199 interior increments with slope xi = 2, each weighted 1/200
    assert quantile_potential(q, ef) == pytest.approx(199 / 200 * 0.25, rel=1e-12)
    assert quantile_entropy(q) == pytest.approx(-199 / 200 * np.log(2), rel=1e-12)


def test_adjoint_examples():
    H = adjoint_H(EnergyFunctional.constant(2.0, 2.0))
    assert H.H(0.3, 0.5) == pytest.approx(2.0, rel=1e-15)
    assert SIN_EF.a(1.1) / 2 == pytest.approx(adjoint_H(SIN_EF).H(1.1, 1.0), rel=1e-15)
    with pytest.raises(ValueError):
        H.H(0.0, 0.0)
    with pytest.raises(ValueError):
        H.H_xi(0.0, -1.0)


def _fd_partials(H, x, xi, h=1e-4):
    """Central differences of H; an oracle independent of the closed-form partials."""
    f = H.H
    return {
        "H_x": (f(x + h, xi) - f(x - h, xi)) / (2 * h),
        "H_xi": (f(x, xi + h) - f(x, xi - h)) / (2 * h),
        "H_xx": (f(x + h, xi) - 2 * f(x, xi) + f(x - h, xi)) / h**2,
        "H_xixi": (f(x, xi + h) - 2 * f(x, xi) + f(x, xi - h)) / h**2,
        "H_xxi": (f(x + h, xi + h) - f(x + h, xi - h) - f(x - h, xi + h) + f(x - h, xi - h)) / (4 * h * h),
    }


def test_H_partials_at_xi_07():
    H = adjoint_H(EnergyFunctional.constant(2.0, 2.0))
    fd = _fd_partials(H, 0.0, 0.7)
    assert H.H_xixi(0.0, 0.7) == pytest.approx(fd["H_xixi"], rel=1e-6)
    assert H.H_xixi(0.0, 0.7) == pytest.approx(2 * 0.7**-3, rel=1e-14)
    assert H.H_xi(0.0, 0.7) == pytest.approx(fd["H_xi"], rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0.3, 3.0), st.floats(1.5, 4.0))
def test_adjoint_identities(x, xi, m):
    ef = EnergyFunctional.analytic(m, lambda z: 2 + np.sin(z), np.cos, lambda z: -np.sin(z), x_range=(-4, 4))
    H = adjoint_H(ef)
    fd = _fd_partials(H, x, xi)
    for name, approx in fd.items():
        exact = getattr(H, name)(x, xi)
        scale = max(abs(exact), abs(H.H(x, xi)))
        assert abs(approx - exact) <= 1e-6 * scale, name
    # H_x = xi F_x(x, 1/xi) with F = a eta^m / m
    assert H.H_x(x, xi) == pytest.approx(xi * np.cos(x) * xi**-m / m, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 20.0), st.floats(1.2, 4.0))
def test_growth_condition_equivalence(x, xi, m):
    # xi^2 H_xixi(x, xi) = eta F_etaeta(x, eta) at eta = 1/xi
    H = adjoint_H(EnergyFunctional.analytic(m, lambda z: 2 + np.sin(z), np.cos, lambda z: -np.sin(z), x_range=(-4, 4)))
    eta = 1 / xi
    assert xi**2 * H.H_xixi(x, xi) == pytest.approx(eta * (2 + np.sin(x)) * (m - 1) * eta ** (m - 2), rel=1e-12)


def test_potential_is_homogeneous_in_a():
    rho = GridDensity.from_function(lambda x: np.exp(-x * x), -4, 4, 400)
    assert potential(rho, SIN_EF.scaled(2.0)) == 2 * potential(rho, SIN_EF)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(1.0, 3.0), st.floats(1.5, 4.0))
def test_potential_decreases_under_spreading(L, stretch, m):
    ef = EnergyFunctional.constant(m, 1.5)
    small, large = potential(uniform(0, L, 100), ef), potential(uniform(0, L * stretch, 100), ef)
    assert small == pytest.approx(1.5 * L ** (1 - m) / m, rel=1e-12)
    if stretch > 1.0 + 1e-9:
        assert large < small


def test_certificate_constant_a():
    cert = check_kappa_convexity(EnergyFunctional.constant(2.0, 2.0), (-5, 5))
    assert cert.kappa == 0.0
    assert cert.witness is None
    assert np.min(cert.min_eigenvalue_map) >= -1e-12
    assert cert.verdict.startswith("CERTIFIED")


def test_certificate_refutes_sin_coefficient(tmp_path):
    cert = check_kappa_convexity(SIN_EF, (-5, 5))
    assert cert.kappa is None
    x, xi = cert.witness
    assert -np.sin(x) < 0 and xi == 1e-3
    assert "not geodesic lambda-convexity" in cert.verdict
    cert.to_csv(tmp_path / "c.csv")
    cert.write_verdict(tmp_path / "c.txt")
    assert np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1).shape == (201 * 121, 3)
    assert (tmp_path / "c.txt").read_text().startswith("NONE")


def test_certificate_general_integrand_has_finite_kappa():
    # F = nu eta log eta + w(x) eta gives H = -nu log xi + w(x), so the Schur complement is w''
    nu = 0.1
    w, w1, w2 = np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)
    adj = GeneralAdjoint(
        lambda x, e: nu * e * np.log(e) + w(x) * e,
        lambda x, e: w1(x) * e,
        lambda x, e: nu * (np.log(e) + 1) + w(x),
        lambda x, e: w2(x) * e,
        lambda x, e: w1(x) + 0 * e,
        lambda x, e: nu / e + 0 * x,
    )
    cert = check_kappa_convexity(adj, (-1, 1))
    assert cert.kappa == pytest.approx(-1.0, abs=1e-10)
    assert np.min(cert.min_eigenvalue_map) >= -1e-12
