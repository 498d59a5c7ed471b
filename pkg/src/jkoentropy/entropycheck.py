"""Kruzkov-type entropy inequality with a Carrillo dissipation term, evaluated
on computed space-time data ``u(t_j, y_i)``.

For a level ``k >= 0`` and a test function ``theta(t) phi(y) >= 0``::

    lhs      = int int |u - k| phi theta'
    rhs_flux = int int sgn(u - k) ([(u^m)_y + b (u^m - k^m)] phi_y - b_y k^m phi) theta
    D        = limsup_{eps -> 0} int int sgn_eps'(u^m - k^m) [(u^m)_y]^2 phi theta

and an entropy solution satisfies ``lhs - rhs_flux - D >= 0``.  Since
``sgn(u - k) (u^m)_y = d/dy |u^m - k^m|``, the diffusive part of the flux is
evaluated as ``-int |u^m - k^m| phi_yy``, which needs no derivative of the
data.  Space integrals use the midpoint rule on the data grid, time
integrals the trapezoid rule over the snapshots.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, trapezoid

from .transform import ConvectionCoefficient


# -- mollifier ----------------------------------------------------------------

def _bump(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _mollifier_tables(samples: int = 40001):
    Z = quad(lambda s: float(np.exp(-1.0 / (1.0 - s * s))), -1, 1, epsabs=1e-14, epsrel=1e-13)[0]
    s = np.linspace(-1, 1, samples)
    d = _bump(s) / Z
    stp = cumulative_trapezoid(d, s, initial=0.0)
    stp /= stp[-1]
    heav = cumulative_trapezoid(stp, s, initial=0.0)
    return Z, s, stp, heav


@dataclass(frozen=True)
class Mollifier:
    """``delta_eps(y) = delta_1(y/eps)/eps`` with ``delta_1 = exp(-1/(1-y^2))/Z`` on (-1, 1)."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def Z(self) -> float:
        return _mollifier_tables()[0]

    def delta(self, y):
        return _bump(np.asarray(y, dtype=float) / self.eps) / (self.Z * self.eps)

    def stp(self, y):
        """Mollified unit step; derivative ``delta_eps``."""
        _, s, stp, _ = _mollifier_tables()
        return np.interp(np.asarray(y, dtype=float) / self.eps, s, stp, left=0.0, right=1.0)

    def sgn(self, y):
        """Mollified sign; derivative ``2 delta_eps``."""
        return 2.0 * self.stp(y) - 1.0

    def heav(self, y):
        """Mollified positive part ``(y)_+ * delta_eps``."""
        _, s, _, heav = _mollifier_tables()
        z = np.asarray(y, dtype=float) / self.eps
        inner = np.interp(z, s, heav)
        # delta_1 is even, so heav_1(z) = z for z >= 1
        return self.eps * np.where(z <= -1, 0.0, np.where(z >= 1, z, inner))

    def abs(self, y):
        return 2.0 * self.heav(y) - np.asarray(y, dtype=float)


def mollifier_eval(eps: float, y):
    return Mollifier(eps).delta(y)


# -- test functions -----------------------------------------------------------

def _bump_derivatives(s):
    """``B(s) = exp(-1/(1-s^2))`` and its first two derivatives, zero outside (-1, 1)."""
    s = np.asarray(s, dtype=float)
    B = np.zeros_like(s)
    B1 = np.zeros_like(s)
    B2 = np.zeros_like(s)
    i = np.abs(s) < 1
    x = s[i]
    w = 1.0 - x * x
    e = np.exp(-1.0 / w)
    g = -2 * x / w**2              # d/ds of -1/w
    g1 = -2 / w**2 - 8 * x * x / w**3
    B[i] = e
    B1[i] = e * g
    B2[i] = e * (g * g + g1)
    return B, B1, B2


@dataclass(frozen=True)
class TestFunction:
    """``theta(t) phi(y)`` with ``theta``, ``phi`` scaled bumps of given center and half-width."""

    __test__ = False  # keep pytest from collecting this class

    t_center: float
    t_halfwidth: float
    y_center: float
    y_halfwidth: float
    test_id: str = ""

    def __post_init__(self):
        if self.t_center - self.t_halfwidth <= 0:
            raise ValueError("theta must be supported in t > 0")

    @property
    def t_support(self):
        return self.t_center - self.t_halfwidth, self.t_center + self.t_halfwidth

    @property
    def y_support(self):
        return self.y_center - self.y_halfwidth, self.y_center + self.y_halfwidth

    def theta(self, t):
        return _bump_derivatives((np.asarray(t) - self.t_center) / self.t_halfwidth)[0]

    def theta_t(self, t):
        return _bump_derivatives((np.asarray(t) - self.t_center) / self.t_halfwidth)[1] / self.t_halfwidth

    def phi(self, y):
        return _bump_derivatives((np.asarray(y) - self.y_center) / self.y_halfwidth)[0]

    def phi_y(self, y):
        return _bump_derivatives((np.asarray(y) - self.y_center) / self.y_halfwidth)[1] / self.y_halfwidth

    def phi_yy(self, y):
        return _bump_derivatives((np.asarray(y) - self.y_center) / self.y_halfwidth)[2] / self.y_halfwidth**2


def default_test_bank(y_range: tuple[float, float], t_range: tuple[float, float], count: int = 8,
                      seed: int = 0) -> list[TestFunction]:
    """``count`` bumps with seeded random centers and widths inside the given windows.

    Half-widths are drawn between 10% and 30% of each window's length and
    centers so that supports stay strictly inside.
    """
    rng = np.random.default_rng(seed)
    ylo, yhi = y_range
    tlo, thi = t_range
    Ly, Lt = yhi - ylo, thi - tlo
    bank = []
    for j in range(count):
        wy = rng.uniform(0.1, 0.3) * Ly
        wt = rng.uniform(0.1, 0.3) * Lt
        cy = rng.uniform(ylo + wy, yhi - wy)
        ct = rng.uniform(tlo + wt, thi - wt)
        bank.append(TestFunction(float(ct), float(wt), float(cy), float(wy), f"T{j}"))
    return bank


def default_k_grid(sup_u: float, count: int = 16) -> np.ndarray:
    """``count`` levels spanning (0, 1.2 sup u]."""
    return 1.2 * sup_u * np.arange(1, count + 1) / count


# -- residuals ----------------------------------------------------------------

@dataclass
class SpaceTimeData:
    """Snapshots ``u(t_j, .)`` on one uniform y-grid."""

    times: np.ndarray
    y: np.ndarray
    dy: float
    u: np.ndarray  # shape (len(times), len(y))

    @classmethod
    def from_states(cls, times, states) -> "SpaceTimeData":
        states = list(states)
        first = states[0]
        for s in states[1:]:
            if not s.same_grid(first):
                raise ValueError("snapshots live on different grids")
        t = np.asarray(times, dtype=float)
        if t.size != len(states) or np.any(np.diff(t) <= 0):
            raise ValueError("snapshot times must be increasing and match the states")
        return cls(t, first.centers, first.dx, np.array([s.values for s in states]))

    @property
    def window(self):
        return self.y[0] - 0.5 * self.dy, self.y[-1] + 0.5 * self.dy


@dataclass
class EntropyEntry:
    k: float
    test_id: str
    lhs: float
    rhs_flux: float
    dissipation_estimate: float
    residual: float
    scale: float
    eps: tuple = ()
    dissipation_per_eps: tuple = ()


@dataclass
class EntropyReport:
    entries: list = field(default_factory=list)

    @property
    def min_residual(self) -> float:
        return min((e.residual for e in self.entries), default=np.inf)

    @property
    def scale(self) -> float:
        """Largest time-derivative term ``int int |u - k| phi |theta'|`` over entries."""
        return max((e.scale for e in self.entries), default=0.0)

    @property
    def worst_ratio(self) -> float:
        """``min residual / scale`` over entries, each against its own time-derivative term."""
        return min((e.residual / e.scale if e.scale > 0 else (0.0 if e.residual >= 0 else -np.inf)
                    for e in self.entries), default=np.inf)

    def passed(self, rel_tol: float = 5e-3) -> bool:
        return self.worst_ratio >= -rel_tol

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "test_id", "eps_factor", "lhs", "rhs_flux", "dissipation", "residual"])
            for e in self.entries:
                for eps, d in zip(e.eps, e.dissipation_per_eps):
                    w.writerow([repr(e.k), e.test_id, repr(eps), repr(e.lhs), repr(e.rhs_flux), repr(d),
                                repr(e.lhs - e.rhs_flux - d)])
            w.writerow(["summary", "min_residual", repr(self.min_residual), "worst_ratio", repr(self.worst_ratio),
                        "scale", repr(self.scale)])


DEFAULT_EPS_FACTORS = (4.0, 2.0, 1.0)


def _dissipation_density(um: np.ndarray, km: float, dy: float, factor: float) -> np.ndarray:
    """``int 2 delta_eps(v - c) v_y^2 dy`` over each interval between neighbouring data points.

    ``v = u^m`` is taken linear between data points, where the integral is
    exactly ``2 |v_y| |stp_eps(v_(i+1) - c) - stp_eps(v_i - c)|``.  The width
    ``eps = factor * |v_(i+1) - v_i|`` follows the local change of ``v``
    across one cell, so a crossing is smeared over about ``2 factor`` cells
    at any slope.  As ``factor -> 0`` the sum tends to ``2 |v_y|`` at each
    crossing of the level, the limit the dissipation term asks for.
    """
    _, s, stp, _ = _mollifier_tables()
    dv = np.diff(um, axis=-1)
    floor = 1e-12 * max(float(np.max(np.abs(dv))), 1e-300)
    eps = factor * np.maximum(np.abs(dv), floor)
    with np.errstate(over="ignore"):  # +-inf lands on the clamped ends of the table
        lo = np.interp((um[..., :-1] - km) / eps, s, stp, left=0.0, right=1.0)
        hi = np.interp((um[..., 1:] - km) / eps, s, stp, left=0.0, right=1.0)
    return 2.0 * np.abs(dv) / dy * np.abs(hi - lo)


class _Prepared:
    def __init__(self, data: SpaceTimeData, b: ConvectionCoefficient, m: float):
        self.data, self.m = data, m
        self.um = data.u**m
        self.b = np.asarray(b.b(data.y), dtype=float)
        self.by = np.asarray(b.b_prime(data.y), dtype=float)

    def integrate(self, field_, theta, phi):
        d = self.data
        return float(trapezoid((field_ @ phi) * d.dy * theta, d.times))


def _check_support(tf: TestFunction, data: SpaceTimeData):
    ylo, yhi = data.window
    a, b = tf.y_support
    if a <= ylo or b >= yhi:
        raise ValueError(f"test function {tf.test_id!r} leaves the data window in y")
    s, e = tf.t_support
    if s < data.times[0] - 1e-12 or e > data.times[-1] + 1e-12:
        raise ValueError(f"test function {tf.test_id!r} leaves the data window in t")


def _entry(P: _Prepared, k: float, tf: TestFunction, eps_sequence) -> EntropyEntry:
    d = P.data
    u, um = d.u, P.um
    km = k**P.m
    sg = np.sign(u - k)
    th, tht = tf.theta(d.times), tf.theta_t(d.times)
    phi, phiy, phiyy = tf.phi(d.y), tf.phi_y(d.y), tf.phi_yy(d.y)
    A = np.abs(u - k)
    lhs = P.integrate(A, tht, phi)
    scale = P.integrate(A, np.abs(tht), phi)
    diff = np.abs(um - km)
    flux = (-P.integrate(diff, th, phiyy)
            + P.integrate(sg * (P.b * (um - km)), th, phiy)
            - P.integrate(sg * (P.by * km), th, phi))
    phi_mid = tf.phi(0.5 * (d.y[1:] + d.y[:-1]))
    diss = []
    for f in eps_sequence:
        per_interval = _dissipation_density(um, km, d.dy, f)
        diss.append(float(trapezoid((per_interval @ phi_mid) * th, d.times)))
    D = max(diss) if diss else 0.0
    return EntropyEntry(float(k), tf.test_id, lhs, flux, D, lhs - flux - D, scale,
                        tuple(eps_sequence), tuple(diss))


def entropy_residual(data: SpaceTimeData, k: float, tf: TestFunction, b: ConvectionCoefficient, m: float,
                     eps_sequence=None) -> EntropyEntry:
    if k < 0:
        raise ValueError("entropy levels must be nonnegative")
    _check_support(tf, data)
    eps_sequence = DEFAULT_EPS_FACTORS if eps_sequence is None else tuple(eps_sequence)
    return _entry(_Prepared(data, b, m), k, tf, eps_sequence)


def sweep(data: SpaceTimeData, b: ConvectionCoefficient, m: float, k_grid, test_bank,
          eps_sequence=None) -> EntropyReport:
    for tf in test_bank:
        _check_support(tf, data)
    eps_sequence = DEFAULT_EPS_FACTORS if eps_sequence is None else tuple(eps_sequence)
    P = _Prepared(data, b, m)
    return EntropyReport([_entry(P, float(k), tf, eps_sequence) for k in k_grid for tf in test_bank])


def weak_form_residual(data: SpaceTimeData, tf: TestFunction, b: ConvectionCoefficient, m: float) -> float:
    """``int int u theta' phi + int int (u^m phi_yy - b u^m phi_y) theta``; zero for weak solutions."""
    P = _Prepared(data, b, m)
    th, tht = tf.theta(data.times), tf.theta_t(data.times)
    y = data.y
    return (P.integrate(data.u, tht, tf.phi(y)) + P.integrate(P.um, th, tf.phi_yy(y))
            - P.integrate(P.b * P.um, th, tf.phi_y(y)))


__all__ = [
    "Mollifier", "mollifier_eval", "TestFunction", "default_test_bank", "default_k_grid",
    "SpaceTimeData", "EntropyEntry", "EntropyReport", "entropy_residual",
    "sweep", "weak_form_residual",
]
