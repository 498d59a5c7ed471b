"""Coordinate change between the convection-diffusion equation in ``u(t, y)``
and the Wasserstein gradient flow of ``(1/m) int a rho^m`` in ``rho(t, x)``.

Construction, for a convection coefficient ``b`` and exponent ``m > 1``::

    alpha(y) = alpha0 * exp(-(m-1)/(2m) * int_0^y b)
    T'(x)    = alpha(T(x)),   T(0) = 0
    a(x)     = m/(m-1) * alpha(T(x))**-(m+1)
    rho(x)   = T'(x) * u(T(x))

and back: ``T(x) = int_0^x ((m-1)/m * a)**(-1/(m+1))`` and
``b(T(x)) = 2m/(m^2-1) * (log a)'(x) / T'(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erf

from .measure1d import GridDensity, Quantile, cdf
from .tabulate import Tabulated

DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class ConvectionCoefficient:
    b: object
    b_prime: object
    l1_norm_bound: float
    lipschitz_bound: float
    name: str = "custom"

    def check(self, y_range: tuple[float, float] = (-60.0, 60.0), samples: int = 240001) -> None:
        """Sample the closure and verify the declared bounds; raise ValueError otherwise."""
        y = np.linspace(*y_range, samples)
        bv = np.asarray(self.b(y), dtype=float)
        bp = np.asarray(self.b_prime(y), dtype=float)
        if not (np.all(np.isfinite(bv)) and np.all(np.isfinite(bp))):
            raise ValueError(f"b ({self.name}) is not finite on {y_range}")
        L = self.lipschitz_bound * (1 + 1e-9)
        if np.max(np.abs(bv)) > L:
            raise ValueError(f"sup|b| = {np.max(np.abs(bv)):.6g} exceeds declared bound {self.lipschitz_bound}")
        if np.max(np.abs(bp)) > L:
            raise ValueError(f"sup|b'| = {np.max(np.abs(bp)):.6g} exceeds declared bound {self.lipschitz_bound}")
        l1 = trapezoid(np.abs(bv), y)
        if l1 > self.l1_norm_bound * (1 + 1e-6) + 1e-12:
            raise ValueError(f"int|b| = {l1:.6g} exceeds declared bound {self.l1_norm_bound}")

    @property
    def sup_b(self) -> float:
        return self.lipschitz_bound


def zero_b() -> ConvectionCoefficient:
    z = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    return ConvectionCoefficient(z, z, 0.0, 0.0, "zero")


def gaussian_b(amplitude: float = 0.5, width: float = 1.0) -> ConvectionCoefficient:
    """``b(y) = amplitude * exp(-(y/width)^2)``."""
    A, w = float(amplitude), float(width)
    b = lambda y: A * np.exp(-(np.asarray(y, dtype=float) / w) ** 2)
    bp = lambda y: -2.0 * np.asarray(y, dtype=float) / w**2 * b(y)
    lip = max(abs(A), abs(A) * np.sqrt(2.0) / w * np.exp(-0.5))
    return ConvectionCoefficient(b, bp, abs(A) * w * np.sqrt(np.pi), lip, "gaussian")


def smoothed_indicator_b(lo: float = 0.0, hi: float = 1.0, eps: float = 0.05,
                         amplitude: float = 1.0) -> ConvectionCoefficient:
    """Indicator of [lo, hi] smoothed by erf; its integral over R is exactly ``amplitude*(hi-lo)``."""
    A = float(amplitude)

    def b(y):
        y = np.asarray(y, dtype=float)
        return 0.5 * A * (erf((y - lo) / eps) - erf((y - hi) / eps))

    def bp(y):
        y = np.asarray(y, dtype=float)
        return A / (eps * np.sqrt(np.pi)) * (np.exp(-((y - lo) / eps) ** 2) - np.exp(-((y - hi) / eps) ** 2))

    lip = max(abs(A), abs(A) / (eps * np.sqrt(np.pi)))
    return ConvectionCoefficient(b, bp, abs(A) * (hi - lo), lip, "smoothed_indicator")


def table_b(y, values, l1_norm_bound: float, lipschitz_bound: float) -> ConvectionCoefficient:
    """Convection coefficient from a table; vanishes outside the tabulated range."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size != v.size or y.size < 4 or np.any(np.diff(y) <= 0):
        raise ValueError("b table needs increasing abscissae and matching values")
    slope = np.gradient(v, y, edge_order=2)
    b = lambda s: np.interp(s, y, v, left=0.0, right=0.0)
    bp = lambda s: np.interp(s, y, slope, left=0.0, right=0.0)
    return ConvectionCoefficient(b, bp, float(l1_norm_bound), float(lipschitz_bound), "table")


def preset_b(name: str, **params) -> ConvectionCoefficient:
    if name == "zero":
        return zero_b()
    if name == "gaussian":
        return gaussian_b(**params)
    if name == "smoothed_indicator":
        return smoothed_indicator_b(**params)
    if name == "constant_nonzero":
        raise ValueError(
            "b_preset 'constant_nonzero' is not supported: for constant b != 0 the "
            "coordinate map T blows up at finite negative x, and b must be integrable"
        )
    raise ValueError(f"unknown b preset {name!r}")


def _gauss_cells(f, left: np.ndarray, h: float, order: int) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pts = left[:, None] + 0.5 * h * (nodes[None, :] + 1.0)
    return 0.5 * h * (np.asarray(f(pts), dtype=float) * weights).sum(axis=1)


def alpha_from_b(b: ConvectionCoefficient, m: float, alpha0: float = 1.0,
                 y_range: tuple[float, float] = (-10.0, 10.0), h: float = DEFAULT_STEP,
                 quad_tol: float = 1e-10) -> Tabulated:
    """Tabulate ``alpha0 * exp(-(m-1)/(2m) * int_0^y b)``."""
    if not m > 1:
        raise ValueError("m must exceed 1")
    if not alpha0 > 0:
        raise ValueError("alpha0 must be positive")
    k0 = int(np.floor(y_range[0] / h + 1e-9))
    k1 = int(np.ceil(y_range[1] / h - 1e-9))
    y = np.arange(k0, k1 + 1) * h
    left = y[:-1]
    cells = _gauss_cells(b.b, left, h, 5)
    check = _gauss_cells(b.b, left, h, 3)
    err = np.max(np.abs(cells - check)) if cells.size else 0.0
    if not np.all(np.isfinite(cells)) or err > quad_tol:
        raise ValueError(f"quadrature of b failed: per-cell discrepancy {err:.3e} > {quad_tol:.1e}")
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    cum -= cum[-k0]  # node index -k0 is y = 0
    alpha = alpha0 * np.exp(-(m - 1) / (2 * m) * cum)
    return Tabulated(k0 * h, h, alpha)


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_T(alpha: Tabulated, window: tuple[float, float], tol: float = 1e-12,
            h: float = DEFAULT_STEP) -> Tabulated:
    """Integrate ``T' = alpha(T)``, ``T(0) = 0`` over ``window`` with classical RK4.

    Each step is checked against two half steps; a local discrepancy above
    ``tol`` raises.
    """
    lo, hi = window
    if not lo < 0 < hi:
        raise ValueError("the x-window must contain 0 in its interior")
    if np.min(alpha.values) <= 0:
        raise ValueError("alpha must be positive")
    k_lo = int(np.ceil(-lo / h - 1e-9))
    k_hi = int(np.ceil(hi / h - 1e-9))
    y_lo, y_hi = alpha.lo, alpha.hi

    def rhs(T):
        if not y_lo <= T <= y_hi:
            raise ValueError(
                f"y-range exhausted: T reached {T:.6g} outside the alpha table "
                f"[{y_lo:.4g}, {y_hi:.4g}]; widen the alpha tabulation"
            )
        return alpha.scalar(T)

    def march(step, count):
        out = [0.0]
        T = 0.0
        for s in range(count):
            full = _rk4(rhs, T, step)
            half = _rk4(rhs, _rk4(rhs, T, 0.5 * step), 0.5 * step)
            if abs(full - half) > tol:
                raise ValueError(f"RK4 local error {abs(full - half):.3e} exceeds tol {tol:.1e} "
                                 f"at x = {(s + 1) * step:.6g}")
            T = half
            out.append(T)
        return out

    fwd = march(h, k_hi)
    bwd = march(-h, k_lo)
    values = np.array(bwd[:0:-1] + fwd)
    return Tabulated(-k_lo * h, h, values)


def a_from_alpha(alpha: Tabulated, T: Tabulated, m: float) -> Tabulated:
    """``a(x) = m/(m-1) * alpha(T(x))**-(m+1)`` on the grid of ``T``."""
    return Tabulated(T.x0, T.h, m / (m - 1) * alpha(T.values) ** (-(m + 1)))


def T_from_a(a: Tabulated, m: float) -> Tabulated:
    """``T(x) = int_0^x ((m-1)/m * a)**(-1/(m+1))`` by end-corrected trapezoid sums."""
    if np.min(a.values) <= 0:
        raise ValueError("a must be positive")
    f = ((m - 1) / m * a.values) ** (-1.0 / (m + 1))
    fp = np.gradient(f, a.h, edge_order=2)
    h = a.h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])
    cum = cum - h * h / 12.0 * (fp - fp[0])
    i0 = int(round(-a.x0 / h))
    if not (0 <= i0 < a.size and abs(a.x0 + i0 * h) < 1e-9 * h):
        raise ValueError("x = 0 must be a tabulation node")
    return Tabulated(a.x0, h, cum - cum[i0])


def b_from_a(a: Tabulated, T: Tabulated, m: float) -> Tabulated:
    """Recover ``b o T`` on the x-grid: ``2m/(m^2-1) * (log a)'(x) / T'(x)``."""
    if a.size != T.size or a.x0 != T.x0 or a.h != T.h:
        raise ValueError("a and T must share one tabulation grid")
    dlog = np.gradient(np.log(a.values), a.h, edge_order=2)
    dT = np.gradient(T.values, T.h, edge_order=2)
    return Tabulated(a.x0, a.h, 2 * m / (m * m - 1) * dlog / dT)


@dataclass(frozen=True)
class TransformedCoefficients:
    m: float
    alpha0: float
    alpha: Tabulated
    T: Tabulated
    a: Tabulated
    a_lower: float

    @property
    def x_window(self) -> tuple[float, float]:
        return self.T.lo, self.T.hi

    @property
    def y_window(self) -> tuple[float, float]:
        return float(self.T.values[0]), float(self.T.values[-1])

    def T_inverse(self, y):
        return self.T.inverse(y)

    def a_second_derivative_sup(self) -> float:
        return float(np.max(self.a._d2.values))

    def check(self) -> None:
        if not np.all(self.a.values >= self.a_lower) or not self.a_lower > 0:
            raise ValueError("a is not bounded below by a positive constant")
        if np.any(np.diff(self.T.values) <= 0):
            raise ValueError("T is not strictly increasing")
        if not np.all(np.isfinite(self.a._d2.values)):
            raise ValueError("a'' is not bounded on the window")


def build_coefficients(b: ConvectionCoefficient, m: float, alpha0: float = 1.0,
                       y_window: tuple[float, float] = (-4.0, 4.0),
                       h: float = DEFAULT_STEP, tol: float = 1e-12) -> TransformedCoefficients:
    """alpha, T and a for ``b``, with an x-window whose image under T covers ``y_window``."""
    c = (m - 1) / (2 * m) * b.l1_norm_bound
    a_min, a_max = alpha0 * np.exp(-c), alpha0 * np.exp(c)
    ylo, yhi = y_window
    x_window = (ylo / a_min - 2 * h, yhi / a_min + 2 * h)
    # T' <= a_max, so the alpha table must reach a_max times the x-window
    alpha = alpha_from_b(b, m, alpha0, (x_window[0] * a_max * 1.01 - 8 * h,
                                        x_window[1] * a_max * 1.01 + 8 * h), h)
    T = solve_T(alpha, x_window, tol=tol, h=h)
    a = a_from_alpha(alpha, T, m)
    tc = TransformedCoefficients(m, alpha0, alpha, T, a, float(np.min(a.values)))
    tc.check()
    return tc


def rescale(u: GridDensity, T: Tabulated, x_min: float, dx: float, cells: int) -> GridDensity:
    """Cell averages of ``rho(x) = T'(x) u(T(x))`` on the given x-grid.

    Exactly mass preserving on the discrete level: the x-cell average is the
    u-mass between the images of its edges.
    """
    edges = x_min + dx * np.arange(cells + 1)
    if not T.contains(edges, slack=1e-9):
        raise ValueError("x-grid leaves the tabulated window of T")
    U = cdf(u)(T(edges))
    _check_cover(U, "u", "x")
    return GridDensity(x_min, dx, np.clip(np.diff(U) / dx, 0.0, None))


def inverse_rescale(rho: GridDensity, T: Tabulated, y_min: float, dy: float, cells: int) -> GridDensity:
    """Cell averages of ``u(y) = rho(T^-1 y) / T'(T^-1 y)`` on the given y-grid."""
    edges = y_min + dy * np.arange(cells + 1)
    U = cdf(rho)(T.inverse(edges))
    _check_cover(U, "rho", "y")
    return GridDensity(y_min, dy, np.clip(np.diff(U) / dy, 0.0, None))


def _check_cover(U, what, grid):
    if U[-1] - U[0] < 1.0 - 1e-8:
        raise ValueError(f"support of {what} escapes the {grid}-window "
                         f"(mass {1 - (U[-1] - U[0]):.3e} outside)")


def quantile_to_y(q: Quantile, T: Tabulated) -> Quantile:
    """Quantile of ``u`` from the quantile of ``rho``: u is the pushforward of rho under T."""
    if not T.contains(q.values):
        raise ValueError("quantile escapes the tabulated window of T")
    return q.map(T)


def quantile_to_x(q: Quantile, T: Tabulated) -> Quantile:
    return q.map(T.inverse)


__all__ = [
    "ConvectionCoefficient", "TransformedCoefficients", "zero_b", "gaussian_b",
    "smoothed_indicator_b", "table_b", "preset_b", "alpha_from_b", "solve_T",
    "a_from_alpha", "T_from_a", "b_from_a", "build_coefficients", "rescale",
    "inverse_rescale", "quantile_to_y", "quantile_to_x",
]
