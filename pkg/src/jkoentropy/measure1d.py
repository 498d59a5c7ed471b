"""Probability densities on the line, in grid and in quantile form.

A :class:`GridDensity` stores cell averages on a uniform grid.  A
:class:`Quantile` stores the pseudo-inverse distribution function sampled at
the midpoints ``(i + 1/2)/n`` of a uniform partition of (0, 1); in that
representation the L2-Wasserstein distance is a plain Euclidean distance.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MASS_TOL = 1e-10


class AtomWarning(UserWarning):
    """A quantile has flat segments, i.e. the measure it encodes has atoms."""


class WindowOverflowWarning(UserWarning):
    """Mass sits at or beyond the edge of the spatial window."""


@dataclass(frozen=True)
class GridDensity:
    x_min: float
    dx: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1D array")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f, x_min: float, x_max: float, cells: int,
                      subsamples: int = 8, normalize: bool = True) -> "GridDensity":
        """Cell averages of ``f`` by composite Gauss-Legendre quadrature per cell."""
        dx = (x_max - x_min) / cells
        nodes, weights = np.polynomial.legendre.leggauss(subsamples)
        left = x_min + dx * np.arange(cells)
        pts = left[:, None] + 0.5 * dx * (nodes[None, :] + 1.0)
        vals = np.clip(np.asarray(f(pts), dtype=float), 0.0, None)
        avg = 0.5 * (vals * weights[None, :]).sum(axis=1)
        if normalize:
            mass = avg.sum() * dx
            if mass <= 0:
                raise ValueError("function has no mass on the window")
            avg = avg / mass
        return cls(x_min, dx, avg)

    @property
    def cells(self) -> int:
        return self.values.size

    @property
    def x_max(self) -> float:
        return self.x_min + self.dx * self.cells

    @cached_property
    def edges(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.cells + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.cells) + 0.5)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.dx)

    def second_moment(self) -> float:
        return float(np.sum(self.centers**2 * self.values) * self.dx)

    def check_unit_mass(self, tol: float = MASS_TOL) -> None:
        if abs(self.mass - 1.0) > tol:
            raise ValueError(f"density has mass {self.mass:.15g}, expected 1")

    def same_grid(self, other: "GridDensity") -> bool:
        return (self.cells == other.cells
                and np.isclose(self.x_min, other.x_min, rtol=0, atol=1e-12 * max(1.0, abs(self.x_min)))
                and np.isclose(self.dx, other.dx, rtol=1e-12, atol=0))

    def with_values(self, values) -> "GridDensity":
        return GridDensity(self.x_min, self.dx, values)


@dataclass(frozen=True)
class Quantile:
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise ValueError("quantile values must be a non-empty 1D array")
        if not np.all(np.isfinite(g)):
            raise ValueError("quantile values must be finite")
        if np.any(np.diff(g) < 0):
            raise ValueError("quantile values must be nondecreasing")
        g.setflags(write=False)
        object.__setattr__(self, "values", g)

    @property
    def n(self) -> int:
        return self.values.size

    @cached_property
    def omega(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def has_atoms(self) -> bool:
        return bool(np.any(np.diff(self.values) <= 0))

    def shift(self, c: float) -> "Quantile":
        return Quantile(self.values + c)

    def map(self, f) -> "Quantile":
        """Quantile of the pushforward under a nondecreasing map ``f``."""
        return Quantile(np.asarray(f(self.values), dtype=float))

    def second_moment(self) -> float:
        return float(np.mean(self.values**2))

    def extended_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes (G, omega) of the piecewise-linear quantile including omega = 0, 1.

        The end cells of width 1/(2n) carry the slope of the adjacent increment.
        """
        g = self.values
        if self.n < 2:
            raise ValueError("need at least two quantile nodes")
        d0 = g[1] - g[0]
        d1 = g[-1] - g[-2]
        G = np.concatenate([[g[0] - 0.5 * d0], g, [g[-1] + 0.5 * d1]])
        w = np.concatenate([[0.0], self.omega, [1.0]])
        return G, w


def cdf(d: GridDensity):
    """Piecewise-linear distribution function ``U(x) = mu((-inf, x))`` of a grid density."""
    cum = np.concatenate([[0.0], np.cumsum(d.values) * d.dx])
    cum /= cum[-1]
    edges = d.edges

    def U(x):
        out = np.interp(x, edges, cum, left=0.0, right=1.0)
        return out if np.ndim(out) else float(out)

    return U


def to_quantile(d: GridDensity, n: int) -> Quantile:
    """Sample ``G(w) = sup{x : U(x) <= w}`` at ``w_i = (i + 1/2)/n``.

    The cumulative mass table is searched by bisection; inside the selected
    cell the linear CDF is inverted exactly.  Taking the right-most cell with
    ``U <= w`` implements the supremum, so flat stretches of ``U`` are jumped.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    total = d.values.sum() * d.dx
    if not total > 0:
        raise ValueError("cannot take the quantile of a zero-mass density")
    cum = np.concatenate([[0.0], np.cumsum(d.values) * d.dx]) / total
    w = (np.arange(n) + 0.5) / n
    k = np.searchsorted(cum, w, side="right")
    k = np.clip(k, 1, d.cells)
    lo, hi = cum[k - 1], cum[k]
    frac = (w - lo) / (hi - lo)
    x = d.edges[k - 1] + frac * d.dx
    # guard against rounding producing a tiny decrease
    return Quantile(np.maximum.accumulate(x))


def quantile_cdf(q: Quantile):
    """Distribution function of the piecewise-linear quantile reconstruction."""
    G, w = q.extended_nodes()

    def U(x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(G, x, side="right")
        out = np.empty_like(x)
        below = k == 0
        above = k == G.size
        mid = ~(below | above)
        km = k[mid]
        g0, g1 = G[km - 1], G[km]
        out[mid] = w[km - 1] + (w[km] - w[km - 1]) * (x[mid] - g0) / (g1 - g0)
        out[below] = 0.0
        out[above] = 1.0
        return out

    return U


def to_density(q: Quantile, x_min: float, dx: float, cells: int) -> GridDensity:
    """Cell averages of the density whose quantile is the piecewise-linear ``q``.

    Between consecutive nodes the density equals ``1/(n * dG)``.  Flat
    increments put an atom into a single cell; that is reported with an
    :class:`AtomWarning`.  Mass leaving the window is reported with a
    :class:`WindowOverflowWarning`.
    """
    if q.has_atoms():
        warnings.warn("quantile has flat segments; atoms are lumped into single cells",
                      AtomWarning, stacklevel=2)
    edges = x_min + dx * np.arange(cells + 1)
    U = quantile_cdf(q)(edges)
    vals = np.diff(U) / dx
    inside = U[-1] - U[0]
    if inside < 1.0 - 1e-8:
        warnings.warn(f"mass {1.0 - inside:.3e} lies outside the window "
                      f"[{edges[0]:.4g}, {edges[-1]:.4g}]", WindowOverflowWarning, stacklevel=2)
    return GridDensity(x_min, dx, np.clip(vals, 0.0, None))


def to_point_values(q: Quantile, points) -> np.ndarray:
    """Continuous density reconstruction sampled at ``points``.

    The values ``1/(n dG_j)`` sit at increment midpoints and are joined
    linearly; beyond the outer midpoints the density falls linearly to zero
    over twice the end increment, which carries the end mass ``1/n``.  Unlike
    :func:`to_density` this has no jumps at the support ends, at the price
    of conserving mass only up to O(1/n^2).
    """
    g = q.values
    if q.n < 3 or q.has_atoms():
        raise ValueError("need at least three strictly increasing quantile nodes")
    dg = np.diff(g)
    mid = 0.5 * (g[1:] + g[:-1])
    X = np.concatenate([[mid[0] - 2 * dg[0]], mid, [mid[-1] + 2 * dg[-1]]])
    R = np.concatenate([[0.0], 1.0 / (q.n * dg), [0.0]])
    return np.interp(np.asarray(points, dtype=float), X, R, left=0.0, right=0.0)


def wasserstein2(q1: Quantile, q2: Quantile) -> float:
    if q1.n != q2.n:
        raise ValueError(f"quantile resolutions differ: {q1.n} vs {q2.n}")
    return float(np.sqrt(np.mean((q1.values - q2.values) ** 2)))


def l1_distance(u: GridDensity, v: GridDensity) -> float:
    if not u.same_grid(v):
        raise ValueError("densities live on different grids")
    return float(np.sum(np.abs(u.values - v.values)) * u.dx)


def boundary_mass(d: GridDensity, width: int = 1) -> float:
    """Mass in the outermost ``width`` cells on either side."""
    v = d.values
    return float((v[:width].sum() + v[-width:].sum()) * d.dx)


def save_csv(path, obj) -> None:
    if isinstance(obj, GridDensity):
        header = f"# grid,{obj.cells},{obj.x_min!r},{obj.dx!r}"
    elif isinstance(obj, Quantile):
        header = f"# quantile,{obj.n},nan,nan"
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for v in obj.values:
            fh.write(f"{v:.17g}\n")


def load_csv(path):
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# kind,n,x_min,dx' header")
        kind, n, x_min, dx = (s.strip() for s in header[1:].split(","))
        vals = np.array([float(line) for line in fh if line.strip()])
    if vals.size != int(n):
        raise ValueError(f"{path}: header announces {n} values, found {vals.size}")
    if kind == "grid":
        return GridDensity(float(x_min), float(dx), vals)
    if kind == "quantile":
        return Quantile(vals)
    raise ValueError(f"{path}: unknown kind {kind!r}")
