"""Initial data and closed-form reference solutions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta

from ..measure1d import GridDensity


@dataclass(frozen=True)
class Barenblatt:
    """Self-similar solution of ``u_t = (u^m)_yy`` with unit mass::

        u(t, y) = t^-alpha (C - k y^2 t^(-2 alpha))_+^(1/(m-1)),
        alpha = 1/(m+1),  k = (m-1)/(2m(m+1)).
    """

    m: float

    @property
    def alpha(self) -> float:
        return 1.0 / (self.m + 1)

    @property
    def k(self) -> float:
        m = self.m
        return (m - 1) / (2 * m * (m + 1))

    @property
    def C(self) -> float:
        # int (C - k s^2)_+^p ds = C^(p + 1/2) k^(-1/2) B(1/2, p + 1) = 1
        p = 1.0 / (self.m - 1)
        return (np.sqrt(self.k) / beta(0.5, p + 1)) ** (1.0 / (p + 0.5))

    def __call__(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        a = self.alpha
        base = np.clip(self.C - self.k * y**2 * t ** (-2 * a), 0.0, None)
        return t ** (-a) * base ** (1.0 / (self.m - 1))

    def support_radius(self, t: float) -> float:
        return float(np.sqrt(self.C / self.k) * t**self.alpha)

    def sup(self, t: float) -> float:
        return float(t ** (-self.alpha) * self.C ** (1.0 / (self.m - 1)))

    def density(self, t: float, y_min: float, y_max: float, cells: int) -> GridDensity:
        return GridDensity.from_function(lambda y: self(t, y), y_min, y_max, cells, subsamples=8)

    def pde_residual(self, t: float, y, h: float) -> np.ndarray:
        """``u_t - (u^m)_yy`` by central differences of step ``h`` in t and y."""
        y = np.asarray(y, dtype=float)
        m = self.m
        ut = (self(t + h, y) - self(t - h, y)) / (2 * h)
        um = lambda s: self(t, s) ** m
        uyy = (um(y + h) - 2 * um(y) + um(y - h)) / h**2
        return ut - uyy


def smootherstep(s):
    """``6s^5 - 15s^4 + 10s^3`` clipped to [0, 1]; C^2 with flat ends."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s * s)


def riemann_smoothed(left: float = 0.7, right: float = 0.3, lo: float = -1.0, mid: float = 0.0,
                     hi: float = 1.0, width: float = 0.1):
    """Two plateaus ``left`` on [lo, mid] and ``right`` on [mid, hi], with each jump
    replaced by a smootherstep ramp of the given width centered on it."""
    if not (lo < mid < hi) or width <= 0 or left < 0 or right < 0:
        raise ValueError("riemann_smoothed needs lo < mid < hi, width > 0, nonnegative plateaus")

    def f(y):
        y = np.asarray(y, dtype=float)
        rise = smootherstep((y - lo) / width + 0.5)
        fall = 1.0 - smootherstep((y - hi) / width + 0.5)
        level = left + (right - left) * smootherstep((y - mid) / width + 0.5)
        return rise * fall * level

    return f


def uniform(lo: float = -0.5, hi: float = 0.5):
    if not lo < hi:
        raise ValueError("uniform needs lo < hi")
    return lambda y: ((np.asarray(y) >= lo) & (np.asarray(y) <= hi)).astype(float)


def double_bump(c1: float = -0.6, c2: float = 0.6, width: float = 0.4, weight: float = 0.5):
    """Two compactly supported ``(1 - s^2)^2`` bumps; ``weight`` goes to the first."""
    if width <= 0 or not 0 <= weight <= 1:
        raise ValueError("double_bump needs width > 0 and weight in [0, 1]")

    def bump(y, c):
        s = (np.asarray(y, dtype=float) - c) / width
        return np.where(np.abs(s) < 1, (1 - s * s) ** 2, 0.0) / (16.0 / 15.0 * width)

    return lambda y: weight * bump(y, c1) + (1 - weight) * bump(y, c2)


INITIAL_PRESETS = ("barenblatt", "uniform", "double_bump", "riemann_smoothed")


def initial_profile(name: str, m: float, params: dict):
    """Unnormalized profile ``f(y)``; ``barenblatt`` takes ``t0`` and ignores the rest."""
    params = dict(params)
    if name == "barenblatt":
        t0 = float(params.pop("t0", 0.1))
        if params:
            raise ValueError(f"initial.barenblatt: unknown parameters {sorted(params)}")
        if not t0 > 0:
            raise ValueError("initial.t0 must be positive")
        bb = Barenblatt(m)
        return lambda y: bb(t0, y)
    makers = {"uniform": uniform, "double_bump": double_bump, "riemann_smoothed": riemann_smoothed}
    if name not in makers:
        raise ValueError(f"initial.preset: unknown preset {name!r}; choose one of {', '.join(INITIAL_PRESETS)}")
    try:
        return makers[name](**params)
    except TypeError as exc:
        raise ValueError(f"initial.{name}: {exc}") from None
