"""Uniformly tabulated real functions with local cubic interpolation.

Every coefficient the solvers need (alpha, T, a and their derivatives) lives
on one of these tables, so derivative conventions stay identical across
modules: derivatives are centered differences with the tabulation step,
values between nodes come from the 4-point Lagrange cubic through the
surrounding nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Tabulated:
    x0: float
    h: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 4:
            raise ValueError("a tabulation needs at least 4 nodes")
        if not self.h > 0:
            raise ValueError("tabulation step must be positive")
        if not np.all(np.isfinite(vals)):
            raise ValueError("tabulated values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, f, lo: float, hi: float, h: float) -> "Tabulated":
        """Tabulate ``f`` on the nodes ``k*h`` covering [lo, hi]; 0 is always a node."""
        k0 = int(np.floor(lo / h + 1e-9))
        k1 = int(np.ceil(hi / h - 1e-9))
        x = np.arange(k0, k1 + 1) * h
        return cls(k0 * h, h, np.asarray(f(x), dtype=float))

    @property
    def size(self) -> int:
        return self.values.size

    @cached_property
    def grid(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.size)

    @property
    def lo(self) -> float:
        return self.x0

    @property
    def hi(self) -> float:
        return self.x0 + self.h * (self.size - 1)

    def contains(self, x, slack: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lo - slack) & (x <= self.hi + slack)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        s = (np.clip(x, self.lo, self.hi) - self.x0) / self.h
        i = np.clip(np.floor(s).astype(int), 1, self.size - 3)
        t = s - i
        v = self.values
        f0, f1, f2, f3 = v[i - 1], v[i], v[i + 1], v[i + 2]
        # Lagrange cubic through nodes i-1..i+2, t measured from node i
        out = (
            -t * (t - 1) * (t - 2) / 6 * f0
            + (t + 1) * (t - 1) * (t - 2) / 2 * f1
            - (t + 1) * t * (t - 2) / 2 * f2
            + (t + 1) * t * (t - 1) / 6 * f3
        )
        return out if out.ndim else float(out)

    def scalar(self, x: float) -> float:
        """Same interpolant as ``__call__`` for one float, without array overhead."""
        s = (min(max(x, self.x0), self.hi) - self.x0) / self.h
        i = min(max(int(s), 1), self.size - 3)
        t = s - i
        v = self._list
        return (-t * (t - 1) * (t - 2) / 6 * v[i - 1]
                + (t + 1) * (t - 1) * (t - 2) / 2 * v[i]
                - (t + 1) * t * (t - 2) / 2 * v[i + 1]
                + (t + 1) * t * (t - 1) / 6 * v[i + 2])

    @cached_property
    def _list(self) -> list:
        return self.values.tolist()

    def derivative(self) -> "Tabulated":
        return Tabulated(self.x0, self.h, np.gradient(self.values, self.h, edge_order=2))

    @cached_property
    def _d1(self) -> "Tabulated":
        return self.derivative()

    @cached_property
    def _d2(self) -> "Tabulated":
        return self._d1.derivative()

    def d1(self, x):
        return self._d1(x)

    def d2(self, x):
        return self._d2(x)

    def inverse(self, y, iterations: int = 4):
        """Invert a strictly increasing table: bracket by bisection, polish by Newton."""
        v = self.values
        if np.any(np.diff(v) <= 0):
            raise ValueError("inverse requires a strictly increasing tabulation")
        y = np.asarray(y, dtype=float)
        if np.any((y < v[0]) | (y > v[-1])):
            raise ValueError(
                f"value outside the tabulated range [{v[0]:.6g}, {v[-1]:.6g}]"
            )
        j = np.clip(np.searchsorted(v, y, side="right") - 1, 0, self.size - 2)
        x = self.x0 + self.h * (j + (y - v[j]) / (v[j + 1] - v[j]))
        for _ in range(iterations):
            x = np.clip(x - (self(x) - y) / self.d1(x), self.lo, self.hi)
        return x if x.ndim else float(x)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.grid, self.values]), delimiter=",",
                   header="x,value", comments="", fmt="%.17g")


@dataclass(frozen=True)
class AnalyticCoefficient:
    """A coefficient given in closed form together with its first two derivatives."""

    f: object
    f1: object
    f2: object

    @classmethod
    def constant(cls, c: float) -> "AnalyticCoefficient":
        return cls(
            lambda x: np.full_like(np.asarray(x, dtype=float), c),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        )

    def __call__(self, x):
        return self.f(x)

    def d1(self, x):
        return self.f1(x)

    def d2(self, x):
        return self.f2(x)
