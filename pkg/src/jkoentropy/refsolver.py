"""Explicit monotone finite-volume solver for ``u_t = (u^m)_yy + (b u^m)_y + nu u_yy``.

Conservative form ``u_t + dF/dy = 0`` with interface flux

    F_{i+1/2} = -(u^m_{i+1} - u^m_i)/dy - nu (u_{i+1} - u_i)/dy
                - max(b, 0) u^m_{i+1} - min(b, 0) u^m_i,     b = b(y_{i+1/2}),

i.e. central differences for the diffusion and upwinding of the transport
flux ``-b u^m`` by the sign of its velocity ``-b``.  Both ends are closed
(zero flux), so mass is conserved to rounding.  Under the time-step bound of
:func:`stable_dt` the update is monotone in every stencil value, hence
nonnegativity preserving and L1 contractive.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .measure1d import GridDensity, load_csv, save_csv
from .transform import ConvectionCoefficient


class CflError(ValueError):
    def __init__(self, dt, recommended):
        super().__init__(f"time step {dt:.3e} violates the stability bound; use dt <= {recommended:.3e}")
        self.dt = dt
        self.recommended = recommended


@dataclass(frozen=True)
class FvConfig:
    y_min: float
    dy: float
    cells: int
    dt: float
    t_end: float
    nu: float = 0.0
    cfl_safety: float = 0.45
    t0: float = 0.0

    def __post_init__(self):
        if not self.dy > 0 or self.cells < 3:
            raise ValueError("need dy > 0 and at least 3 cells")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")

    @property
    def edges(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(self.cells + 1)


class _Operator:
    """Precomputed interface data for one grid and one ``b``."""

    def __init__(self, b: ConvectionCoefficient, m: float, y_min: float, dy: float, cells: int, nu: float):
        self.m, self.dy, self.nu = m, dy, nu
        yi = y_min + dy * np.arange(1, cells)  # interior interfaces
        bi = np.asarray(b.b(yi), dtype=float)
        self.bp = np.maximum(bi, 0.0)
        self.bm = np.minimum(bi, 0.0)
        # per-cell transport weight multiplying u_i^m in the update
        w = np.zeros(cells)
        w[:-1] += -self.bm
        w[1:] += self.bp
        self.transport_weight = float(np.max(w)) if cells else 0.0
        self.sup_b = float(np.max(np.abs(bi))) if bi.size else 0.0

    def flux(self, u):
        um = u**self.m
        F = -(np.diff(um) + self.nu * np.diff(u)) / self.dy - self.bp * um[1:] - self.bm * um[:-1]
        return np.concatenate([[0.0], F, [0.0]])

    def stable_dt(self, sup_u: float, cfl: float) -> float:
        D = self.m * sup_u ** (self.m - 1)
        rate = 2 * (D + self.nu) / self.dy**2 + self.transport_weight * D / self.dy
        if rate == 0:
            return np.inf
        bound = 1.0 / rate
        # the textbook split form of the same restriction
        parts = [self.dy**2 / (2 * (D + self.nu))] if D + self.nu > 0 else []
        if self.sup_b * D > 0:
            parts.append(self.dy / (self.sup_b * D))
        return cfl * min([bound] + parts)


def stable_dt(u: GridDensity, b: ConvectionCoefficient, m: float, nu: float = 0.0, cfl: float = 1.0) -> float:
    """Largest monotone time step times ``cfl``."""
    op = _Operator(b, m, u.x_min, u.dx, u.cells, nu)
    return op.stable_dt(float(np.max(u.values)), cfl)


def fv_step(u: GridDensity, b: ConvectionCoefficient, m: float, dt: float, nu: float = 0.0,
            cfl_safety: float = 1.0, _op: _Operator | None = None) -> GridDensity:
    op = _op or _Operator(b, m, u.x_min, u.dx, u.cells, nu)
    v = u.values
    limit = op.stable_dt(float(np.max(v)), cfl_safety)
    if dt > limit * (1 + 1e-12):
        raise CflError(dt, limit)
    F = op.flux(v)
    new = v - dt / u.dx * np.diff(F)
    # monotone update: negative values can only be rounding noise
    return u.with_values(np.maximum(new, 0.0))


@dataclass
class GridTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    steps: int = 0

    def __len__(self):
        return len(self.states)

    def at(self, t: float) -> GridDensity:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t = {t}")
        return self.states[i]

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "meta.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snapshot", "time", "mass", "sup"])
            for i, (t, s) in enumerate(zip(self.times, self.states)):
                w.writerow([i, repr(float(t)), repr(s.mass), repr(float(np.max(s.values)))])
        for i, s in enumerate(self.states):
            save_csv(os.path.join(directory, f"state_{i:06d}.csv"), s)

    @classmethod
    def load(cls, directory) -> "GridTrajectory":
        with open(os.path.join(directory, "meta.csv"), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        times = [float(r[1]) for r in rows]
        states = [load_csv(os.path.join(directory, f"state_{i:06d}.csv")) for i in range(len(rows))]
        return cls(times, states)


def fv_run(u0: GridDensity, b: ConvectionCoefficient, m: float, cfg: FvConfig, snapshot_times=None,
           max_steps: int = 50_000_000) -> GridTrajectory:
    """March from ``cfg.t0`` to ``cfg.t_end``, storing ``u0`` and every requested snapshot.

    The step is ``min(cfg.dt, stable bound)``, re-evaluated every step and
    shortened to land exactly on snapshot times.
    """
    if u0.cells != cfg.cells or not np.isclose(u0.dx, cfg.dy) or not np.isclose(u0.x_min, cfg.y_min):
        raise ValueError("initial datum does not live on the configured y-grid")
    op = _Operator(b, m, cfg.y_min, cfg.dy, cfg.cells, cfg.nu)
    extra = [] if snapshot_times is None else np.atleast_1d(snapshot_times).tolist()
    targets = sorted({float(t) for t in extra if t <= cfg.t_end + 1e-12} | {float(cfg.t_end)})
    if targets and targets[0] < cfg.t0 - 1e-12:
        raise ValueError("snapshot time precedes t0")
    traj = GridTrajectory([cfg.t0], [u0])
    t, u = cfg.t0, u0
    for target in targets:
        if target <= cfg.t0 + 1e-15:
            continue
        while t < target - 1e-14 * max(1.0, target):
            dt = min(cfg.dt, op.stable_dt(float(np.max(u.values)), cfg.cfl_safety), target - t)
            u = fv_step(u, b, m, dt, cfg.nu, 1.0, op)
            t += dt
            traj.steps += 1
            if traj.steps > max_steps:
                raise RuntimeError(f"more than {max_steps} steps before t = {target}")
        t = target
        traj.times.append(target)
        traj.states.append(u)
    return traj


def l1_distance(u: GridDensity, v: GridDensity) -> float:
    if not u.same_grid(v):
        raise ValueError("densities live on different grids")
    return float(np.sum(np.abs(u.values - v.values)) * u.dx)


def gronwall_constant(m: float, sup_u: float, b: ConvectionCoefficient) -> float:
    """``C = m sup(u)^(m-1) (2 ||b'||_inf + ||b||_inf)`` with the certified bounds of ``b``."""
    y = np.linspace(-60, 60, 240001)
    sb = float(np.max(np.abs(b.b(y))))
    sbp = float(np.max(np.abs(b.b_prime(y))))
    return m * sup_u ** (m - 1) * (2 * sbp + sb)


@dataclass
class StabilityResult:
    times: np.ndarray
    distances: np.ndarray
    C: float
    violations: int
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def gronwall_check(u: GridTrajectory, v: GridTrajectory, C: float, rel: float = 1e-3) -> StabilityResult:
    """``d(t2) <= d(t1) (1 + C dt e^(C dt))`` for every sampled pair ``t1 < t2``.

    With ``C = 0`` this is plain L1 contraction: the distance must not grow.
    """
    if len(u.times) != len(v.times) or not np.allclose(u.times, v.times):
        raise ValueError("trajectories are sampled at different times")
    t = np.asarray(u.times, dtype=float)
    d = np.array([l1_distance(a, b) for a, b in zip(u.states, v.states)])
    viol, worst = 0, 0.0
    for i in range(t.size):
        h = t[i + 1:] - t[i]
        bound = d[i] * (1 + C * h * np.exp(C * h)) * (1 + rel)
        if h.size:
            viol += int(np.sum(d[i + 1:] > bound))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(bound > 0, d[i + 1:] / bound, np.where(d[i + 1:] > 0, np.inf, 0.0))
            worst = max(worst, float(np.max(r)))
    return StabilityResult(t, d, C, viol, worst)


__all__ = [
    "FvConfig", "CflError", "stable_dt", "fv_step", "fv_run", "GridTrajectory", "l1_distance",
    "gronwall_constant", "gronwall_check", "StabilityResult",
]
