"""Minimizing-movement scheme in quantile coordinates.

One step minimizes ``J(G) = |G - G_prev|^2 / (2 tau n) + F_n(G)`` over
nondecreasing vectors ``G``, where ``F_n`` is the discrete energy of
:func:`jkoentropy.energy.quantile_potential`.  ``J`` couples only
neighbouring entries, so its Hessian is tridiagonal and a damped Newton
iteration costs O(n) per sweep.  ``H(x, xi) ~ xi^(1-m)`` blows up as an
increment closes, so rejecting steps with a nonpositive increment in the
line search is all the constraint handling needed.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from .energy import (EnergyFunctional, quantile_entropy, quantile_h1_seminorm, quantile_lm_norm,
                     quantile_potential)
from .measure1d import GridDensity, Quantile, to_density, to_quantile, wasserstein2


class JkoStepError(RuntimeError):
    """Inner minimization did not converge; ``best`` holds the best iterate reached."""

    def __init__(self, message, best: Quantile, grad_norm: float):
        super().__init__(message)
        self.best = best
        self.grad_norm = grad_norm


class JkoRunError(RuntimeError):
    def __init__(self, message, partial: "Trajectory"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class JkoConfig:
    tau: float
    n_quantiles: int = 400
    t_end: float = 1.0
    t0: float = 0.0
    inner_tol: float = 1e-10
    inner_max_iter: int = 100

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.n_quantiles < 8:
            raise ValueError("n_quantiles must be at least 8")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")

    @property
    def steps(self) -> int:
        return int(math.ceil((self.t_end - self.t0) / self.tau - 1e-9))


@dataclass(frozen=True)
class StepRecord:
    w2_to_prev: float
    potential: float
    entropy: float
    second_moment: float
    h1_seminorm_of_rho_m_half: float
    lm_norm: float
    grad_norm: float = 0.0
    iterations: int = 0


def _record(q: Quantile, ef: EnergyFunctional, prev: Quantile | None, grad=0.0, it=0) -> StepRecord:
    return StepRecord(
        0.0 if prev is None else wasserstein2(q, prev),
        quantile_potential(q, ef),
        quantile_entropy(q),
        q.second_moment(),
        quantile_h1_seminorm(q, ef.m),
        quantile_lm_norm(q, ef.m),
        float(grad),
        int(it),
    )


@dataclass
class Trajectory:
    states: list
    tau: float
    t0: float = 0.0
    per_step: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.tau * np.arange(len(self.states))

    def index_at(self, t: float) -> int:
        """Piecewise-constant interpolation: state n covers ``((n-1) tau, n tau]`` after t0."""
        s = (t - self.t0) / self.tau
        n = int(math.ceil(s - 1e-9))
        return min(max(n, 0), len(self.states) - 1)

    def at(self, t: float) -> Quantile:
        return self.states[self.index_at(t)]

    def density_at(self, t: float, x_min: float, dx: float, cells: int) -> GridDensity:
        return to_density(self.at(t), x_min, dx, cells)

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        names = list(StepRecord.__dataclass_fields__)
        with open(os.path.join(directory, "meta.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "n", "t0", "states"])
            w.writerow([repr(self.tau), self.states[0].n if self.states else 0, repr(self.t0), len(self.states)])
            w.writerow(["step", "time"] + names)
            for i, rec in enumerate(self.per_step):
                w.writerow([i, repr(self.t0 + i * self.tau)] + [repr(getattr(rec, k)) for k in names])
        for i, q in enumerate(self.states):
            np.savetxt(os.path.join(directory, f"state_{i:06d}.csv"), q.values, fmt="%.17g",
                       header=f"quantile,{q.n},nan,nan", comments="# ")

    @classmethod
    def load(cls, directory) -> "Trajectory":
        with open(os.path.join(directory, "meta.csv"), newline="") as fh:
            rows = list(csv.reader(fh))
        tau, _, t0, count = rows[1]
        names = rows[2][2:]
        recs = []
        for row in rows[3:]:
            vals = dict(zip(names, row[2:]))
            recs.append(StepRecord(**{k: (int(v) if k == "iterations" else float(v)) for k, v in vals.items()}))
        states = [Quantile(np.atleast_1d(np.loadtxt(os.path.join(directory, f"state_{i:06d}.csv"))))
                  for i in range(int(count))]
        return cls(states, float(tau), float(t0), recs)


# -- one step -----------------------------------------------------------------

def step_objective(G: Quantile | np.ndarray, G_prev: Quantile | np.ndarray, tau: float,
                   ef: EnergyFunctional) -> float:
    g = np.asarray(getattr(G, "values", G), dtype=float)
    p = np.asarray(getattr(G_prev, "values", G_prev), dtype=float)
    n = g.size
    xi = n * np.diff(g)
    if np.any(xi <= 0):
        return np.inf
    xhat = 0.5 * (g[1:] + g[:-1])
    transport = np.sum((g - p) ** 2) / (2 * tau * n)
    return float(transport + np.sum(ef.a(xhat) * xi ** (1 - ef.m)) / (ef.m * n))


def _grad_hess(g, p, tau, ef):
    """Gradient and banded Hessian (upper form for solveh_banded) of ``n * J``."""
    n = g.size
    m = ef.m
    xi = n * np.diff(g)
    xhat = 0.5 * (g[1:] + g[:-1])
    a, a1, a2 = ef.a(xhat), ef.a.d1(xhat), ef.a.d2(xhat)
    p1 = xi ** (1 - m)
    hx = a1 * p1 / m
    hxi = a * (1 - m) * xi ** (-m) / m
    hxx = a2 * p1 / m
    hxxi = a1 * (1 - m) * xi ** (-m) / m
    hxixi = a * (m - 1) * xi ** (-m - 1)

    grad = (g - p) / tau
    grad[:-1] += 0.5 * hx - n * hxi
    grad[1:] += 0.5 * hx + n * hxi

    diag = np.full(n, 1.0 / tau)
    diag[:-1] += 0.25 * hxx - n * hxxi + n * n * hxixi
    diag[1:] += 0.25 * hxx + n * hxxi + n * n * hxixi
    off = 0.25 * hxx - n * n * hxixi
    return grad, diag, off


def jko_step(G_prev: Quantile, cfg: JkoConfig, ef: EnergyFunctional, start: Quantile | None = None):
    """Minimize the step objective from a warm start; returns ``(G, grad_norm, iterations)``.

    Convergence means ``||grad J||_inf <= cfg.inner_tol`` for the objective
    exactly as :func:`step_objective` defines it.
    """
    p = G_prev.values
    n = p.size
    tau = cfg.tau
    g = np.array(p if start is None else start.values, dtype=float)
    J = step_objective(g, p, tau, ef)
    if not np.isfinite(J):
        raise ValueError("step objective is infinite at the starting point")
    best = (np.inf, g)
    for it in range(1, cfg.inner_max_iter + 1):
        grad, diag, off = _grad_hess(g, p, tau, ef)
        gnorm = float(np.max(np.abs(grad))) / n
        if gnorm < best[0]:
            best = (gnorm, g.copy())
        if gnorm <= cfg.inner_tol:
            return Quantile(g), gnorm, it - 1
        d = _newton_direction(grad, diag, off)
        slope = float(grad @ d)
        if -slope / n <= 1e-14 * (1.0 + abs(J)):
            # predicted decrease is below the resolution of J: the line search
            # cannot see it, so take the plain Newton step if it stays feasible
            Jt = step_objective(g + d, p, tau, ef)
            if np.isfinite(Jt):
                g, J = g + d, Jt
                continue
        t = 1.0
        accepted = False
        for _ in range(60):
            trial = g + t * d
            Jt = step_objective(trial, p, tau, ef)
            if Jt <= J + 1e-4 * t * slope / n:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise JkoStepError(f"line search stalled with ||grad||_inf = {gnorm:.3e}",
                               Quantile(best[1]), best[0])
        g, J = trial, Jt
    grad, _, _ = _grad_hess(g, p, tau, ef)
    gnorm = float(np.max(np.abs(grad))) / n
    if gnorm <= cfg.inner_tol:
        return Quantile(g), gnorm, cfg.inner_max_iter
    if gnorm < best[0]:
        best = (gnorm, g)
    raise JkoStepError(f"inner_max_iter = {cfg.inner_max_iter} exceeded, ||grad||_inf = {best[0]:.3e}",
                       Quantile(best[1]), best[0])


def _newton_direction(grad, diag, off):
    shift = 0.0
    scale = float(np.max(np.abs(diag)))
    for _ in range(40):
        ab = np.empty((2, diag.size))
        ab[0, 0] = 0.0
        ab[0, 1:] = off
        ab[1] = diag + shift
        try:
            return -solveh_banded(ab, grad)
        except (LinAlgError, ValueError):
            shift = max(2 * shift, 1e-8 * scale)
    return -grad / (diag + shift)


def run(rho0, ef: EnergyFunctional, cfg: JkoConfig, callback=None) -> Trajectory:
    """Iterate :func:`jko_step` from ``rho0`` (a GridDensity or a Quantile) to ``cfg.t_end``."""
    q = rho0 if isinstance(rho0, Quantile) else to_quantile(rho0, cfg.n_quantiles)
    if q.n != cfg.n_quantiles:
        raise ValueError(f"initial quantile has n = {q.n}, config says {cfg.n_quantiles}")
    if not np.isfinite(quantile_potential(q, ef)):
        raise ValueError("initial datum has infinite energy (flat quantile segments)")
    traj = Trajectory([q], cfg.tau, cfg.t0, [_record(q, ef, None)])
    for k in range(cfg.steps):
        try:
            new, gnorm, it = jko_step(q, cfg, ef)
        except JkoStepError as exc:
            raise JkoRunError(f"step {k + 1} at t = {cfg.t0 + (k + 1) * cfg.tau:.6g} failed: {exc}", traj) from exc
        traj.states.append(new)
        traj.per_step.append(_record(new, ef, q, gnorm, it))
        q = new
        if callback is not None:
            callback(k + 1, new)
    return traj


# -- diagnostics --------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    worst: float = 0.0


@dataclass
class DiagnosticsReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in self.checks]


def energy_checks(traj: Trajectory, rel: float = 1e-10) -> list[CheckResult]:
    F = np.array([r.potential for r in traj.per_step])
    F0 = F[0]
    inc = np.diff(F)
    worst = float(np.max(inc)) if inc.size else -np.inf
    mono = CheckResult("energy nonincreasing", bool(worst <= rel * F0),
                       f"max F_n - F_(n-1) = {worst:.3e} (slack {rel * F0:.1e})", worst)
    w2sum = float(sum(r.w2_to_prev**2 for r in traj.per_step[1:]))
    bound = 2 * traj.tau * F0
    sq = CheckResult("sum W2^2 <= 2 tau F0", bool(w2sum <= bound * (1 + rel)),
                     f"sum = {w2sum:.6e}, bound = {bound:.6e}", w2sum / bound if bound > 0 else 0.0)
    return [mono, sq]


def second_moment_check(traj: Trajectory, ef: EnergyFunctional, x_range: tuple[float, float],
                        rel: float = 1e-6) -> CheckResult:
    """``M2(n) <= M2(0) + M F0 n tau`` with ``M = 2(m-1) - 2 inf z a'/a``."""
    M = ef.drift_constant(x_range)
    F0 = traj.per_step[0].potential
    M2 = np.array([r.second_moment for r in traj.per_step])
    steps = np.arange(M2.size)
    bound = M2[0] + M * F0 * steps * traj.tau
    excess = M2 - bound * (1 + rel)
    worst = float(np.max(excess))
    return CheckResult("second-moment growth", bool(worst <= 0),
                       f"M = {M:.6g}, max excess = {worst:.3e}, violations = {int(np.sum(excess > 0))}", worst)


def entropy_dissipation_check(traj: Trajectory, ef: EnergyFunctional, tol: float | None = None) -> CheckResult:
    """``E(N) + 4(m-1) a_lower/m^2 tau sum |d rho^(m/2)|^2 <= E(0) + sup a''/m tau sum ||rho||_m^m``."""
    m = ef.m
    recs = traj.per_step
    E0 = recs[0].entropy
    tol = 1e-3 * (1 + abs(E0)) if tol is None else tol
    if len(recs) == 1:
        return CheckResult("entropy dissipation", True, "single state", 0.0)
    h1 = sum(r.h1_seminorm_of_rho_m_half for r in recs[1:])
    lm = sum(r.lm_norm for r in recs[1:])
    lhs = recs[-1].entropy + 4 * (m - 1) * ef.a_lower / m**2 * traj.tau * h1
    rhs = E0 + max(ef.a_second_derivative_sup, 0.0) / m * traj.tau * lm
    return CheckResult("entropy dissipation", bool(lhs <= rhs + tol),
                       f"lhs = {lhs:.6g}, rhs = {rhs:.6g}, tol = {tol:.1e}", lhs - rhs)


def diagnostics_check(traj: Trajectory, ef: EnergyFunctional, x_range: tuple[float, float]) -> DiagnosticsReport:
    return DiagnosticsReport(energy_checks(traj) + [second_moment_check(traj, ef, x_range),
                                                    entropy_dissipation_check(traj, ef)])


def holder_check(traj: Trajectory, times) -> CheckResult:
    """``W2(rho(t), rho(s)) <= sqrt(2 F0) max(tau, |t - s|)^(1/2)`` for all pairs of ``times``."""
    times = np.asarray(times, dtype=float)
    F0 = traj.per_step[0].potential
    idx = [traj.index_at(t) for t in times]
    G = np.array([traj.states[i].values for i in idx])
    worst, bad, pairs = -np.inf, 0, 0
    for i in range(len(times)):
        d = np.sqrt(np.mean((G[i + 1:] - G[i]) ** 2, axis=1))
        bound = np.sqrt(2 * F0) * np.sqrt(np.maximum(traj.tau, np.abs(times[i + 1:] - times[i])))
        if d.size:
            r = d / bound
            worst = max(worst, float(np.max(r)))
            bad += int(np.sum(d > bound))
            pairs += d.size
    return CheckResult("Holder bound", bad == 0,
                       f"{pairs} pairs, violations = {bad}, max ratio = {worst:.4f}", worst)


def max_principle_level(rho0: GridDensity | Quantile, ef: EnergyFunctional) -> float:
    """``k = sup rho0 a^(1/(m-1))``."""
    e = 1.0 / (ef.m - 1)
    if isinstance(rho0, Quantile):
        xhat, rho = _quantile_density(rho0)
    else:
        xhat, rho = rho0.centers, rho0.values
    return float(np.max(rho * ef.a(xhat) ** e))


def _quantile_density(q: Quantile):
    g = q.values
    return 0.5 * (g[1:] + g[:-1]), 1.0 / (q.n * np.diff(g))


def max_principle_excess(q: Quantile, ef: EnergyFunctional, k: float) -> float:
    """Largest ``rho - k a^(-1/(m-1))`` over the piecewise-constant quantile density."""
    xhat, rho = _quantile_density(q)
    return float(np.max(rho - k * ef.a(xhat) ** (-1.0 / (ef.m - 1))))


__all__ = [
    "JkoConfig", "StepRecord", "Trajectory", "JkoStepError", "JkoRunError", "step_objective",
    "jko_step", "run", "CheckResult", "DiagnosticsReport", "energy_checks", "second_moment_check",
    "entropy_dissipation_check", "diagnostics_check", "holder_check", "max_principle_level",
    "max_principle_excess",
]
