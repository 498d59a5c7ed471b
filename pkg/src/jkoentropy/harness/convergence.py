"""Refinement studies over (tau, n) for the JKO pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..jko import Trajectory
from ..measure1d import GridDensity, Quantile, to_quantile
from ..transform import quantile_to_y
from .config import ExperimentConfig
from .pipeline import build_problem, parallel_map, run_jko


@dataclass
class ConvergenceRow:
    tau: float
    n: int
    l1: float
    lm: float
    w2: float


@dataclass
class ConvergenceTable:
    rows: list
    reference: str
    time: float
    parameter: str  # "tau" or "1/n": the quantity the fitted order refers to
    orders: dict = field(default_factory=dict)  # error name -> least-squares slope, absent for one row

    def errors(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def decreasing(self, name: str = "l1") -> bool:
        e = self.errors(name)
        return bool(np.all(np.diff(e) < 0))

    def lines(self) -> list[str]:
        out = [f"convergence at t = {self.time:g} against {self.reference}",
               f"{'tau':>10} {'n':>6} {'L1':>12} {'Lm':>12} {'W2':>12}"]
        for r in self.rows:
            out.append(f"{r.tau:10.3e} {r.n:6d} {r.l1:12.4e} {r.lm:12.4e} {r.w2:12.4e}")
        for k, v in self.orders.items():
            out.append(f"order in {self.parameter} ({k}): {v:.3f}")
        return out

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("tau,n,l1,lm,w2\n")
            for r in self.rows:
                fh.write(f"{r.tau!r},{r.n},{r.l1!r},{r.lm!r},{r.w2!r}\n")


def _pairs(tau_list, n_list):
    tau_list, n_list = list(tau_list), list(n_list)
    if len(tau_list) == len(n_list):
        return list(zip(tau_list, n_list))
    if len(n_list) == 1:
        return [(t, n_list[0]) for t in tau_list]
    if len(tau_list) == 1:
        return [(tau_list[0], n) for n in n_list]
    raise ValueError("tau_list and n_list must have equal length or one of them a single entry")


def _resample(q: Quantile, n: int) -> np.ndarray:
    """Quantile values at the ``n`` midpoint levels by linear interpolation in omega."""
    if q.n == n:
        return q.values
    w = (np.arange(n) + 0.5) / n
    return np.interp(w, q.omega, q.values)


def _errors(u: GridDensity, v: GridDensity, qu: Quantile, qv: Quantile, m: float):
    diff = np.abs(u.values - v.values)
    n = max(qu.n, qv.n)
    w2 = float(np.sqrt(np.mean((_resample(qu, n) - _resample(qv, n)) ** 2)))
    return float(np.sum(diff) * u.dx), float((np.sum(diff**m) * u.dx) ** (1 / m)), w2


def _one(cfg):
    return run_jko(build_problem(cfg))


def convergence_study(cfg: ExperimentConfig, tau_list, n_list, jobs: int = 1) -> ConvergenceTable:
    """Errors at ``cfg.jko.t_end`` for each (tau, n).

    The reference is the closed-form Barenblatt profile when the problem has
    ``b = 0`` and a Barenblatt datum; otherwise the last (finest) run, whose
    own row then reads zero and is excluded from the order fit.  The order
    is the least-squares slope of log error against log tau, or against
    log(1/n) when tau is held fixed.
    """
    pairs = _pairs(tau_list, n_list)
    cfgs = [replace(cfg, jko=replace(cfg.jko, tau=float(t), n_quantiles=int(n))) for t, n in pairs]
    trajs: list[Trajectory] = parallel_map(_one, cfgs, jobs)
    problem = build_problem(cfg)
    t = cfg.jko.t_end
    m = problem.m
    ys = [quantile_to_y(tr.at(t), problem.tc.T) for tr in trajs]
    dens = [problem.jko_y_density(tr.at(t)) for tr in trajs]
    if problem.is_barenblatt():
        ref = problem.oracle(t)
        qref = to_quantile(ref, 4 * max(n for _, n in pairs))
        label, fitted = "closed-form Barenblatt", slice(None)
    else:
        ref, qref = dens[-1], ys[-1]
        label, fitted = f"finest run (tau = {pairs[-1][0]:g}, n = {pairs[-1][1]})", slice(0, -1)
    rows = [ConvergenceRow(tau, n, *_errors(d, ref, q, qref, m)) for (tau, n), d, q in zip(pairs, dens, ys)]
    taus = np.array([p[0] for p in pairs], dtype=float)
    param = "1/n" if np.all(taus == taus[0]) else "tau"
    h = 1.0 / np.array([p[1] for p in pairs], dtype=float) if param == "1/n" else taus
    table = ConvergenceTable(rows, label, t, param)
    hs = h[fitted]
    if hs.size >= 2:
        for name in ("l1", "lm", "w2"):
            e = table.errors(name)[fitted]
            if np.all(e > 0):
                table.orders[name] = float(np.polyfit(np.log(hs), np.log(e), 1)[0])
    return table
