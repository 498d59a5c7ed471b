"""The ten acceptance criteria, each a function returning a :class:`CriterionResult`.

Runs shared between criteria (the Barenblatt runs of criterion 1 and the
cross-validation runs of criterion 2) are computed once per process.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..energy import EnergyFunctional, check_kappa_convexity
from ..jko import energy_checks, holder_check, max_principle_level, second_moment_check
from ..measure1d import GridDensity, l1_distance
from ..refsolver import FvConfig, fv_run, gronwall_check, gronwall_constant
from ..transform import gaussian_b, rescale, zero_b
from .config import DEFAULT_CONFIG, ExperimentConfig, parse_config
from .pipeline import (build_problem, compare, entropy_sweeps, holder_times, max_principle_check,
                       parallel_map, run_fv, run_jko, transform_checks)
from .presets import Barenblatt, double_bump, riemann_smoothed

L1_TOL = 5e-2
BASE = (400, 1e-3, 5e-3)     # n, tau, dy
REFINED = (800, 5e-4, 2.5e-3)


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    details: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.cid}: {self.title} ({self.seconds:.1f} s)"

    def text(self) -> str:
        return "\n".join([self.line()] + ["    " + d for d in self.details])


BARENBLATT_CONFIG = """\
[problem]
m = 2.0
b_preset = "zero"

[initial]
preset = "barenblatt"
params = { t0 = 0.1 }

[jko]
t0 = 0.1
t_end = 0.5

[checks]
compare_times = [0.5]
snapshot_dt = 0.004
"""


def barenblatt_config(n: int, tau: float, dy: float = 5e-3) -> ExperimentConfig:
    cfg = parse_config(BARENBLATT_CONFIG)
    return replace(cfg, jko=replace(cfg.jko, n_quantiles=n, tau=tau), fv=replace(cfg.fv, dy=dy))


def riemann_config(n: int, tau: float, dy: float) -> ExperimentConfig:
    cfg = parse_config(DEFAULT_CONFIG)
    return replace(cfg, jko=replace(cfg.jko, n_quantiles=n, tau=tau), fv=replace(cfg.fv, dy=dy))


def _config(kind, args):
    return barenblatt_config(*args) if kind == "bb" else riemann_config(*args)


def _task(item):
    """One timed run: ``(kind, args, solver)`` -> (trajectory, seconds)."""
    kind, args, solver = item
    t = time.perf_counter()
    problem = build_problem(_config(kind, args))
    out = run_jko(problem) if solver == "jko" else run_fv(problem)
    return out, time.perf_counter() - t


_RUNS: dict = {}
_JOBS = [1]


def set_jobs(jobs: int) -> None:
    _JOBS[0] = max(1, int(jobs))


def _fetch(*keys) -> None:
    """Compute the missing runs, concurrently when more than one job is allowed.

    Barenblatt keys ``("bb", (n, tau))`` need a JKO run; Riemann keys
    ``("riemann", (n, tau, dy))`` need a JKO and an FV run.
    """
    todo = [k for k in dict.fromkeys(keys) if k not in _RUNS]
    items = [(kind, args, s) for kind, args in todo for s in (("jko",) if kind == "bb" else ("jko", "fv"))]
    outs = iter(parallel_map(_task, items, _JOBS[0]))
    for kind, args in todo:
        problem = build_problem(_config(kind, args))
        if kind == "bb":
            traj, secs = next(outs)
            _RUNS[(kind, args)] = (problem, traj, secs)
        else:
            (traj, tj), (fv, tf) = next(outs), next(outs)
            _RUNS[(kind, args)] = (problem, traj, fv, tj, tf)


def _bb(n, tau):
    _fetch(("bb", (n, tau)))
    return _RUNS[("bb", (n, tau))]


def _rm(n, tau, dy):
    _fetch(("riemann", (n, tau, dy)))
    return _RUNS[("riemann", (n, tau, dy))]


# -- criteria -----------------------------------------------------------------

def criterion_1() -> CriterionResult:
    _fetch(("bb", BASE[:2]), ("bb", REFINED[:2]))
    start = time.perf_counter()
    errs, details = [], []
    base_secs = 0.0
    for n, tau, _ in (BASE, REFINED):
        problem, traj, secs = _bb(n, tau)
        err = l1_distance(problem.jko_y_density(traj.at(0.5)), problem.oracle(0.5))
        errs.append(err)
        base_secs = base_secs or secs
        details.append(f"n = {n}, tau = {tau:g}: L1(JKO, Barenblatt) at t = 0.5 is {err:.4e} ({secs:.1f} s)")
    # the oracle itself: residual of the closed form in the PDE under central differences
    bb = Barenblatt(2.0)
    y = np.linspace(-0.8, 0.8, 81) * bb.support_radius(0.3)
    r1 = float(np.max(np.abs(bb.pde_residual(0.3, y, 1e-3))))
    r2 = float(np.max(np.abs(bb.pde_residual(0.3, y, 5e-4))))
    ratio = r1 / r2
    details.append(f"oracle PDE residual: {r1:.3e} at h = 1e-3, {r2:.3e} at h = 5e-4 (ratio {ratio:.3f}, O(h^2) -> 4)")
    ok = (errs[0] <= L1_TOL and errs[1] < errs[0] and 3.5 <= ratio <= 4.5 and r1 < 1e-4
          and base_secs <= 120)
    details.append(f"base run time {base_secs:.1f} s (limit 120 s)")
    return CriterionResult(1, "Barenblatt oracle", ok, details, time.perf_counter() - start + base_secs)


def criterion_2() -> CriterionResult:
    _fetch(("riemann", BASE), ("riemann", REFINED))
    start = time.perf_counter()
    results, details, secs = [], [], 0.0
    for n, tau, dy in (BASE, REFINED):
        problem, traj, fv, tj, tf = _rm(n, tau, dy)
        c = compare(problem, traj, fv, (0.1, 0.3, 0.5), L1_TOL)
        results.append(c.l1_jko_vs_fv)
        secs = secs or tj + tf
        details.append(f"n = {n}, tau = {tau:g}, dy = {dy:g}: L1 = " +
                       ", ".join(f"{d:.4e}" for d in c.l1_jko_vs_fv) +
                       " at t = 0.1, 0.3, 0.5; W2 = " + ", ".join(f"{d:.3e}" for d in c.w2_jko_vs_fv) +
                       f" (JKO {tj:.1f} s, FV {tf:.1f} s)")
    base, fine = results
    ok = bool(np.all(base <= L1_TOL) and np.all(fine < base) and secs <= 300)
    details.append(f"base run time {secs:.1f} s (limit 300 s)")
    return CriterionResult(2, "JKO vs monotone FV under b = 0.5 exp(-y^2)", ok, details,
                           time.perf_counter() - start + secs)


def criterion_3() -> CriterionResult:
    _fetch(("bb", BASE[:2]), ("bb", REFINED[:2]), ("riemann", BASE), ("riemann", REFINED))
    start = time.perf_counter()
    ok, details = True, []
    runs = [(f"Barenblatt n = {n}, tau = {t:g}", _bb(n, t)[1]) for n, t, _ in (BASE, REFINED)]
    runs += [(f"Riemann n = {n}, tau = {t:g}", _rm(n, t, dy)[1]) for n, t, dy in (BASE, REFINED)]
    for name, traj in runs:
        for c in energy_checks(traj, rel=1e-10):
            ok &= c.passed
            details.append(f"{name}: {'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    return CriterionResult(3, "discrete energy estimates", ok, details, time.perf_counter() - start)


def criterion_4() -> CriterionResult:
    start = time.perf_counter()
    problem, traj, *_ = _rm(*BASE)
    c = holder_check(traj, holder_times(problem.cfg))
    return CriterionResult(4, "Holder bound in W2", c.passed, [c.detail], time.perf_counter() - start)


def criterion_5() -> CriterionResult:
    problem, traj, fv, *_ = _rm(*BASE)
    start = time.perf_counter()
    reps = entropy_sweeps(problem, traj, fv)
    secs = time.perf_counter() - start
    tol = 5e-3
    details = [f"{name}: {len(r.entries)} entries (16 k x 8 tests), min residual {r.min_residual:.4e}, "
               f"worst residual/scale {r.worst_ratio:.4e} (need >= {-tol:g})" for name, r in reps.items()]
    details.append(f"sweep time {secs:.1f} s (limit 120 s)")
    ok = all(r.passed(tol) for r in reps.values()) and len(reps) == 2 and secs <= 120
    return CriterionResult(5, "entropy inequality sweep (FV and JKO)", ok, details, secs)


def _fv_max_principle(problem, fv, tol: float):
    """Excess of the FV snapshots, rescaled to x, over ``k a^(-1/(m-1))``."""
    ef, rho0 = problem.ef, problem.rho0
    k = max_principle_level(rho0, ef)
    bound = k * ef.a(rho0.centers) ** (-1.0 / (ef.m - 1))
    excess = [float(np.max(rescale(u, problem.tc.T, rho0.x_min, rho0.dx, rho0.cells).values - bound))
              for u in fv.states]
    return max(excess), int(sum(e > tol for e in excess)), len(excess)


def criterion_6() -> CriterionResult:
    start = time.perf_counter()
    tol = 1e-3
    ok, details = True, []
    for n, tau, dy in (BASE, REFINED):
        problem, traj, _ = _bb(n, tau)
        c = max_principle_check(problem, traj, tol)
        ok &= c.passed
        details.append(f"Barenblatt n = {n}: {c.detail}")
        problem, traj, fv, *_ = _rm(n, tau, dy)
        c = max_principle_check(problem, traj, tol)
        ok &= c.passed
        details.append(f"Riemann n = {n}: {c.detail}")
        worst, bad, count = _fv_max_principle(problem, fv, tol)
        ok &= bad == 0
        details.append(f"Riemann FV dy = {dy:g} in x: {count} snapshots, max excess = {worst:.3e}, violations = {bad}")
    return CriterionResult(6, "maximum principle", ok, details, time.perf_counter() - start)


def _paired(b, dy=1e-2, t_end=0.5):
    ylo, yhi = -2.5, 2.5
    cells = int(round((yhi - ylo) / dy))
    u0 = GridDensity.from_function(riemann_smoothed(), ylo, yhi, cells)
    v0 = GridDensity.from_function(double_bump(), ylo, yhi, cells)
    times = np.round(np.arange(1, 51) * 0.01, 12)
    cfg = FvConfig(ylo, dy, cells, 1.0, t_end)
    return fv_run(u0, b, 2.0, cfg, times), fv_run(v0, b, 2.0, cfg, times)


def criterion_7() -> CriterionResult:
    start = time.perf_counter()
    details = []
    b = gaussian_b(0.5, 1.0)
    u, v = _paired(b)
    sup = max(float(np.max(s.values)) for s in u.states + v.states)
    C = gronwall_constant(2.0, sup, b)
    r1 = gronwall_check(u, v, C, rel=1e-3)
    details.append(f"b = 0.5 exp(-y^2): C = {C:.4f}, {r1.times.size} samples, violations = {r1.violations}, "
                   f"d(0) = {r1.distances[0]:.4e}, d(0.5) = {r1.distances[-1]:.4e}")
    u, v = _paired(zero_b())
    r0 = gronwall_check(u, v, 0.0, rel=1e-3)
    details.append(f"b = 0: violations of d(t2) <= d(t1) = {r0.violations}, "
                   f"d(0) = {r0.distances[0]:.4e}, d(0.5) = {r0.distances[-1]:.4e}")
    return CriterionResult(7, "L1 quasi-stability", r1.passed and r0.passed, details, time.perf_counter() - start)


def criterion_8() -> CriterionResult:
    start = time.perf_counter()
    flat = check_kappa_convexity(EnergyFunctional.constant(2.0), (-5.0, 5.0))
    wavy_ef = EnergyFunctional.analytic(2.0, lambda x: 2 + np.sin(x), np.cos, lambda x: -np.sin(x))
    wavy = check_kappa_convexity(wavy_ef, (-5.0, 5.0))
    secs = time.perf_counter() - start
    ok = flat.kappa == 0.0 and wavy.kappa is None and wavy.witness is not None and secs <= 10
    return CriterionResult(8, "convexity certificate", ok,
                           [f"a = 2 (m = 2): {flat.verdict}", f"a = 2 + sin x: {wavy.verdict}"], secs)


def criterion_9() -> CriterionResult:
    start = time.perf_counter()
    checks = transform_checks(gaussian_b(0.5, 1.0), 2.0, riemann_smoothed())
    return CriterionResult(9, "transform round trip", all(c.passed for c in checks),
                           [f"{c.name}: {c.detail}" for c in checks], time.perf_counter() - start)


def criterion_10() -> CriterionResult:
    start = time.perf_counter()
    problem, traj, *_ = _rm(*BASE)
    c = second_moment_check(traj, problem.ef, problem.tc.x_window, rel=1e-6)
    return CriterionResult(10, "second-moment growth", c.passed, [c.detail], time.perf_counter() - start)


CRITERIA = {i: f for i, f in enumerate(
    [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
     criterion_8, criterion_9, criterion_10], 1)}


def run_criteria(ids=None, jobs: int = 1) -> list[CriterionResult]:
    set_jobs(jobs)
    ids = sorted(CRITERIA) if ids is None else [int(i) for i in ids]
    unknown = [i for i in ids if i not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}; choose from 1-{len(CRITERIA)}")
    return [CRITERIA[i]() for i in ids]
