"""One experiment end to end: coefficients, JKO and FV runs, comparison, checks, artifacts."""
from __future__ import annotations

import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..energy import EnergyFunctional
from ..entropycheck import SpaceTimeData, default_k_grid, default_test_bank, sweep
from ..jko import (CheckResult, JkoConfig, Trajectory, diagnostics_check, holder_check,
                   max_principle_excess, max_principle_level, run)
from ..measure1d import GridDensity, Quantile, l1_distance, to_density, to_point_values, to_quantile, wasserstein2
from ..refsolver import FvConfig, GridTrajectory, fv_run
from ..transform import (ConvectionCoefficient, T_from_a, TransformedCoefficients, b_from_a, build_coefficients,
                         inverse_rescale, quantile_to_y, rescale)
from .config import ExperimentConfig
from .plotdata import emit_plotdata
from .presets import Barenblatt


class PipelineError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@dataclass
class Problem:
    """Everything derived from the config before any time stepping."""

    cfg: ExperimentConfig
    b: ConvectionCoefficient
    tc: TransformedCoefficients
    ef: EnergyFunctional
    u0: GridDensity
    rho0: GridDensity

    @property
    def m(self) -> float:
        return self.cfg.problem.m

    @property
    def y_grid(self) -> tuple[float, float, int]:
        return self.u0.x_min, self.u0.dx, self.u0.cells

    def is_barenblatt(self) -> bool:
        return self.cfg.initial.preset == "barenblatt" and self.b.name == "zero"

    def oracle(self, t: float) -> GridDensity:
        """Closed-form Barenblatt cell averages at run time ``t`` (b = 0 only)."""
        t_datum = float(self.cfg.initial.params.get("t0", 0.1))
        ylo, dy, cells = self.y_grid
        return Barenblatt(self.m).density(t_datum + t - self.cfg.jko.t0, ylo, ylo + dy * cells, cells)

    def jko_y_density(self, q: Quantile) -> GridDensity:
        return to_density(quantile_to_y(q, self.tc.T), *self.y_grid)

    def jko_y_points(self, q: Quantile) -> GridDensity:
        ylo, dy, cells = self.y_grid
        yc = ylo + dy * (np.arange(cells) + 0.5)
        return GridDensity(ylo, dy, to_point_values(quantile_to_y(q, self.tc.T), yc))


def build_problem(cfg: ExperimentConfig) -> Problem:
    p = cfg.problem
    b = cfg.b()
    tc = build_coefficients(b, p.m, p.alpha0, y_window=p.coefficient_y_window, h=p.tabulation_step)
    ef = EnergyFunctional.from_coefficients(tc)
    ylo, yhi = p.y_window
    u0 = GridDensity.from_function(cfg.initial_profile(), ylo, yhi, cfg.y_cells)
    dx = cfg.jko.x_dx
    xlo = float(tc.T_inverse(ylo)) - 2 * dx
    xhi = float(tc.T_inverse(yhi)) + 2 * dx
    cells = int(np.ceil((xhi - xlo) / dx))
    rho0 = rescale(u0, tc.T, xlo, dx, cells)
    return Problem(cfg, b, tc, ef, u0, rho0)


def jko_config(cfg: ExperimentConfig) -> JkoConfig:
    j = cfg.jko
    return JkoConfig(tau=j.tau, n_quantiles=j.n_quantiles, t_end=j.t_end, t0=j.t0,
                     inner_tol=j.inner_tol, inner_max_iter=j.inner_max_iter)


def run_jko(problem: Problem) -> Trajectory:
    return run(problem.rho0, problem.ef, jko_config(problem.cfg))


def run_fv(problem: Problem) -> GridTrajectory:
    cfg = problem.cfg
    ylo, dy, cells = problem.y_grid
    fc = FvConfig(ylo, dy, cells, cfg.fv.dt, cfg.jko.t_end, cfg.fv.nu, cfg.fv.cfl_safety, cfg.jko.t0)
    times = np.union1d(cfg.snapshot_times, np.asarray(cfg.checks.compare_times, dtype=float))
    return fv_run(problem.u0, problem.b, problem.m, fc, times)


def parallel_map(fn, items, jobs: int = 1) -> list:
    """``[fn(x) for x in items]``, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


@dataclass
class ComparisonResult:
    times: np.ndarray
    l1_jko_vs_fv: np.ndarray
    w2_jko_vs_fv: np.ndarray
    verdicts: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,l1_jko_vs_fv,w2_jko_vs_fv\n")
            for row in zip(self.times, self.l1_jko_vs_fv, self.w2_jko_vs_fv):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def compare(problem: Problem, traj: Trajectory, fv: GridTrajectory, times=None, tol: float | None = None):
    cfg = problem.cfg
    times = np.asarray(cfg.checks.compare_times if times is None else times, dtype=float)
    tol = cfg.checks.l1_tol if tol is None else tol
    n = traj.states[0].n
    l1, w2 = [], []
    for t in times:
        q = traj.at(t)
        ref = fv.at(t)
        l1.append(l1_distance(problem.jko_y_density(q), ref))
        w2.append(wasserstein2(quantile_to_y(q, problem.tc.T), to_quantile(ref, n)))
    l1, w2 = np.array(l1), np.array(w2)
    verdicts = {f"L1(JKO, FV) at t = {t:g} <= {tol:g}": bool(d <= tol) for t, d in zip(times, l1)}
    return ComparisonResult(times, l1, w2, verdicts)


def entropy_bank(cfg: ExperimentConfig):
    """Test functions and k-levels for the sweep; deterministic in ``cfg.seed``."""
    c = cfg.checks
    if c.test_y_range is not None:
        yr = tuple(c.test_y_range)
    else:
        lo, hi = cfg.problem.y_window
        mid, half = 0.5 * (lo + hi), 0.36 * (hi - lo)
        yr = (mid - half, mid + half)
    return default_test_bank(yr, (cfg.jko.t0, cfg.jko.t_end), c.test_functions, cfg.seed)


def entropy_sweeps(problem: Problem, traj: Trajectory | None, fv: GridTrajectory | None) -> dict:
    cfg = problem.cfg
    times = cfg.snapshot_times
    bank = entropy_bank(cfg)
    ks = default_k_grid(float(np.max(problem.u0.values)), cfg.checks.k_levels)
    out = {}
    if fv is not None:
        data = SpaceTimeData.from_states(times, [fv.at(t) for t in times])
        out["fv"] = sweep(data, problem.b, problem.m, ks, bank)
    if traj is not None:
        data = SpaceTimeData.from_states(times, [problem.jko_y_points(traj.at(t)) for t in times])
        out["jko"] = sweep(data, problem.b, problem.m, ks, bank)
    return out


def holder_times(cfg: ExperimentConfig) -> np.ndarray:
    """Snapshot times plus times strictly between JKO steps."""
    grid = cfg.snapshot_times
    off = grid[:-1] + 0.37 * cfg.jko.tau
    return np.sort(np.concatenate([grid, off]))


def max_principle_check(problem: Problem, traj: Trajectory, tol: float | None = None) -> CheckResult:
    tol = problem.cfg.checks.max_principle_tol if tol is None else tol
    k = max_principle_level(problem.rho0, problem.ef)
    excess = np.array([max_principle_excess(q, problem.ef, k) for q in traj.states])
    bad = int(np.sum(excess > tol))
    return CheckResult("maximum principle", bad == 0,
                       f"k = {k:.6g}, {len(excess)} states, max excess = {float(np.max(excess)):.3e}, "
                       f"violations = {bad} (tol {tol:g})", float(np.max(excess)))


def run_diagnostics(problem: Problem, traj: Trajectory) -> list[CheckResult]:
    report = diagnostics_check(traj, problem.ef, problem.tc.x_window)
    return report.checks + [holder_check(traj, holder_times(problem.cfg)), max_principle_check(problem, traj)]


@dataclass
class PipelineResult:
    problem: Problem
    trajectory: Trajectory | None = None
    reference: GridTrajectory | None = None
    comparison: ComparisonResult | None = None
    entropy: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    oracle_l1: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def run_pipeline(cfg: ExperimentConfig, jobs: int = 1, write: bool = True) -> PipelineResult:
    stage = "transform"
    try:
        problem = build_problem(cfg)
        res = PipelineResult(problem)
        stages = set(cfg.stages)
        wanted = [s for s in ("jko", "fv") if s in stages]
        if jobs > 1 and len(wanted) == 2:
            stage = "jko/fv"
            res.trajectory, res.reference = parallel_map(_worker, [(s, cfg) for s in wanted], jobs)
        else:
            stage = "jko"
            res.trajectory = run_jko(problem) if "jko" in stages else None
            stage = "fv"
            res.reference = run_fv(problem) if "fv" in stages else None
        _checks(res, stages)
        if write:
            stage = "write"
            write_artifacts(res, cfg.output_dir)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, exc) from exc
    return res


def _worker(item):
    which, cfg = item
    problem = build_problem(cfg)
    return run_jko(problem) if which == "jko" else run_fv(problem)


def _checks(res: PipelineResult, stages: set) -> None:
    problem, cfg = res.problem, res.problem.cfg
    traj, fv = res.trajectory, res.reference
    if traj is not None:
        res.verdicts["JKO mass conservation"] = True  # quantile states carry unit mass by construction
    if fv is not None:
        drift = max(abs(s.mass - 1.0) for s in fv.states)
        res.verdicts[f"FV mass conservation (max drift {drift:.1e})"] = bool(drift <= 1e-8)
    if "compare" in stages and traj is not None and fv is not None:
        try:
            res.comparison = compare(problem, traj, fv)
        except Exception as exc:
            raise PipelineError("compare", exc) from exc
        res.verdicts.update(res.comparison.verdicts)
    if traj is not None and problem.is_barenblatt():
        for t in cfg.checks.compare_times:
            if cfg.jko.t0 <= t <= cfg.jko.t_end:
                d = l1_distance(problem.jko_y_density(traj.at(t)), problem.oracle(t))
                res.oracle_l1[float(t)] = d
                res.verdicts[f"L1(JKO, Barenblatt) at t = {t:g} <= {cfg.checks.l1_tol:g}"] = bool(
                    d <= cfg.checks.l1_tol)
    if "entropy" in stages:
        try:
            res.entropy = entropy_sweeps(problem, traj, fv)
        except Exception as exc:
            raise PipelineError("entropy", exc) from exc
        tol = cfg.checks.entropy_rel_tol
        for name, rep in res.entropy.items():
            res.verdicts[f"entropy inequality ({name}), worst ratio {rep.worst_ratio:.3e} >= -{tol:g}"] = \
                rep.passed(tol)
    if "diagnostics" in stages and traj is not None:
        try:
            res.diagnostics = run_diagnostics(problem, traj)
        except Exception as exc:
            raise PipelineError("diagnostics", exc) from exc
        for c in res.diagnostics:
            res.verdicts[c.name] = c.passed


def report_text(res: PipelineResult) -> str:
    cfg = res.problem.cfg
    p = cfg.problem
    lines = [
        "jkoentropy run report",
        f"m = {p.m:g}, b = {res.problem.b.name} {dict(p.b_params)}, initial = {cfg.initial.preset} "
        f"{dict(cfg.initial.params)}",
        f"jko: tau = {cfg.jko.tau:g}, n = {cfg.jko.n_quantiles}, t in [{cfg.jko.t0:g}, {cfg.jko.t_end:g}]",
        f"fv: dy = {cfg.fv.dy:g}, window = {tuple(p.y_window)}, nu = {cfg.fv.nu:g}",
        f"seed = {cfg.seed} (entropy test-bank placement)",
        "",
    ]
    if res.reference is not None:
        lines.append(f"FV steps: {res.reference.steps}")
    if res.comparison is not None:
        lines.append("comparison (JKO mapped to y vs FV):")
        for t, a, w in zip(res.comparison.times, res.comparison.l1_jko_vs_fv, res.comparison.w2_jko_vs_fv):
            lines.append(f"  t = {t:g}: L1 = {a:.6e}, W2 = {w:.6e}")
    for t, d in res.oracle_l1.items():
        lines.append(f"Barenblatt oracle t = {t:g}: L1 = {d:.6e}")
    for name, rep in res.entropy.items():
        lines.append(f"entropy sweep ({name}): {len(rep.entries)} entries, min residual = {rep.min_residual:.6e}, "
                     f"max scale = {rep.scale:.6e}, worst per-entry ratio = {rep.worst_ratio:.6e}")
    if res.diagnostics:
        lines.append("diagnostics (tolerances are engineering choices):")
        for c in res.diagnostics:
            lines.append(f"  {'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    lines.append("")
    lines.append("verdicts:")
    for name, ok in res.verdicts.items():
        lines.append(f"  {'PASS' if ok else 'FAIL'}  {name}")
    lines.append(f"overall: {'PASS' if res.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_artifacts(res: PipelineResult, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    tc = res.problem.tc
    tc.T.to_csv(os.path.join(out_dir, "T.csv"))
    tc.a.to_csv(os.path.join(out_dir, "a.csv"))
    plot = os.path.join(out_dir, "plot")
    for sub, obj in (("jko", res.trajectory), ("fv", res.reference)):
        path = os.path.join(out_dir, sub)
        if os.path.isdir(path):
            shutil.rmtree(path)
        if obj is not None:
            obj.save(path)
            emit_plotdata(obj, plot)
    if res.comparison is not None:
        res.comparison.to_csv(os.path.join(out_dir, "comparison.csv"))
        emit_plotdata(res.comparison, plot)
    for name, rep in res.entropy.items():
        rep.to_csv(os.path.join(out_dir, f"entropy_{name}.csv"))
    if res.diagnostics:
        with open(os.path.join(out_dir, "diagnostics.csv"), "w") as fh:
            fh.write("check,passed,worst\n")
            for c in res.diagnostics:
                fh.write(f"{c.name},{int(c.passed)},{c.worst!r}\n")
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report_text(res))


def transform_checks(b: ConvectionCoefficient, m: float, profile, y_window=(-2.5, 2.5),
                     coefficient_window=(-3.0, 3.0), dy: float = 5e-3, dx: float = 1e-3) -> list[CheckResult]:
    """Round trips of the coordinate change: b -> a -> b, the two routes to T, rescale mass."""
    tc = build_coefficients(b, m, y_window=coefficient_window)
    err_b = float(np.max(np.abs(b_from_a(tc.a, tc.T, m).values - b.b(tc.T.values))))
    err_T = float(np.max(np.abs(T_from_a(tc.a, m).values - tc.T.values)))
    ylo, yhi = y_window
    cells = int(round((yhi - ylo) / dy))
    u = GridDensity.from_function(profile, ylo, yhi, cells)
    xlo, xhi = float(tc.T_inverse(ylo)) - 2 * dx, float(tc.T_inverse(yhi)) + 2 * dx
    rho = rescale(u, tc.T, xlo, dx, int(np.ceil((xhi - xlo) / dx)))
    back = inverse_rescale(rho, tc.T, ylo, dy, cells)
    err_mass = max(abs(rho.mass - 1.0), abs(back.mass - 1.0))
    return [
        CheckResult("b -> a -> b sup error", err_b <= 1e-4, f"{err_b:.3e} (limit 1e-4)", err_b),
        CheckResult("T by ODE vs T by quadrature of a", err_T <= 1e-6, f"{err_T:.3e} (limit 1e-6)", err_T),
        CheckResult("rescale mass error", err_mass <= 1e-8, f"{err_mass:.3e} (limit 1e-8)", err_mass),
    ]
