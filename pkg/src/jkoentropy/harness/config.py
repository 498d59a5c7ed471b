"""Experiment configuration in TOML, validated field by field.

Example::

    [problem]
    m = 2.0
    b_preset = "gaussian"            # zero | gaussian | smoothed_indicator | table
    b_params = { amplitude = 0.5 }
    y_window = [-2.5, 2.5]

    [initial]
    preset = "riemann_smoothed"

    [jko]
    tau = 1e-3
    n_quantiles = 400
    t_end = 0.5

    [fv]
    dy = 5e-3

Every section and key is optional except ``problem.m``.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..transform import ConvectionCoefficient, preset_b, table_b
from .presets import INITIAL_PRESETS, initial_profile


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str, line: int | None = None):
        where = f" (line {line})" if line else ""
        super().__init__(f"{field_name}{where}: {message}")
        self.field = field_name
        self.line = line


@dataclass(frozen=True)
class ProblemConfig:
    m: float
    b_preset: str = "zero"
    b_params: dict = field(default_factory=dict)
    b_table: dict | None = None
    alpha0: float = 1.0
    y_window: tuple = (-2.5, 2.5)
    coefficient_window: tuple | None = None
    tabulation_step: float = 1e-3

    @property
    def coefficient_y_window(self) -> tuple:
        if self.coefficient_window is not None:
            return tuple(self.coefficient_window)
        lo, hi = self.y_window
        pad = 0.2 * (hi - lo)
        return (lo - pad, hi + pad)


@dataclass(frozen=True)
class InitialConfig:
    preset: str = "barenblatt"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class JkoSection:
    tau: float = 1e-3
    n_quantiles: int = 400
    t0: float = 0.0
    t_end: float = 0.5
    inner_tol: float = 1e-10
    inner_max_iter: int = 100
    x_dx: float = 1e-3


@dataclass(frozen=True)
class FvSection:
    dy: float = 5e-3
    dt: float = 1.0
    nu: float = 0.0
    cfl_safety: float = 0.45


@dataclass(frozen=True)
class ChecksConfig:
    compare_times: tuple = (0.1, 0.3, 0.5)
    snapshot_dt: float = 0.005
    k_levels: int = 16
    test_functions: int = 8
    test_y_range: tuple | None = None
    entropy_rel_tol: float = 5e-3
    max_principle_tol: float = 1e-3
    l1_tol: float = 5e-2


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    initial: InitialConfig = InitialConfig()
    jko: JkoSection = JkoSection()
    fv: FvSection = FvSection()
    checks: ChecksConfig = ChecksConfig()
    stages: tuple = ("jko", "fv", "compare", "entropy", "diagnostics")
    output_dir: str = "out"
    seed: int = 0

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def with_output(self, out) -> "ExperimentConfig":
        return replace(self, output_dir=str(out))

    def b(self) -> ConvectionCoefficient:
        p = self.problem
        if p.b_preset == "table":
            t = p.b_table or {}
            data = np.loadtxt(t["file"], delimiter=",", comments="#") if "file" in t else None
            y = np.asarray(t["y"] if data is None else data[:, 0], dtype=float)
            v = np.asarray(t["values"] if data is None else data[:, 1], dtype=float)
            coeff = table_b(y, v, t["l1_norm_bound"], t["lipschitz_bound"])
            coeff.check((float(y[0]) - 1.0, float(y[-1]) + 1.0))
            return coeff
        return preset_b(p.b_preset, **p.b_params)

    def initial_profile(self):
        return initial_profile(self.initial.preset, self.problem.m, self.initial.params)

    @property
    def y_cells(self) -> int:
        lo, hi = self.problem.y_window
        return int(round((hi - lo) / self.fv.dy))

    @property
    def snapshot_times(self) -> np.ndarray:
        j, c = self.jko, self.checks
        count = int(round((j.t_end - j.t0) / c.snapshot_dt))
        return np.round(j.t0 + c.snapshot_dt * np.arange(count + 1), 12)


_SECTIONS = {
    "problem": ProblemConfig, "initial": InitialConfig, "jko": JkoSection, "fv": FvSection,
    "checks": ChecksConfig,
}
_TOP = {"stages", "output_dir", "seed"}
_STAGES = {"jko", "fv", "compare", "entropy", "diagnostics"}


def _line_of(text: str, section: str | None, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML syntax error: {exc}") from None

    def fail(sec, key, msg):
        raise ConfigError(f"{sec}.{key}" if sec else key, msg, _line_of(text, sec, key))

    for key in raw:
        if key not in _SECTIONS and key not in _TOP:
            fail(None, key, "unknown section or key")
    sections = {}
    for name, cls in _SECTIONS.items():
        body = raw.get(name, {})
        if not isinstance(body, dict):
            fail(None, name, "must be a table")
        known = set(cls.__dataclass_fields__)
        for key in body:
            if key not in known:
                fail(name, key, f"unknown key; expected one of {', '.join(sorted(known))}")
        kw = {}
        for key, value in body.items():
            default = cls.__dataclass_fields__[key].default
            if isinstance(value, list):
                value = tuple(value)
            if isinstance(default, bool):
                pass
            elif isinstance(default, int) and not isinstance(value, int):
                fail(name, key, f"must be an integer, got {value!r}")
            elif isinstance(default, float) and not isinstance(value, (int, float)):
                fail(name, key, f"must be a number, got {value!r}")
            elif isinstance(default, float):
                value = float(value)
            kw[key] = value
        sections[name] = kw

    if "m" not in sections["problem"]:
        fail("problem", "m", "required")
    p = sections["problem"]
    if not isinstance(p["m"], (int, float)) or not p["m"] > 1:
        fail("problem", "m", f"must exceed 1, got {p['m']!r}")
    p["m"] = float(p["m"])
    if p.get("b_preset", "zero") == "constant_nonzero":
        fail("problem", "b_preset", "'constant_nonzero' is not supported: a constant nonzero b is not "
             "integrable and the coordinate map degenerates (excluded by the theory this tool checks)")
    if p.get("b_preset", "zero") not in ("zero", "gaussian", "smoothed_indicator", "table"):
        fail("problem", "b_preset", f"unknown preset {p['b_preset']!r}")
    if p.get("b_preset") == "table":
        t = p.get("b_table")
        if not isinstance(t, dict) or not {"l1_norm_bound", "lipschitz_bound"} <= set(t) or not (
                "file" in t or {"y", "values"} <= set(t)):
            fail("problem", "b_table", "needs l1_norm_bound, lipschitz_bound and either file or y/values")
    for key in ("y_window", "coefficient_window"):
        w = p.get(key)
        if w is not None and (len(w) != 2 or not w[0] < 0 < w[1]):
            fail("problem", key, f"must be [lo, hi] with lo < 0 < hi, got {w!r}")
    if not p.get("alpha0", 1.0) > 0:
        fail("problem", "alpha0", "must be positive")
    if not p.get("tabulation_step", 1e-3) > 0:
        fail("problem", "tabulation_step", "must be positive")

    init = sections["initial"]
    if init.get("preset", "barenblatt") not in INITIAL_PRESETS:
        fail("initial", "preset", f"unknown preset {init['preset']!r}; choose one of {', '.join(INITIAL_PRESETS)}")

    j = sections["jko"]
    for key in ("tau", "inner_tol", "x_dx"):
        if key in j and not j[key] > 0:
            fail("jko", key, "must be positive")
    if j.get("n_quantiles", 400) < 8:
        fail("jko", "n_quantiles", "must be at least 8")
    if j.get("t_end", 0.5) <= j.get("t0", 0.0):
        fail("jko", "t_end", "must exceed jko.t0")

    f = sections["fv"]
    for key in ("dy", "dt"):
        if key in f and not f[key] > 0:
            fail("fv", key, "must be positive")
    if f.get("nu", 0.0) < 0:
        fail("fv", "nu", "must be nonnegative")
    if not 0 < f.get("cfl_safety", 0.45) < 1:
        fail("fv", "cfl_safety", "must lie in (0, 1)")

    c = sections["checks"]
    span = j.get("t_end", 0.5) - j.get("t0", 0.0)
    if not 0 < c.get("snapshot_dt", 0.005) <= span / 100 * (1 + 1e-9):
        # test-function time bumps are at least 10% of the span wide; keep >= 10 samples across each
        fail("checks", "snapshot_dt", f"must lie in (0, (t_end - t0)/100] = (0, {span / 100:g}]")
    for key in ("k_levels", "test_functions"):
        if c.get(key, 1) < 1:
            fail("checks", key, "must be at least 1")

    stages = tuple(raw.get("stages", ExperimentConfig.stages))
    bad = [s for s in stages if s not in _STAGES]
    if bad:
        fail(None, "stages", f"unknown stages {bad}; choose from {sorted(_STAGES)}")

    cfg = ExperimentConfig(
        problem=ProblemConfig(**p),
        initial=InitialConfig(**init),
        jko=JkoSection(**j),
        fv=FvSection(**f),
        checks=ChecksConfig(**c),
        stages=stages,
        output_dir=str(raw.get("output_dir", "out")),
        seed=int(raw.get("seed", 0)),
    )
    try:
        cfg.b()
    except (ValueError, KeyError, OSError, TypeError) as exc:
        raise ConfigError("problem.b_params" if p.get("b_preset") != "table" else "problem.b_table",
                          str(exc)) from None
    try:
        profile = cfg.initial_profile()
    except ValueError as exc:
        raise ConfigError("initial.params", str(exc)) from None
    _check_window(cfg, profile, fail)
    return cfg


def _check_window(cfg: ExperimentConfig, profile, fail) -> None:
    """At least ``1 - 1e-8`` of the initial mass must lie inside ``problem.y_window``."""
    lo, hi = cfg.problem.y_window
    L = hi - lo
    y = np.linspace(lo - 4 * L, hi + 4 * L, 90001)
    f = np.clip(np.asarray(profile(y), dtype=float), 0, None)
    total = trapezoid(f, y)
    inside = (y >= lo) & (y <= hi)
    outside = total - trapezoid(f[inside], y[inside])
    if not total > 0:
        fail("initial", "preset", "initial profile has no mass")
    if outside / total > 1e-8:
        fail("problem", "y_window", f"only {1 - outside / total:.10f} of the initial mass lies inside")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text)


DEFAULT_CONFIG = """\
# Smoothed Riemann datum under b(y) = 0.5 exp(-y^2), m = 2
output_dir = "out"
seed = 0

[problem]
m = 2.0
b_preset = "gaussian"
b_params = { amplitude = 0.5, width = 1.0 }
y_window = [-2.5, 2.5]

[initial]
preset = "riemann_smoothed"
params = { left = 0.7, right = 0.3, lo = -1.0, mid = 0.0, hi = 1.0, width = 0.1 }

[jko]
tau = 1e-3
n_quantiles = 400
t_end = 0.5

[fv]
dy = 5e-3

[checks]
compare_times = [0.1, 0.3, 0.5]
snapshot_dt = 0.005
"""
