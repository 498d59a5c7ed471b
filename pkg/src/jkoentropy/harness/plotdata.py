"""Whitespace-separated column files for gnuplot, with ``#`` header lines."""
from __future__ import annotations

import os

import numpy as np

from ..jko import Trajectory
from ..refsolver import GridTrajectory


def _columns(obj):
    if isinstance(obj, Trajectory):
        names = ["step", "time", "potential", "entropy", "second_moment", "w2_to_prev",
                 "h1_seminorm_of_rho_m_half", "lm_norm"]
        rows = [[i, obj.t0 + i * obj.tau, r.potential, r.entropy, r.second_moment, r.w2_to_prev,
                 r.h1_seminorm_of_rho_m_half, r.lm_norm] for i, r in enumerate(obj.per_step)]
        return "jko_diagnostics", names, rows
    if isinstance(obj, GridTrajectory):
        names = ["snapshot", "time", "mass", "sup"]
        rows = [[i, t, s.mass, float(np.max(s.values))] for i, (t, s) in enumerate(zip(obj.times, obj.states))]
        return "fv_snapshots", names, rows
    if hasattr(obj, "times") and hasattr(obj, "l1_jko_vs_fv"):
        names = ["time", "l1_jko_vs_fv", "w2_jko_vs_fv"]
        rows = [list(r) for r in zip(obj.times, obj.l1_jko_vs_fv, obj.w2_jko_vs_fv)]
        return "comparison", names, rows
    raise TypeError(f"no plot layout for {type(obj).__name__}")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def emit_plotdata(obj, output_dir, name: str | None = None) -> str:
    """Write ``<name>.dat``; returns the path.  Floats use ``repr`` and read back exactly."""
    default, names, rows = _columns(obj)
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, f"{name or default}.dat")
    with open(path, "w") as fh:
        fh.write(f"# {name or default}\n")
        fh.write("# " + " ".join(names) + "\n")
        for row in rows:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
    return path


def read_plotdata(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    if len(header) < 2:
        raise ValueError(f"{path}: missing column header")
    names = header[1][1:].split()
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    data = np.array([[float(x) for x in ln.split()] for ln in body]).reshape(len(body), len(names))
    return names, data
