"""Experiment orchestration: single runs, seeded ensembles and parameter sweeps."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
import csv
from dataclasses import dataclass, field
import itertools
import math
import os
import time

import numpy as np

from . import __version__
from .diagnostics import (
    absorbing_constants,
    check_absorption,
    check_grouped_dissipation,
    check_symmetry,
    check_time_avg_gradients,
    check_vz_decay,
    default_burn_in,
    tail_bound_report,
    truncated_h1_report,
)
from .discretization import estimate_embedding_constant
from .dynamics import initial_data, scale_to_norm, simulate
from .errors import BrusselatorError, ConfigError, InvalidArgumentError, NumericalError
from .io import SNAPSHOT_VERSION, format_summary, format_value, write_snapshot, write_timeseries
from .variational import DimensionInputs, attractor_gradient_bound, dimension_bound, trace_qm

__all__ = ["RunReport", "run_experiment", "sweep", "SWEEP_COLUMNS"]

_CHECKS = ("vz_decay", "y_dissipation", "psi_dissipation", "absorption", "time_avg_gradients",
           "symmetry", "tails", "truncated_h1")


@dataclass
class RunReport:
    """Everything a run produced, flattened to ``section.key = value`` entries.

    ``status`` is ``"ok"``, ``"numerical-failure"`` or ``"error"``.
    ``checks`` maps ``(seed, name)`` to ``(passed, fields)``; skipped checks
    are absent.
    """

    config: object
    status: str = "ok"
    error: str = ""
    constants: dict = field(default_factory=dict)
    burn_in: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    trace: dict = field(default_factory=dict)
    dimension: dict = field(default_factory=dict)
    sup_norm_sq: float = math.nan
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    @property
    def all_passed(self):
        return self.status == "ok" and all(p for p, _ in self.checks.values())

    def check_passed(self, name):
        """``True``/``False`` over all seeds, ``None`` if the check never ran."""
        flags = [p for (_, n), (p, _) in self.checks.items() if n == name]
        return all(flags) if flags else None

    @property
    def exit_code(self):
        if self.status == "numerical-failure":
            return 3
        if self.status == "error":
            return 2
        return 0 if self.all_passed else 1

    def q_max(self, m):
        return self.trace.get(m, {}).get("max", math.nan)

    def entries(self):
        out = [("version.package", __version__), ("version.snapshot_format", SNAPSHOT_VERSION)]
        out += [("config." + k, v) for k, v in self.config.echo()]
        out += [("run.status", self.status), ("run.error", self.error or "none"),
                ("run.all_passed", self.all_passed)]
        out += [("constants." + k, v) for k, v in self.constants.items()]
        out += [(f"burn_in.seed{s}", v) for s, v in self.burn_in.items()]
        out.append(("run.sup_norm_sq", self.sup_norm_sq))
        for (seed, name), (passed, fields) in self.checks.items():
            key = f"check.seed{seed}.{name}"
            out.append((key + ".passed", passed))
            out += [(f"{key}.{k}", v) for k, v in fields.items()]
        out += [("check.skipped", ", ".join(self.skipped) if self.skipped else "none")]
        for m, row in self.trace.items():
            out += [(f"trace.q{m}.{k}", v) for k, v in row.items()]
        out += [("dimension." + k, v) for k, v in self.dimension.items()]
        out += [("timing." + k, v) for k, v in self.timings.items()]
        return out

    def summary_text(self):
        return format_summary(self.entries())


def _scalars(d):
    out = {}
    for k, v in d.items():
        if v is None or isinstance(v, (bool, int, float, np.floating, np.integer, str)):
            out[k] = v
    return out


def _record(report, seed, rep):
    fields = {"worst_margin": rep.worst_margin, "tolerance": rep.tolerance, "samples": int(rep.margins.size)}
    fields.update(_scalars(rep.extras))
    report.checks[(seed, rep.name)] = (bool(rep.passed), fields)


def _diagnose(report, cfg, consts, traj, seed, burn_in, delta):
    if cfg.diag_decay:
        _record(report, seed, check_vz_decay(traj, consts, rel_tol=cfg.rel_tol))
        for rep in check_grouped_dissipation(traj, consts, rel_tol=cfg.rel_tol):
            _record(report, seed, rep)
    after = traj.t_end > burn_in
    if cfg.diag_absorption:
        if after:
            _record(report, seed, check_absorption(traj, consts, burn_in))
        else:
            report.skipped.append(f"seed{seed}.absorption")
        if cfg.window <= traj.t_end - burn_in:
            _record(report, seed, check_time_avg_gradients(traj, consts, cfg.window, burn_in, cfg.rel_tol))
        else:
            report.skipped.append(f"seed{seed}.time_avg_gradients")
    if cfg.diag_symmetry:
        _record(report, seed, check_symmetry(traj))
    if cfg.diag_tails or cfg.diag_truncated_h1:
        tails = tail_bound_report(traj, consts, cfg.epsilon, burn_in)
        if cfg.diag_tails:
            report.checks[(seed, "tails")] = (tails.passed, {
                "epsilon": tails.epsilon, "M": tails.M, "k": tails.k, "samples": int(tails.times.size),
                "max_vz_mass": float(tails.vz_mass.max()) if tails.vz_mass.size else 0.0,
                "max_uw_mass": float(tails.uw_mass.max()) if tails.uw_mass.size else 0.0,
                "vz_bound": tails.vz_bound, "uw_bound": tails.uw_bound,
                "measure_ok": tails.measure_ok, "threshold_time": tails.threshold_time,
            })
        if cfg.diag_truncated_h1:
            h1 = truncated_h1_report(traj, consts, tails.M, burn_in, delta)
            report.checks[(seed, "truncated_h1")] = (h1.passed, {
                "M": h1.M, "samples": int(h1.times.size), "delta": h1.delta,
                "max_vz_energy": float(h1.vz_energy.max()) if h1.vz_energy.size else 0.0,
                "max_u_energy": float(h1.u_energy.max()) if h1.u_energy.size else 0.0,
                "max_w_energy": float(h1.w_energy.max()) if h1.w_energy.size else 0.0,
                "vz_bound": h1.vz_bound, "uw_bound": h1.uw_bound,
            })


def _write_trajectory(report, out_dir, seed, traj):
    if out_dir is None:
        return
    csv_path = os.path.join(out_dir, f"timeseries_seed{seed}.csv")
    write_timeseries(csv_path, traj)
    report.outputs.append(csv_path)
    snap_dir = os.path.join(out_dir, "snapshots", f"seed{seed}")
    os.makedirs(snap_dir, exist_ok=True)
    for i, (t, s) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
        write_snapshot(os.path.join(snap_dir, f"snap_{i:06d}.bin"), s, t)
    report.outputs.append(snap_dir)


def run_experiment(cfg, out_dir=None, simulate_runs=True):
    """Run the simulations and diagnostics selected by ``cfg``.

    Parameters
    ----------
    cfg : ExperimentConfig
    out_dir : str, optional
        Directory for the time-series CSV, snapshots and ``summary.txt``.
        Nothing is written when ``None``.
    simulate_runs : bool
        ``False`` computes the closed-form constants only.

    Returns
    -------
    RunReport
        Failures are captured in the report (``status`` and ``error``);
        outputs written before the failure are kept.
    """
    report = RunReport(config=cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    t_start = time.perf_counter()
    try:
        grid, params, step_cfg = cfg.grid(), cfg.params(), cfg.stepper()
        consts = absorbing_constants(params, grid)
        report.constants = consts.as_dict()
        report.constants["dt"] = step_cfg.dt
        if simulate_runs:
            _simulate_all(report, cfg, grid, params, step_cfg, consts, out_dir)
    except NumericalError as err:
        report.status, report.error = "numerical-failure", str(err)
    except BrusselatorError as err:
        report.status, report.error = "error", str(err)
    report.timings["total_s"] = time.perf_counter() - t_start
    if out_dir is not None:
        path = os.path.join(out_dir, "summary.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(report.summary_text())
        report.outputs.append(path)
    return report


def _simulate_all(report, cfg, grid, params, step_cfg, consts, out_dir):
    delta = None
    if cfg.diag_truncated_h1 or cfg.diag_dimension:
        delta = cfg.dim_delta if cfg.dim_delta is not None else estimate_embedding_constant(grid)
    trajs = {}
    sups = []
    for seed in cfg.seeds:
        g0 = initial_data(grid, cfg.preset, cfg.amplitude, seed)
        if cfg.initial_norm_k0 > 0:
            g0 = scale_to_norm(g0, cfg.initial_norm_k0 * consts.K0)
        vz0 = float(np.sum(g0.data[[1, 3]] ** 2) * grid.cell_volume)
        burn_in = cfg.burn_in if cfg.burn_in is not None else default_burn_in(consts, vz0)
        report.burn_in[seed] = burn_in
        t0 = time.perf_counter()
        try:
            traj = simulate(g0, params, step_cfg, cfg.t_end, cfg.stride)
        except NumericalError as err:
            partial = getattr(err, "partial", None)
            if partial is not None and partial.times.size:
                _write_trajectory(report, out_dir, seed, partial)
            raise
        report.timings[f"simulate_seed{seed}_s"] = time.perf_counter() - t0
        _write_trajectory(report, out_dir, seed, traj)
        total = traj["l2sq_u"] + traj["l2sq_v"] + traj["l2sq_w"] + traj["l2sq_z"]
        sel = traj.times > burn_in
        if np.any(sel):
            sups.append(float(total[sel].max()))
        _diagnose(report, cfg, consts, traj, seed, burn_in, delta)
        trajs[seed] = (traj, burn_in)
    report.sup_norm_sq = max(sups) if sups else math.nan

    if cfg.diag_trace:
        t0 = time.perf_counter()
        for m in cfg.trace_m:
            vals = {}
            for seed, (traj, _) in trajs.items():
                vals[seed] = trace_qm(traj.final_state, m, cfg.trace_T, params, step_cfg,
                                      burn_in=cfg.trace_burn_in, reorth_every=cfg.trace_reorth, seed=seed)
            row = {"max": max(vals.values()), "min": min(vals.values())}
            row.update({f"seed{s}": v for s, v in vals.items()})
            report.trace[m] = row
        report.timings["trace_s"] = time.perf_counter() - t0

    if cfg.diag_dimension:
        K1s = [attractor_gradient_bound(tr, b) for tr, b in trajs.values() if tr.t_end > b]
        if not K1s:
            report.skipped.append("dimension")
            return
        K1 = max(K1s)
        inputs = DimensionInputs(K1=K1, delta=delta, n=grid.dim, d0=min(params.d1, params.d2),
                                 K3=cfg.dim_K3, C_gn=cfg.dim_C_gn)
        if K1 <= 0:
            raise InvalidArgumentError("attractor gradient estimate is zero; dimension bound undefined")
        res = dimension_bound(params, grid, inputs)
        report.dimension = {
            "K1_estimate": K1, "delta": inputs.delta, "C_gn": inputs.C_gn, "K3": inputs.K3,
            "K3_status": res.notes["K3"], "K2": res.K2, "K2_status": res.notes["K2"],
            "ratio": res.ratio, "threshold": res.threshold, "m": res.m,
            "hausdorff_bound": res.hausdorff_bound, "fractal_bound": res.fractal_bound,
        }


SWEEP_COLUMNS = ("run", "status") + ("d1", "d2", "a", "b", "D1", "D2") + tuple(
    f"pass_{c}" for c in _CHECKS) + ("sup_norm_sq", "K0", "q_m", "m", "error")


def _sweep_row(index, point, report):
    row = {"run": index, "status": report.status, "error": report.error}
    cfg = report.config
    for k in ("d1", "d2", "a", "b", "D1", "D2"):
        row[k] = getattr(cfg, k)
    row.update(point)
    for c in _CHECKS:
        flag = report.check_passed(c)
        row[f"pass_{c}"] = "n/a" if flag is None else flag
    row["sup_norm_sq"] = report.sup_norm_sq
    row["K0"] = report.constants.get("K0", math.nan)
    row["q_m"] = report.q_max(max(cfg.trace_m)) if report.trace else math.nan
    row["m"] = report.dimension.get("m", "")
    return row


def _sweep_job(args):
    index, cfg, point, out_dir = args
    try:
        return index, run_experiment(cfg.with_values(**point), out_dir)
    except Exception as err:  # crash isolation: one bad run must not abort the sweep
        rep = RunReport(config=cfg, status="error", error=f"{type(err).__name__}: {err}")
        return index, rep


def sweep(cfg, axes=None, out_dir=None, workers=1):
    """Run the Cartesian product of ``axes`` (default: the config's sweep axes).

    Parameters
    ----------
    axes : list of (key, values)
        Numeric config keys and the values to try.
    workers : int
        Size of the process pool; ``1`` runs in-process.

    Returns
    -------
    reports : list of RunReport
    rows : list of dict
        One aggregate row per run (also written to ``sweep.csv``).
    """
    axes = list(cfg.sweep if axes is None else axes)
    if not axes:
        raise ConfigError("sweep needs at least one axis (sweep.<key> = v1, v2, ...)")
    keys = [k for k, _ in axes]
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]
    jobs = []
    for i, point in enumerate(points):
        jobs.append((i, cfg, point, None if out_dir is None else os.path.join(out_dir, f"run_{i:03d}")))
    workers = max(1, int(workers))
    results = {}
    if workers == 1:
        for job in jobs:
            i, rep = _sweep_job(job)
            results[i] = rep
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = {pool.submit(_sweep_job, job): job for job in jobs}
            for fut, job in futures.items():
                try:
                    i, rep = fut.result()
                except BrokenProcessPool as err:
                    i, rep = job[0], RunReport(config=cfg, status="error", error=f"worker crashed: {err}")
                results[i] = rep
    reports = [results[i] for i in range(len(jobs))]
    rows = [_sweep_row(i, points[i], rep) for i, rep in enumerate(reports)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cols = ("run",) + tuple(k for k in keys if k not in SWEEP_COLUMNS) + SWEEP_COLUMNS[1:]
        with open(os.path.join(out_dir, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                w.writerow([format_value(row.get(c, "")) for c in cols])
    return reports, rows
