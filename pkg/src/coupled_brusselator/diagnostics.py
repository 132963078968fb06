"""Closed-form dissipation constants and trajectory checks against them.

Every check compares a bound with an observed quantity sampled along a
:class:`~coupled_brusselator.dynamics.Trajectory` and returns margins
``bound - observed``; a check passes when its worst margin is at least
``-tolerance``.  Differential inequalities are checked in integrated form
between consecutive samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidArgumentError
from .fields import masked_grad_sq, tail_mass

__all__ = [
    "AbsorbingConstants",
    "InequalityReport",
    "TailReport",
    "TruncatedH1Report",
    "absorbing_constants",
    "default_burn_in",
    "vz_envelope",
    "check_vz_decay",
    "check_grouped_dissipation",
    "check_absorption",
    "check_time_avg_gradients",
    "check_symmetry",
    "tail_bound_report",
    "truncated_h1_report",
    "integrator_slack",
]


@dataclass(frozen=True)
class AbsorbingConstants:
    """Uniform constants of the absorbing-set and tail estimates.

    ``params``, ``measure`` and ``gamma`` are carried along so that every
    check derives its bounds from the same numbers.
    """

    params: object
    measure: float
    gamma: float
    R0: float
    R1: float
    R2: float
    K0: float
    C7: float
    C8: float
    L1: float
    Gamma1: float
    Gamma2: float
    L2: float

    def as_dict(self):
        keys = ("gamma", "R0", "R1", "R2", "K0", "C7", "C8", "L1", "Gamma1", "Gamma2", "L2")
        return {k: getattr(self, k) for k in keys}


def absorbing_constants(params, grid, gamma=None):
    """Evaluate ``R0, R1, R2, K0, C7, C8, L1, Gamma1, Gamma2, L2``.

    ``gamma`` defaults to the discrete Poincare constant ``grid.gamma``.
    """
    g = grid.gamma if gamma is None else float(gamma)
    if not g > 0:
        raise InvalidArgumentError("gamma must be positive")
    p = params
    om = grid.measure
    gd2 = g * p.d2
    dd = (p.d1 - p.d2) ** 2
    cD = (1.0 + 2.0 * (p.D1 - p.D2)) ** 2
    R0 = p.b**2 * om / gd2
    R1 = (1.0 + (4.0 * p.b**2 / gd2 + 8.0 * p.a**2) * om
          + 2.0 * dd / (p.d1 * p.d2) * (1.0 + 1.0 / (2.0 * gd2)) * p.b**2 * om)
    R2 = 1.0 + 2.0 * p.b**2 * om * (cD / gd2 + dd / (p.d1 * p.d2) * (1.0 + 1.0 / (2.0 * gd2)))
    K0 = 9.0 * R0 + 2.0 * (R1 + R2)
    C7 = p.b**2 * om / p.d2 * (1.0 + 1.0 / gd2)
    C8 = (2.0 * C7 * (1.0 + 2.0 * dd / p.d1**2)
          + (R1 + R2) / p.d1
          + 2.0 * K0 / p.d1 * (2.0 + cD)
          + om / p.d1 * ((4.0 * p.b**2 / gd2 + 8.0 * p.a**2) + cD * p.b**2 / gd2))
    L1 = 4.0 * p.b**2 / gd2
    Gamma1 = 1.0 + 4.0 * p.a**2 + p.b**2 * (1.0 + 1.0 / (2.0 * gd2)) * (2.0 * dd / (p.d1 * p.d2) + 4.0 / gd2)
    Gamma2 = 1.0 + 2.0 * p.b**2 * (1.0 + 1.0 / (2.0 * gd2)) * (dd / (p.d1 * p.d2) + cD / gd2)
    L2 = 2.0 * (Gamma1 + Gamma2 + 8.0 * p.b**2 / gd2)
    return AbsorbingConstants(
        params=params, measure=om, gamma=g, R0=R0, R1=R1, R2=R2, K0=K0, C7=C7, C8=C8,
        L1=L1, Gamma1=Gamma1, Gamma2=Gamma2, L2=L2,
    )


@dataclass(frozen=True)
class InequalityReport:
    """Margins ``bound - observed`` of one inequality along a trajectory."""

    name: str
    times: np.ndarray
    margins: np.ndarray
    worst_margin: float
    passed: bool
    tolerance: float
    extras: dict = field(default_factory=dict)


def _report(name, times, margins, tol, **extras):
    margins = np.asarray(margins, dtype=float)
    worst = float(np.min(margins)) if margins.size else math.inf
    return InequalityReport(
        name=name, times=np.asarray(times, dtype=float), margins=margins, worst_margin=worst,
        passed=bool(worst >= -tol), tolerance=float(tol), extras=extras,
    )


def _vz0(traj):
    return float(traj["l2sq_v"][0] + traj["l2sq_z"][0])


def _require(traj, *names):
    missing = [n for n in names if n not in traj.observables]
    if missing:
        raise InvalidArgumentError(f"trajectory lacks observables {missing}")


def vz_envelope(consts, vz0, t):
    p = consts.params
    rate = 2.0 * consts.gamma * p.d2
    return np.exp(-rate * np.asarray(t, dtype=float)) * vz0 + p.b**2 * consts.measure / rate


def default_burn_in(consts, vz0):
    """Time for the ``(v, z)`` envelope to come within 1% of its asymptote, at least 1."""
    p = consts.params
    rate = 2.0 * consts.gamma * p.d2
    arg = 100.0 * vz0 * rate / (p.b**2 * consts.measure)
    if arg <= 1.0:
        return 1.0
    return max(1.0, math.log(arg) / rate)


def check_vz_decay(traj, consts, rel_tol=1e-6, slack=0.0):
    """Check ``||v||^2 + ||z||^2`` against its exponential envelope at every sample."""
    _require(traj, "l2sq_v", "l2sq_z")
    env = vz_envelope(consts, _vz0(traj), traj.times)
    observed = traj["l2sq_v"] + traj["l2sq_z"]
    tol = rel_tol * float(env[0]) + slack
    return _report("vz_decay", traj.times, env - observed, tol, envelope_asymptote=float(env[-1]) if env.size else None)


def _trap(t, f):
    return 0.5 * (f[1:] + f[:-1]) * np.diff(t)


def check_grouped_dissipation(traj, consts, rel_tol=1e-6, slack=0.0):
    """Integrated forms of the ``y`` and ``psi`` energy inequalities.

    For each recorded interval ``[t_k, t_{k+1}]`` the increment of ``||y||^2``
    plus the integral of ``d1 ||grad y||^2 + ||y||^2`` is compared with the
    integral of ``|d1-d2|^2/d1 ||grad(v+z)||^2 + C1(t)``; likewise for
    ``psi`` with ``v - z`` and ``C3(t)``.  Time integrals use the trapezoidal
    rule.  Returns ``(y_report, psi_report)``.
    """
    _require(traj, "l2sq_y", "l2sq_psi", "gradsq_y", "gradsq_psi", "gradsq_vpz", "gradsq_vmz",
             "l2sq_v", "l2sq_z")
    p = consts.params
    t = traj.times
    vz0 = _vz0(traj)
    gd2 = consts.gamma * p.d2
    decay = np.exp(-2.0 * gd2 * t) * vz0
    coef = (p.d1 - p.d2) ** 2 / p.d1
    cD = (1.0 + 2.0 * (p.D1 - p.D2)) ** 2
    C1 = 4.0 * decay + (4.0 * p.b**2 / gd2 + 8.0 * p.a**2) * consts.measure
    C3 = 2.0 * cD * (decay + p.b**2 * consts.measure / (2.0 * gd2))

    reports = []
    for name, l2, gr, cross, C in (
        ("y_dissipation", traj["l2sq_y"], traj["gradsq_y"], traj["gradsq_vpz"], C1),
        ("psi_dissipation", traj["l2sq_psi"], traj["gradsq_psi"], traj["gradsq_vmz"], C3),
    ):
        lhs = np.diff(l2) + _trap(t, p.d1 * gr + l2)
        rhs = _trap(t, coef * cross + C)
        scale = float(np.max(np.abs(lhs) + np.abs(rhs))) if lhs.size else 0.0
        reports.append(_report(name, t[1:], rhs - lhs, rel_tol * scale + slack))
    return tuple(reports)


def _total_l2(traj):
    return traj["l2sq_u"] + traj["l2sq_v"] + traj["l2sq_w"] + traj["l2sq_z"]


def check_absorption(traj, consts, burn_in):
    """Check ``||g(t)||^2 < K0`` for every sample after ``burn_in``.

    The report also records the entry time, after which the trajectory never
    leaves the ball, and the ratio of the observed supremum to ``K0``.
    """
    _require(traj, "l2sq_u", "l2sq_v", "l2sq_w", "l2sq_z")
    if traj.t_end <= burn_in:
        raise InvalidArgumentError(f"t_end={traj.t_end} must exceed burn_in={burn_in}")
    total = _total_l2(traj)
    outside = np.nonzero(total > consts.K0)[0]
    if outside.size == 0:
        entry = float(traj.times[0])
    elif outside[-1] == total.size - 1:
        entry = None
    else:
        entry = float(traj.times[outside[-1] + 1])
    sel = traj.times > burn_in
    sup = float(np.max(total[sel]))
    margins = consts.K0 - total[sel]
    # strict inequality: a sample sitting exactly on the sphere fails
    rep = _report("absorption", traj.times[sel], margins, 0.0, observed_sup=sup,
                  ratio=sup / consts.K0, entry_time=entry, K0=consts.K0)
    if sup >= consts.K0:
        rep = InequalityReport(rep.name, rep.times, rep.margins, rep.worst_margin, False,
                               rep.tolerance, rep.extras)
    return rep


def _window_integrals(t, f, starts, window):
    cum = np.concatenate([[0.0], np.cumsum(_trap(t, f))])
    return np.interp(starts + window, t, cum) - np.interp(starts, t, cum)


def check_time_avg_gradients(traj, consts, window=1.0, burn_in=0.0, rel_tol=1e-6):
    """Sliding-window integrals of gradient energies against ``C7`` and ``C8``.

    ``int ||grad v||^2 + ||grad z||^2`` over ``[t, t + window]`` is compared
    with ``C7``; the full-domain ``int ||grad u||^2`` and ``int ||grad w||^2``
    (upper bounds of their truncated versions) are compared with ``C8``.
    Window starts are the recorded times in ``[burn_in, t_end - window]``.
    """
    _require(traj, "gradsq_u", "gradsq_v", "gradsq_w", "gradsq_z")
    if not window > 0:
        raise InvalidArgumentError("window must be positive")
    if window > traj.t_end - burn_in:
        raise InvalidArgumentError(
            f"window {window} longer than the trajectory after burn-in ({traj.t_end - burn_in})")
    t = traj.times
    starts = t[(t >= burn_in) & (t <= traj.t_end - window + 1e-12)]
    vz = _window_integrals(t, traj["gradsq_v"] + traj["gradsq_z"], starts, window)
    uu = _window_integrals(t, traj["gradsq_u"], starts, window)
    ww = _window_integrals(t, traj["gradsq_w"], starts, window)
    m_vz = consts.C7 - vz
    m_u = consts.C8 - uu
    m_w = consts.C8 - ww
    margins = np.minimum(m_vz, np.minimum(m_u, m_w))
    return _report(
        "time_avg_gradients", starts, margins, rel_tol * max(consts.C7, consts.C8),
        worst_vz=float(m_vz.min()), worst_u=float(m_u.min()), worst_w=float(m_w.min()),
        max_vz_integral=float(vz.max()), max_u_integral=float(uu.max()), max_w_integral=float(ww.max()),
        window=window,
    )


def check_symmetry(traj, rel_tol=1e-10):
    """Exchange-symmetry preservation: ``||u-w|| + ||v-z||`` stays at roundoff level.

    The tolerance is ``rel_tol * (1 + ||g0||)`` per unit time of the run.
    """
    _require(traj, "asym")
    g0 = math.sqrt(float(_total_l2(traj)[0]))
    tol = rel_tol * (1.0 + g0) * max(1.0, traj.t_end)
    return _report("symmetry", traj.times, -traj["asym"], tol, max_asymmetry=float(traj["asym"].max()))


def _snapshots_after(traj, burn_in):
    sel = traj.snapshot_times > burn_in
    return traj.snapshot_times[sel], traj.snapshots[sel]


@dataclass(frozen=True)
class TailReport:
    """Tail masses on ``{|v| >= M}`` and ``{|z| >= M}`` against ``L1 eps`` and ``L2 eps``."""

    epsilon: float
    M: float
    k: int
    times: np.ndarray
    vz_mass: np.ndarray
    uw_mass: np.ndarray
    vz_bound: float
    uw_bound: float
    measure_ok: bool
    threshold_time: float
    passed: bool


def tail_bound_report(traj, consts, epsilon, burn_in=0.0):
    """Evaluate the truncation tail masses on snapshots after ``burn_in``.

    ``M = ceil(sqrt(2 K0 / eps))`` makes ``K0 / M^2 <= eps / 2``.  ``k`` is the
    smallest integer with ``2 K0 / k^2 < 2 b^2 eps / (gamma d2)``, the factor
    used to pass from the ``M``-level to the final tail bound.
    ``threshold_time`` is the first sample time after which every later sample
    satisfies both bounds (``nan`` if none does).
    """
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon!r}")
    p = consts.params
    grid = traj.grid
    M = float(math.ceil(math.sqrt(2.0 * consts.K0 / epsilon)))
    k = int(math.floor(math.sqrt(consts.K0 * consts.gamma * p.d2 / (p.b**2 * epsilon)))) + 1
    times, snaps = _snapshots_after(traj, burn_in)
    vz_mass, uw_mass = [], []
    measure_ok = True
    for s in snaps:
        u, v, w, z = s
        vz_mass.append(tail_mass(grid, v, v, M) + tail_mass(grid, z, z, M))
        uw_mass.append(tail_mass(grid, u, v, M) + tail_mass(grid, w, z, M))
        for c in (v, z):
            big = float(np.sum(np.abs(c) >= M)) * grid.cell_volume
            measure_ok &= big * M**2 <= float(np.sum(c**2)) * grid.cell_volume * (1 + 1e-12)
    vz_mass = np.array(vz_mass)
    uw_mass = np.array(uw_mass)
    vz_bound = consts.L1 * epsilon
    uw_bound = consts.L2 * epsilon
    ok = (vz_mass < vz_bound) & (uw_mass < uw_bound)
    if ok.size and ok[-1]:
        bad = np.nonzero(~ok)[0]
        threshold = float(times[bad[-1] + 1]) if bad.size else float(times[0])
    else:
        threshold = math.nan
    return TailReport(
        epsilon=epsilon, M=M, k=k, times=times, vz_mass=vz_mass, uw_mass=uw_mass,
        vz_bound=vz_bound, uw_bound=uw_bound, measure_ok=bool(measure_ok),
        threshold_time=threshold, passed=bool(ok.all()) and bool(measure_ok),
    )


@dataclass(frozen=True)
class TruncatedH1Report:
    """Gradient energies on ``{|v| < M}``, ``{|z| < M}`` against their uniform bounds."""

    M: float
    times: np.ndarray
    vz_energy: np.ndarray
    u_energy: np.ndarray
    w_energy: np.ndarray
    vz_bound: float
    uw_bound: float
    delta: float
    passed: bool


def truncated_vz_bound(consts, M):
    p = consts.params
    base = consts.C7 + 4.0 * M**2 * consts.C8 + consts.K0 / p.d2 * (p.b**2 + 2.0 * p.D2**2)
    return base * math.exp(consts.gamma * p.d2)


def truncated_uw_bound(consts, M, delta):
    p = consts.params
    pre = consts.C8 + 4.0 / p.d1 * (consts.K0 * ((p.b + 1.0) ** 2 + p.D1**2) + p.a**2 * consts.measure)
    expo = 2.0 * M**2 * delta**2 / p.d1 * consts.C8
    return pre * math.exp(expo) if expo < 700.0 else math.inf


def truncated_h1_report(traj, consts, M, burn_in=0.0, delta=None):
    """Masked gradient energies on snapshots after ``burn_in``.

    The ``(v, z)`` bound needs only the absorbing constants; the ``u`` and
    ``w`` bound also needs the embedding constant ``delta`` and is skipped
    (reported as ``nan``) when it is not given.
    """
    M = float(M)
    if not M > 0:
        raise InvalidArgumentError(f"M must be positive, got {M!r}")
    grid = traj.grid
    times, snaps = _snapshots_after(traj, burn_in)
    vz, uu, ww = [], [], []
    for s in snaps:
        u, v, w, z = s
        vz.append(masked_grad_sq(grid, v, v, M) + masked_grad_sq(grid, z, z, M))
        uu.append(masked_grad_sq(grid, u, v, M))
        ww.append(masked_grad_sq(grid, w, z, M))
    vz, uu, ww = np.array(vz), np.array(uu), np.array(ww)
    b_vz = truncated_vz_bound(consts, M)
    b_uw = truncated_uw_bound(consts, M, delta) if delta is not None else math.nan
    ok = bool(np.all(vz <= b_vz))
    if delta is not None:
        ok = ok and bool(np.all(uu <= b_uw)) and bool(np.all(ww <= b_uw))
    return TruncatedH1Report(
        M=M, times=times, vz_energy=vz, u_energy=uu, w_energy=ww, vz_bound=b_vz, uw_bound=b_uw,
        delta=math.nan if delta is None else float(delta), passed=ok,
    )


def integrator_slack(coarse, fine, names=("l2sq_v", "l2sq_z")):
    """Discretisation error estimate from a ``dt`` / ``dt/2`` pair of runs.

    Returns ``max |obs_coarse - obs_fine|`` of the summed observables over the
    common sample times; for a first-order scheme this approximates the error
    of the fine run and bounds that of the coarse one up to a factor two.
    """
    common, ic, jf = np.intersect1d(np.round(coarse.times, 12), np.round(fine.times, 12),
                                    return_indices=True)
    a = sum(coarse[n][ic] for n in names)
    b = sum(fine[n][jf] for n in names)
    return 2.0 * float(np.max(np.abs(a - b))) if common.size else 0.0
