"""Reaction kinetics and IMEX time stepping for the coupled two-cell system.

Diffusion is advanced implicitly with :func:`solve_helmholtz`; the reaction
terms are explicit.  Two schemes are available:

``imex1``
    backward-Euler diffusion after a forward-Euler reaction step,
    ``(I - dt d Delta) g1 = g0 + dt F(g0)``.
``imex2``
    Strang splitting: Crank-Nicolson diffusion over ``dt/2``, explicit
    midpoint reaction over ``dt``, Crank-Nicolson diffusion over ``dt/2``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .discretization import (
    apply_laplacian,
    dirichlet_form,
    integrate,
    sine_mode,
    solve_helmholtz,
)
from .errors import DivergenceError, InvalidArgumentError, NumericalError
from .fields import FieldQuartet, ModelParams

__all__ = [
    "StepperConfig",
    "Trajectory",
    "default_dt",
    "reaction_rhs",
    "imex_step",
    "simulate",
    "simulate_single_cell",
    "initial_data",
    "scale_to_norm",
    "PRESETS",
    "OBSERVABLES",
]

SCHEMES = ("imex1", "imex2")
PRESETS = ("zero", "sine-mode", "symmetric-pair", "random")

# per-step scalars recorded by simulate(); the first eleven are the CSV columns
OBSERVABLES = (
    "l2sq_u", "l2sq_v", "l2sq_w", "l2sq_z",
    "gradsq_u", "gradsq_v", "gradsq_w", "gradsq_z",
    "l2sq_y", "l2sq_psi",
    "gradsq_y", "gradsq_psi", "gradsq_vpz", "gradsq_vmz",
    "l4_u", "l4_v", "l4_w", "l4_z",
    "asym", "maxabs",
)


@dataclass(frozen=True)
class StepperConfig:
    """Time-step size, scheme tag and blowup threshold.

    ``nonlinear=False`` drops the cubic terms ``u^2 v`` and ``w^2 z`` from the
    kinetics; it exists for linear-regime checks only.
    """

    dt: float
    scheme: str = "imex1"
    blowup: float = 1e8
    nonlinear: bool = True

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgumentError(f"dt must be positive, got {self.dt!r}")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.blowup > 0:
            raise InvalidArgumentError(f"blowup threshold must be positive, got {self.blowup!r}")


def default_dt(params):
    return 1e-3 * min(1.0, 1.0 / (params.b + 1.0), 1.0 / (params.D1 + params.D2 + 1.0))


def _coupled_rhs(x, p, nonlinear=True):
    u, v, w, z = x
    out = np.empty_like(x)
    out[0] = p.a - (p.b + 1.0) * u + p.D1 * (w - u)
    out[1] = p.b * u + p.D2 * (z - v)
    out[2] = p.a - (p.b + 1.0) * w + p.D1 * (u - w)
    out[3] = p.b * w + p.D2 * (v - z)
    if nonlinear:
        u2v = u * u * v
        w2z = w * w * z
        out[0] += u2v
        out[1] -= u2v
        out[2] += w2z
        out[3] -= w2z
    return out


def _single_rhs(x, p, nonlinear=True):
    u, v = x
    out = np.empty_like(x)
    out[0] = p.a - (p.b + 1.0) * u
    out[1] = p.b * u
    if nonlinear:
        u2v = u * u * v
        out[0] += u2v
        out[1] -= u2v
    return out


def reaction_rhs(g, params, nonlinear=True):
    """Pointwise kinetics ``F(g)`` including the inter-cell exchange terms."""
    if not np.all(np.isfinite(g.data)):
        raise NumericalError("non-finite state passed to reaction_rhs")
    return FieldQuartet(g.grid, _coupled_rhs(g.data, params, nonlinear))


class _Stepper:
    """One-step map shared by the coupled and single-cell integrators."""

    def __init__(self, grid, diffusivities, rhs, params, cfg):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.rhs = rhs
        self.groups = {}
        for i, d in enumerate(diffusivities):
            self.groups.setdefault(float(d), []).append(i)

    def _sel(self, idx):
        # component axis sits just before the grid axes; leading axes pass through
        return (Ellipsis, idx) + (slice(None),) * self.grid.dim

    def _implicit(self, x, dt):
        out = np.empty_like(x)
        for d, idx in self.groups.items():
            sel = self._sel(idx)
            out[sel] = solve_helmholtz(self.grid, d * dt, x[sel])
        return out

    def _crank_nicolson(self, x, dt):
        out = np.empty_like(x)
        for d, idx in self.groups.items():
            sel = self._sel(idx)
            y = x[sel]
            out[sel] = solve_helmholtz(self.grid, 0.5 * d * dt, y + 0.5 * d * dt * apply_laplacian(self.grid, y))
        return out

    def __call__(self, x, dt):
        p, nl = self.params, self.cfg.nonlinear
        if self.cfg.scheme == "imex1":
            return self._implicit(x + dt * self.rhs(x, p, nl), dt)
        y = self._crank_nicolson(x, 0.5 * dt)
        mid = y + 0.5 * dt * self.rhs(y, p, nl)
        y = y + dt * self.rhs(mid, p, nl)
        return self._crank_nicolson(y, 0.5 * dt)

    def guard(self, x, t):
        mx = float(np.max(np.abs(x)))
        if math.isnan(mx):
            raise NumericalError(f"non-finite state at t={t:.6g}")
        if mx > self.cfg.blowup:
            raise DivergenceError(f"max |g| = {mx:.3g} exceeds blowup guard at t={t:.6g}", t)
        return mx


def imex_step(g, params, cfg):
    """Advance a quartet by one step of the configured scheme."""
    step = _Stepper(g.grid, (params.d1, params.d2, params.d1, params.d2), _coupled_rhs, params, cfg)
    x = step(g.data, cfg.dt)
    step.guard(x, cfg.dt)
    return FieldQuartet(g.grid, x)


@dataclass(frozen=True)
class Trajectory:
    """Time series of a simulation run.

    Attributes
    ----------
    times : ndarray
        Recorded times, strictly increasing, starting at 0.
    observables : dict of str to ndarray
        One value per recorded time for every name in :data:`OBSERVABLES`
        (or the single-cell subset) plus any user observers.
    snapshot_times, snapshots : ndarray
        States saved every ``stride`` steps, shape ``(k, ncomp, *grid.shape)``.
    final : ndarray
        State at the last recorded time.
    """

    grid: object
    params: ModelParams
    cfg: StepperConfig
    times: np.ndarray
    observables: dict
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    final: np.ndarray
    components: tuple = ("u", "v", "w", "z")
    completed: bool = True

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def final_state(self):
        return FieldQuartet(self.grid, self.final)

    def __getitem__(self, name):
        return self.observables[name]

    def window(self, t0, t1=np.inf):
        """Boolean mask of recorded times in ``[t0, t1]``."""
        return (self.times >= t0) & (self.times <= t1)



# rows: u, v, w, z, y, psi, v+z, v-z, u-w
_COMBOS = np.array([
    [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
    [1, 1, 1, 1], [1, 1, -1, -1], [0, 1, 0, 1], [0, 1, 0, -1], [1, 0, -1, 0],
], dtype=float)


def _energies(grid, s):
    """Squared L2 norms and Dirichlet energies of the rows of ``s``."""
    sq = s * s
    cv = grid.cell_volume
    l2 = sq.sum(axis=1) * cv
    if grid.dim == 1:
        d = np.diff(s, axis=1)
        (h,) = grid.h
        gr = ((d * d).sum(axis=1) + sq[:, 0] + sq[:, -1]) * (cv / h**2)
    else:
        gr = dirichlet_form(grid, s.reshape((len(s),) + grid.shape))
    return sq, l2, gr


def _coupled_observables(grid, x):
    s = _COMBOS @ x.reshape(4, -1)
    sq, l2, gr = _energies(grid, s)
    l4 = ((sq[:4] ** 2).sum(axis=1) * grid.cell_volume) ** 0.25
    asym = math.sqrt(l2[8]) + math.sqrt(l2[7])
    return np.concatenate([l2[:4], gr[:4], l2[4:6], gr[4:8], l4, [asym, np.abs(x).max()]])


SINGLE_OBSERVABLES = ("l2sq_u", "l2sq_v", "gradsq_u", "gradsq_v", "l4_u", "l4_v", "maxabs")


def _single_observables(grid, x):
    sq, l2, gr = _energies(grid, x.reshape(2, -1))
    l4 = ((sq**2).sum(axis=1) * grid.cell_volume) ** 0.25
    return np.concatenate([l2, gr, l4, [np.abs(x).max()]])


def _run(grid, x0, stepper, t_end, stride, names, observe, observers, components):
    cfg = stepper.cfg
    t_end = float(t_end)
    if not (math.isfinite(t_end) and t_end > 0):
        raise InvalidArgumentError(f"t_end must be positive, got {t_end!r}")
    if int(stride) != stride or stride < 1:
        raise InvalidArgumentError(f"stride must be a positive integer, got {stride!r}")
    dt = cfg.dt
    n_full = int(math.floor(t_end / dt * (1 + 1e-12)))
    rem = t_end - n_full * dt
    n_steps = n_full + (1 if rem > 1e-9 * dt else 0)
    observers = dict(observers or {})
    names = tuple(names) + tuple(observers)

    times = np.empty(n_steps + 1)
    obs = np.empty((n_steps + 1, len(names)))
    snap_t, snaps = [], []

    def record(k, t, x):
        times[k] = t
        row = observe(grid, x)
        if observers:
            row = np.concatenate([row, [float(f(grid, x)) for f in observers.values()]])
        obs[k] = row
        if k % stride == 0 or k == n_steps:
            snap_t.append(t)
            snaps.append(x.copy())

    x = np.array(x0, dtype=float)
    stepper.guard(x, 0.0)
    record(0, 0.0, x)
    k = 0
    try:
        for k in range(1, n_steps + 1):
            h = dt if k <= n_full else rem
            t = k * dt if k <= n_full else t_end
            x = stepper(x, h)
            stepper.guard(x, t)
            record(k, t, x)
    except (NumericalError, DivergenceError) as err:
        err.partial = _pack(grid, stepper, times[:k], obs[:k], names, snap_t, snaps, x, components, False)
        raise
    return _pack(grid, stepper, times, obs, names, snap_t, snaps, x, components, True)


def _pack(grid, stepper, times, obs, names, snap_t, snaps, x, components, completed):
    shape = (0, len(components)) + grid.shape
    return Trajectory(
        grid=grid,
        params=stepper.params,
        cfg=stepper.cfg,
        times=np.array(times),
        observables={n: np.array(obs[:, i]) for i, n in enumerate(names)},
        snapshot_times=np.array(snap_t),
        snapshots=np.array(snaps) if snaps else np.empty(shape),
        final=np.array(x),
        components=components,
        completed=completed,
    )


def simulate(g0, params, cfg, t_end, stride=100, observers=None):
    """Integrate the coupled system from ``g0`` up to ``t_end``.

    Observables are recorded after every step; full states every ``stride``
    steps (and at the final time).  ``observers`` maps extra observable names
    to callables ``f(grid, state_array) -> float``.

    Raises
    ------
    DivergenceError, NumericalError
        On blowup or non-finite values; the partially filled trajectory is
        attached to the exception as ``partial``.
    """
    grid = g0.grid
    stepper = _Stepper(grid, (params.d1, params.d2, params.d1, params.d2), _coupled_rhs, params, cfg)
    return _run(grid, g0.data, stepper, t_end, stride, OBSERVABLES, _coupled_observables,
                observers, ("u", "v", "w", "z"))


def simulate_single_cell(grid, u0, v0, params, cfg, t_end, stride=100, observers=None):
    """Integrate the classical two-component Brusselator (no coupling terms).

    Only ``d1, d2, a, b`` of ``params`` are used.
    """
    x0 = np.stack([grid.check(u0, "u0"), grid.check(v0, "v0")]).astype(float)
    stepper = _Stepper(grid, (params.d1, params.d2), _single_rhs, params, cfg)
    return _run(grid, x0, stepper, t_end, stride, SINGLE_OBSERVABLES, _single_observables,
                observers, ("u", "v"))


def _random_smooth(grid, rng, modes=6):
    f = np.zeros(grid.shape)
    if grid.dim == 1:
        for k in range(1, modes + 1):
            f += rng.uniform(-1, 1) / k * sine_mode(grid, k)
    else:
        for k1 in range(1, modes + 1):
            for k2 in range(1, modes + 1):
                f += rng.uniform(-1, 1) / (k1 * k2) * sine_mode(grid, (k1, k2))
    return f / np.max(np.abs(f))


def initial_data(grid, preset="random", amplitude=1.0, seed=0):
    """Deterministic initial quartets.

    ``"zero"``
        all fields zero.
    ``"sine-mode"``
        every component equal to ``amplitude`` times the first eigenmode.
    ``"symmetric-pair"``
        random smooth ``u = w`` and ``v = z`` (the exchange-symmetric subspace).
    ``"random"``
        four independent random smooth fields with max-abs ``amplitude``.
    """
    if preset not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    amplitude = float(amplitude)
    if preset == "zero":
        return FieldQuartet.zeros(grid)
    if preset == "sine-mode":
        s = amplitude * sine_mode(grid)
        return FieldQuartet.from_fields(grid, s, s, s, s)
    rng = np.random.default_rng(seed)
    if preset == "symmetric-pair":
        u = amplitude * _random_smooth(grid, rng)
        v = amplitude * _random_smooth(grid, rng)
        return FieldQuartet.from_fields(grid, u, v, u, v)
    return FieldQuartet(grid, np.stack([amplitude * _random_smooth(grid, rng) for _ in range(4)]))


def scale_to_norm(g, target_sq):
    """Rescale ``g`` so that ``||g||^2 = target_sq``."""
    cur = float(np.sum(integrate(g.grid, g.data**2)))
    if cur == 0.0:
        raise InvalidArgumentError("cannot rescale the zero state")
    return FieldQuartet(g.grid, g.data * math.sqrt(target_sq / cur))
