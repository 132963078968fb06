"""Linearised flow, tangent-bundle trace averages and the dimension bound.

Tangent vectors are advanced with the exact linearisation of the IMEX step
used for the base state, so that a tangent vector and the finite difference
of two nearby base runs agree to second order in the perturbation size.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .discretization import dirichlet_form, integrate, solve_helmholtz
from .dynamics import _Stepper, _coupled_rhs
from .errors import DegeneracyError, InvalidArgumentError
from .fields import FieldQuartet

__all__ = [
    "TangentBundle",
    "DimensionInputs",
    "DimensionBound",
    "variational_rhs",
    "random_bundle",
    "bundle_from_fields",
    "frame_trace",
    "evolve_tangent_bundle",
    "trace_qm",
    "young_constant",
    "dimension_bound",
    "packaged_dimension_example",
    "attractor_gradient_bound",
]


def _jac_apply(x, G, p, nonlinear=True):
    """``F'(x) G`` for ``G`` of shape ``(..., 4, *grid)``."""
    u, v, w, z = x
    ax = G.ndim - x.ndim
    U, V, W, Z = (np.take(G, i, axis=ax) for i in range(4))
    out = np.empty_like(G)
    dU = -(p.b + 1.0) * U + p.D1 * (W - U)
    dV = p.b * U + p.D2 * (Z - V)
    dW = -(p.b + 1.0) * W + p.D1 * (U - W)
    dZ = p.b * W + p.D2 * (V - Z)
    if nonlinear:
        au = 2.0 * u * v * U + u * u * V
        aw = 2.0 * w * z * W + w * w * Z
        dU = dU + au
        dV = dV - au
        dW = dW + aw
        dZ = dZ - aw
    for i, d in enumerate((dU, dV, dW, dZ)):
        idx = [slice(None)] * G.ndim
        idx[ax] = i
        out[tuple(idx)] = d
    return out


def variational_rhs(G, base, params, nonlinear=True):
    """Reaction part ``F'(base) G`` of the linearised equation, pointwise."""
    if G.grid != base.grid:
        raise InvalidArgumentError("tangent and base quartets must share a grid")
    return FieldQuartet(G.grid, _jac_apply(base.data, G.data, params, nonlinear))


@dataclass(frozen=True)
class TangentBundle:
    """``m`` orthonormal tangent quartets and accumulated trace data.

    Attributes
    ----------
    frames : ndarray
        Shape ``(m, 4, *grid.shape)``, orthonormal in ``H = L^2(Omega)^4``.
    time : float
        Time of the last reorthonormalisation.
    trace_integral : float
        Integral of the frame traces since the bundle was created.
    trace_times, trace_values : tuple of float
        Frame times and the trace evaluated at each reorthonormalised frame.
    orthonormality_residual : float
        Max-abs entry of ``Gram - I`` after the last reorthonormalisation.
    """

    grid: object
    frames: np.ndarray
    time: float = 0.0
    trace_integral: float = 0.0
    trace_times: tuple = ()
    trace_values: tuple = ()
    orthonormality_residual: float = 0.0

    @property
    def m(self):
        return self.frames.shape[0]


def _gram(grid, frames):
    flat = frames.reshape(len(frames), -1)
    return (flat @ flat.T) * grid.cell_volume


def _orthonormalize(grid, frames, cond_limit=1e12):
    gram = _gram(grid, frames)
    if not np.all(np.isfinite(gram)):
        raise DegeneracyError("non-finite tangent vectors")
    cond = np.linalg.cond(gram)
    if not cond <= cond_limit:
        raise DegeneracyError(f"tangent bundle lost rank (Gram condition {cond:.3g})")
    q = frames.reshape(len(frames), -1).copy()
    cv = grid.cell_volume
    # modified Gram-Schmidt, applied twice
    for _ in range(2):
        for j in range(len(q)):
            for i in range(j):
                q[j] -= (q[i] @ q[j]) * cv * q[i]
            q[j] /= math.sqrt((q[j] @ q[j]) * cv)
    q = q.reshape(frames.shape)
    resid = float(np.max(np.abs(_gram(grid, q) - np.eye(len(q)))))
    return q, resid


def bundle_from_fields(grid, vectors, time=0.0):
    """Orthonormalise ``vectors`` (shape ``(m, 4, *grid.shape)``) into a bundle."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 + grid.dim or vectors.shape[1:] != (4,) + grid.shape:
        raise InvalidArgumentError(f"expected tangent vectors of shape (m, 4, {grid.shape})")
    if vectors.shape[0] < 1:
        raise InvalidArgumentError("bundle needs m >= 1")
    q, resid = _orthonormalize(grid, vectors)
    return TangentBundle(grid=grid, frames=q, time=float(time), orthonormality_residual=resid)


def random_bundle(grid, m, seed=0):
    """Orthonormal bundle of ``m`` smooth random quartets."""
    if int(m) != m or m < 1:
        raise InvalidArgumentError(f"m must be a positive integer, got {m!r}")
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((int(m), 4) + grid.shape)
    vecs = solve_helmholtz(grid, 1.0 / grid.gamma, vecs)
    return bundle_from_fields(grid, vecs)


def frame_trace(grid, frames, base, params, nonlinear=True):
    """``sum_j <(A + F'(base)) phi_j, phi_j>`` for orthonormal ``phi_j``."""
    d = np.array([params.d1, params.d2, params.d1, params.d2])
    diff = -float(np.sum(d * dirichlet_form(grid, frames)))
    react = float(np.sum(integrate(grid, _jac_apply(base, frames, params, nonlinear) * frames)))
    return diff + react


class _TangentStepper:
    """Joint base/tangent step: the tangent map is the derivative of the base map."""

    def __init__(self, grid, params, cfg, frozen):
        self.base = _Stepper(grid, (params.d1, params.d2, params.d1, params.d2), _coupled_rhs, params, cfg)
        self.params = params
        self.cfg = cfg
        self.frozen = frozen

    def __call__(self, x, G, dt):
        p, nl, st = self.params, self.cfg.nonlinear, self.base
        if self.cfg.scheme == "imex1":
            G = st._implicit(G + dt * _jac_apply(x, G, p, nl), dt)
            if not self.frozen:
                x = st(x, dt)
            return x, G
        if self.frozen:
            y = mid = x
        else:
            y = st._crank_nicolson(x, 0.5 * dt)
            mid = y + 0.5 * dt * _coupled_rhs(y, p, nl)
        Y = st._crank_nicolson(G, 0.5 * dt)
        MID = Y + 0.5 * dt * _jac_apply(y, Y, p, nl)
        Y = Y + dt * _jac_apply(mid, MID, p, nl)
        G = st._crank_nicolson(Y, 0.5 * dt)
        if not self.frozen:
            x = st._crank_nicolson(y + dt * _coupled_rhs(mid, p, nl), 0.5 * dt)
        return x, G


def evolve_tangent_bundle(bundle, base, params, cfg, n_blocks=1, reorth_every=10, frozen=False):
    """Advance a bundle together with its base state.

    Each block evaluates the trace at the current (orthonormal) frame, credits
    it over the block length ``reorth_every * dt``, advances base and tangents
    for ``reorth_every`` steps and reorthonormalises.  With ``frozen=True``
    the base state is held fixed (autonomous linear flow).

    Returns
    -------
    bundle : TangentBundle
    base : FieldQuartet
        Base state at the end of the last block.
    """
    if int(reorth_every) != reorth_every or reorth_every < 1:
        raise InvalidArgumentError("reorth_every must be a positive integer")
    grid = bundle.grid
    if base.grid != grid:
        raise InvalidArgumentError("bundle and base must share a grid")
    step = _TangentStepper(grid, params, cfg, frozen)
    x = np.array(base.data)
    G = np.array(bundle.frames)
    dt = cfg.dt
    block = reorth_every * dt
    t0 = bundle.time
    integral = bundle.trace_integral
    times = list(bundle.trace_times)
    values = list(bundle.trace_values)
    resid = bundle.orthonormality_residual
    for b in range(int(n_blocks)):
        t = t0 + b * block
        tr = frame_trace(grid, G, x, params, cfg.nonlinear)
        times.append(t)
        values.append(tr)
        integral += tr * block
        for k in range(int(reorth_every)):
            x, G = step(x, G, dt)
            step.base.guard(x, t + (k + 1) * dt)
        G, resid = _orthonormalize(grid, G)
    out = replace(
        bundle, frames=G, time=t0 + int(n_blocks) * block, trace_integral=integral,
        trace_times=tuple(times), trace_values=tuple(values), orthonormality_residual=resid,
    )
    return out, FieldQuartet(grid, x)


def trace_qm(g0, m, T, params, cfg, burn_in=0.0, reorth_every=10, seed=0, bundle=None,
             frozen=False):
    """Time-averaged trace of ``A + F'`` over an evolving ``m``-dimensional frame.

    The base trajectory starts at ``g0`` and the frame at ``bundle`` (a seeded
    random bundle by default).  The average runs over blocks starting in
    ``[burn_in, T)``.
    """
    T = float(T)
    if not T > burn_in:
        raise InvalidArgumentError(f"T={T} must exceed burn_in={burn_in}")
    grid = g0.grid
    if bundle is None:
        bundle = random_bundle(grid, m, seed)
    elif bundle.m != m:
        raise InvalidArgumentError(f"bundle has {bundle.m} vectors, expected m={m}")
    block = reorth_every * cfg.dt
    n_blocks = max(1, int(round(T / block)))
    bundle, _ = evolve_tangent_bundle(bundle, g0, params, cfg, n_blocks, reorth_every, frozen)
    t = np.array(bundle.trace_times)
    vals = np.array(bundle.trace_values)
    sel = t >= burn_in - 1e-12
    if not np.any(sel):
        raise InvalidArgumentError("no trace samples after burn-in")
    return float(np.mean(vals[sel]))


@dataclass(frozen=True)
class DimensionInputs:
    """Constants consumed by the dimension bound.

    ``C_gn`` defaults to ``sqrt(delta)``.  ``K3`` has no calibrated value and
    defaults to 1.0; reports flag it as uncalibrated.
    """

    K1: float
    delta: float
    n: int
    d0: float
    K3: float = 1.0
    C_gn: float = None
    K3_calibrated: bool = False

    def __post_init__(self):
        if self.C_gn is None:
            object.__setattr__(self, "C_gn", math.sqrt(self.delta) if self.delta > 0 else self.delta)
        for name in ("K1", "delta", "d0", "K3", "C_gn"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise InvalidArgumentError(f"{name} must be positive, got {val!r}")
        if self.n not in (1, 2):
            raise InvalidArgumentError(f"n must be 1 or 2, got {self.n!r}")


@dataclass(frozen=True)
class DimensionBound:
    m: int
    K2: float
    young_coefficient: float
    ratio: float
    threshold: float
    hausdorff_bound: int
    fractal_bound: int
    notes: dict = field(default_factory=dict)


def young_constant(c, d0, n):
    """Exact ``max_{s >= 0} [c s^(n/2) - (d0/2) s^2]``.

    Stationarity gives ``s* = (c n / (2 d0))^(1 / (2 - n/2))`` and the
    maximum ``c (1 - n/4) s*^(n/2)``.
    """
    if not (c > 0 and d0 > 0):
        raise InvalidArgumentError("young_constant needs positive c and d0")
    p = n / 2.0
    s = (c * p / d0) ** (1.0 / (2.0 - p))
    return c * (1.0 - p / 2.0) * s**p


def dimension_bound(params, grid, inputs):
    """Smallest integer ``m`` with ``m - 1 <= (2 (K2 + b) / (d0 K3))^(n/2) |Omega| < m``."""
    if inputs.n != grid.dim:
        raise InvalidArgumentError(f"inputs.n={inputs.n} does not match grid dimension {grid.dim}")
    c = 5.0 * inputs.delta * inputs.K1 * inputs.C_gn**2
    K2 = young_constant(c, inputs.d0, inputs.n)
    ratio = 2.0 * (K2 + params.b) / (inputs.d0 * inputs.K3)
    threshold = ratio ** (inputs.n / 2.0) * grid.measure
    m = int(math.floor(threshold)) + 1
    return DimensionBound(
        m=m, K2=K2, young_coefficient=c, ratio=ratio, threshold=threshold,
        hausdorff_bound=m, fractal_bound=2 * m,
        notes={"K2": "derived from the Young step", "K3": "calibrated" if inputs.K3_calibrated else "uncalibrated"},
    )


def packaged_dimension_example():
    """Reference inputs with ``2 (K2 + b) / (d0 K3) = 200`` on the unit interval.

    Returns ``(params, grid, inputs)``; the expected bound is ``m = 15``.
    """
    from .discretization import build_grid
    from .fields import ModelParams

    params = ModelParams(d1=1.0, d2=1.0, a=1.0, b=1.0, D1=1.0, D2=1.0)
    grid = build_grid(1, 1.0, 64)
    d0, K3, delta, n = 1.0, 1.0, 0.1, 1
    K2 = 200.0 * d0 * K3 / 2.0 - params.b
    # invert young_constant for the coefficient c, then c = 5 delta K1 C^2 with C^2 = delta
    p = n / 2.0
    c = (K2 / ((1.0 - p / 2.0) * (p / d0) ** (p / (2.0 - p)))) ** ((2.0 - p) / 2.0)
    K1 = c / (5.0 * delta * delta)
    return params, grid, DimensionInputs(K1=K1, delta=delta, n=n, d0=d0, K3=K3)


def attractor_gradient_bound(traj, burn_in):
    """Empirical ``K1``: sup over ``t > burn_in`` of ``||grad g(t)||^2``."""
    sel = traj.times > burn_in
    if not np.any(sel):
        raise InvalidArgumentError("trajectory has no samples after burn-in")
    total = sum(traj["gradsq_" + c][sel] for c in ("u", "v", "w", "z"))
    return float(np.max(total))
