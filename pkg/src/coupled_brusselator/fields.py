"""Four-field state, model constants, grouping transforms and norms."""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields
import math

import numpy as np

from .discretization import dirichlet_form, integrate, node_dirichlet_energy
from .errors import InvalidArgumentError, NumericalError

__all__ = [
    "ModelParams",
    "FieldQuartet",
    "GroupedFields",
    "QuartetNorms",
    "grouping",
    "ungroup",
    "norms",
    "tail_mass",
    "masked_grad_sq",
    "COMPONENTS",
]

COMPONENTS = ("u", "v", "w", "z")


@dataclass(frozen=True)
class ModelParams:
    """Diffusivities ``d1, d2``, kinetic constants ``a, b`` and coupling rates ``D1, D2``.

    All six must be strictly positive.  :meth:`relaxed` admits zeros for
    limiting-case experiments (pure diffusion, decoupled cells).
    """

    d1: float
    d2: float
    a: float
    b: float
    D1: float
    D2: float

    def __post_init__(self):
        self._validate(strict=True)

    def _validate(self, strict):
        for f in dc_fields(self):
            val = getattr(self, f.name)
            if isinstance(val, bool) or not isinstance(val, (int, float, np.floating, np.integer)):
                raise InvalidArgumentError(f"{f.name} must be a number, got {val!r}")
            val = float(val)
            object.__setattr__(self, f.name, val)
            if not math.isfinite(val):
                raise InvalidArgumentError(f"{f.name} must be finite")
            if strict and val <= 0:
                raise InvalidArgumentError(f"{f.name} must be positive")
            if val < 0:
                raise InvalidArgumentError(f"{f.name} must be nonnegative")

    @classmethod
    def relaxed(cls, **kwargs):
        """Build parameters allowing zero entries (test and limit cases only)."""
        obj = object.__new__(cls)
        for f in dc_fields(cls):
            object.__setattr__(obj, f.name, kwargs[f.name])
        obj._validate(strict=False)
        return obj

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


class FieldQuartet:
    """State ``g = (u, v, w, z)`` on a shared grid.

    The four fields are stored as one read-only array of shape
    ``(4, *grid.shape)``.
    """

    __slots__ = ("grid", "data")

    def __init__(self, grid, data):
        data = np.array(data, dtype=float)
        if data.shape != (4,) + grid.shape:
            raise InvalidArgumentError(
                f"quartet data must have shape {(4,) + grid.shape}, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise NumericalError("quartet contains non-finite values")
        data.flags.writeable = False
        self.grid = grid
        self.data = data

    @classmethod
    def from_fields(cls, grid, u, v, w, z):
        return cls(grid, np.stack([np.broadcast_to(np.asarray(c, float), grid.shape) for c in (u, v, w, z)]))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((4,) + grid.shape))

    u = property(lambda self: self.data[0])
    v = property(lambda self: self.data[1])
    w = property(lambda self: self.data[2])
    z = property(lambda self: self.data[3])

    def swapped(self):
        """Exchange the two cells: ``(u, v, w, z) -> (w, z, u, v)``."""
        return FieldQuartet(self.grid, self.data[[2, 3, 0, 1]])

    def __repr__(self):
        return f"FieldQuartet(grid={self.grid.shape}, max|g|={np.max(np.abs(self.data)):.4g})"


@dataclass(frozen=True)
class GroupedFields:
    """``y = u+v+w+z``, ``psi = u+v-w-z``, ``p = u+w``, ``q = u-w``."""

    y: np.ndarray
    psi: np.ndarray
    p: np.ndarray
    q: np.ndarray


def grouping(g):
    u, v, w, z = g.data
    q = u - w
    # (u - w) + (v - z) vanishes exactly on the symmetric subspace
    return GroupedFields(y=u + v + w + z, psi=q + (v - z), p=u + w, q=q)


def ungroup(grid, grouped, v, z):
    """Inverse of :func:`grouping` given the ``v`` and ``z`` components.

    ``u`` and ``w`` are recovered from ``y`` and ``psi``; the ``p, q`` pair is
    cross-checked against them by the caller if needed.
    """
    u_plus_v = 0.5 * (grouped.y + grouped.psi)
    w_plus_z = 0.5 * (grouped.y - grouped.psi)
    return FieldQuartet.from_fields(grid, u_plus_v - v, v, w_plus_z - z, z)


@dataclass(frozen=True)
class QuartetNorms:
    """Per-component squared L2 norms, Dirichlet energies and L4 norms."""

    l2_sq: dict
    grad_sq: dict
    l4: dict

    @property
    def total_l2_sq(self):
        return sum(self.l2_sq.values())

    @property
    def total_grad_sq(self):
        return sum(self.grad_sq.values())


def norms(g):
    grid = g.grid
    l2 = integrate(grid, g.data**2)
    gr = dirichlet_form(grid, g.data)
    l4 = integrate(grid, g.data**4) ** 0.25
    return QuartetNorms(
        l2_sq=dict(zip(COMPONENTS, map(float, l2))),
        grad_sq=dict(zip(COMPONENTS, map(float, gr))),
        l4=dict(zip(COMPONENTS, map(float, l4))),
    )


def _mask_args(grid, f, criterion, M):
    f = grid.check(f)
    criterion = grid.check(criterion, "criterion")
    if f.shape != criterion.shape:
        raise InvalidArgumentError("field and criterion must share a grid")
    M = float(M)
    if not M >= 0:
        raise InvalidArgumentError(f"M must be nonnegative, got {M!r}")
    return f, criterion, M


def tail_mass(grid, f, criterion, M):
    """``int_{|criterion| >= M} f^2 dx`` by masked nodal quadrature."""
    f, criterion, M = _mask_args(grid, f, criterion, M)
    return float(integrate(grid, np.where(np.abs(criterion) >= M, f**2, 0.0)))


def masked_grad_sq(grid, f, criterion, M, mode="strict-below"):
    """Dirichlet energy of ``f`` restricted to a sublevel or superlevel set.

    A node belongs to the set according to its own value of ``criterion``
    (``|criterion| < M`` for ``"strict-below"``, ``>= M`` for
    ``"at-or-above"``) and contributes its share from
    :func:`~coupled_brusselator.discretization.node_dirichlet_energy`.  The two
    modes therefore partition the full energy.
    """
    f, criterion, M = _mask_args(grid, f, criterion, M)
    if mode == "strict-below":
        mask = np.abs(criterion) < M
    elif mode == "at-or-above":
        mask = np.abs(criterion) >= M
    else:
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    return float(np.sum(node_dirichlet_energy(grid, f)[mask]))
