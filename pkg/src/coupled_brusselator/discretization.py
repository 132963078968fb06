"""Finite-difference Dirichlet domains on intervals and rectangles.

Fields are plain numpy arrays holding the values at the interior nodes of a
:class:`Grid`; boundary values are identically zero and never stored.  Every
operation accepts extra leading axes, so a stack of fields of shape
``(k, *grid.shape)`` is processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.linalg.lapack as lapack
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, NumericalError

__all__ = [
    "Grid",
    "build_grid",
    "node_coordinates",
    "sine_mode",
    "apply_laplacian",
    "solve_helmholtz",
    "integrate",
    "dirichlet_form",
    "node_dirichlet_energy",
    "laplacian_matrix",
    "embedding_ratio",
    "estimate_embedding_constant",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on a box with homogeneous Dirichlet data.

    Use :func:`build_grid` rather than calling the constructor directly.

    Attributes
    ----------
    extents : tuple of float
        Side lengths of the box.
    counts : tuple of int
        Interior node count per axis.
    h : tuple of float
        Mesh width per axis, ``extent / (count + 1)``.
    gamma : float
        Smallest eigenvalue of the discrete operator ``-Delta_h``.
    measure : float
        Domain measure ``|Omega|``.
    """

    extents: tuple
    counts: tuple
    h: tuple
    gamma: float
    measure: float

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return tuple(self.counts)

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def check(self, f, name="field"):
        """Raise unless the trailing axes of ``f`` match this grid."""
        f = np.asarray(f)
        if f.ndim < self.dim or f.shape[f.ndim - self.dim:] != self.shape:
            raise InvalidArgumentError(
                f"{name} with shape {f.shape} does not live on grid {self.shape}"
            )
        return f


def build_grid(dim, extents, counts):
    """Build a 1D or 2D Dirichlet grid.

    Parameters
    ----------
    dim : {1, 2}
    extents : float or sequence of float
        Side length(s); a scalar is broadcast to every axis.
    counts : int or sequence of int
        Interior node count(s); a scalar is broadcast to every axis.
    """
    if dim not in (1, 2):
        raise InvalidArgumentError(f"dim must be 1 or 2, got {dim!r}")
    extents = _per_axis(extents, dim, "extents")
    counts = _per_axis(counts, dim, "counts")
    ext = []
    for L in extents:
        L = float(L)
        if not (math.isfinite(L) and L > 0):
            raise InvalidArgumentError(f"extent must be positive, got {L!r}")
        ext.append(L)
    cnt = []
    for n in counts:
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise InvalidArgumentError(f"count must be a positive integer, got {n!r}")
        cnt.append(int(n))
    h = tuple(L / (n + 1) for L, n in zip(ext, cnt))
    # closed-form first eigenvalue of tridiag(-1, 2, -1) / h^2, summed over axes
    gamma = sum(2.0 / hi**2 * (1.0 - math.cos(math.pi * hi / L)) for hi, L in zip(h, ext))
    return Grid(
        extents=tuple(ext),
        counts=tuple(cnt),
        h=h,
        gamma=gamma,
        measure=float(np.prod(ext)),
    )


def _per_axis(value, dim, name):
    if np.ndim(value) == 0:
        return (value,) * dim
    value = tuple(value)
    if len(value) != dim:
        raise InvalidArgumentError(f"{name} needs {dim} entries, got {len(value)}")
    return value


def node_coordinates(grid):
    """Interior node coordinates, one 1D array per axis."""
    return tuple(h * np.arange(1, n + 1) for h, n in zip(grid.h, grid.counts))


def sine_mode(grid, k=1):
    """Sampled Dirichlet eigenfunction ``prod_i sin(k_i pi x_i / L_i)``.

    For ``k = 1`` this is the eigenvector of ``-Delta_h`` with eigenvalue
    ``grid.gamma``.
    """
    ks = _per_axis(k, grid.dim, "k")
    f = np.ones(grid.shape)
    for axis, (x, L, ki) in enumerate(zip(node_coordinates(grid), grid.extents, ks)):
        s = np.sin(ki * np.pi * x / L)
        shape = [1] * grid.dim
        shape[axis] = -1
        f = f * s.reshape(shape)
    return f


def _axis(grid, f, i):
    return f.ndim - grid.dim + i


def apply_laplacian(grid, f):
    """Second-order centred ``Delta_h f`` with zero boundary values."""
    f = grid.check(f)
    out = np.zeros(f.shape)
    for i, h in enumerate(grid.h):
        ax = _axis(grid, f, i)
        pad = [(0, 0)] * f.ndim
        pad[ax] = (1, 1)
        fp = np.pad(f, pad)
        n = f.shape[ax]
        lo = np.take(fp, np.arange(0, n), axis=ax)
        hi = np.take(fp, np.arange(2, n + 2), axis=ax)
        out += (lo - 2.0 * f + hi) / h**2
    return out


def laplacian_matrix(grid):
    """Sparse matrix of ``Delta_h`` acting on row-major flattened fields."""
    mats = []
    for h, n in zip(grid.h, grid.counts):
        mats.append(sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2)
    if grid.dim == 1:
        return sp.csc_matrix(mats[0])
    ix = sp.identity(grid.counts[0])
    iy = sp.identity(grid.counts[1])
    return sp.csc_matrix(sp.kron(mats[0], iy) + sp.kron(ix, mats[1]))


@lru_cache(maxsize=64)
def _helmholtz_factor(grid, alpha):
    if grid.dim == 1:
        (h,) = grid.h
        (n,) = grid.counts
        c = alpha / h**2
        d = np.full(n, 1.0 + 2.0 * c)
        e = np.full(max(n - 1, 0), -c)
        d, e, info = lapack.dpttrf(d, e)
        if info != 0:
            raise NumericalError(f"tridiagonal factorisation failed (info={info})")
        return ("pt", d, e)
    mat = sp.identity(grid.size, format="csc") - alpha * laplacian_matrix(grid)
    return ("lu", spla.splu(sp.csc_matrix(mat)))


def solve_helmholtz(grid, alpha, rhs):
    """Solve ``(I - alpha * Delta_h) x = rhs``.

    The 1D system is solved by an LDL^T tridiagonal factorisation, the 2D
    system by a sparse LU factorisation; both are cached per ``(grid, alpha)``.
    """
    rhs = grid.check(rhs, "rhs")
    alpha = float(alpha)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise InvalidArgumentError(f"alpha must be nonnegative, got {alpha!r}")
    if alpha == 0.0:
        return np.array(rhs, dtype=float)
    lead = rhs.shape[: rhs.ndim - grid.dim]
    b = np.ascontiguousarray(rhs, dtype=float).reshape(-1, grid.size).T
    fac = _helmholtz_factor(grid, alpha)
    if fac[0] == "pt":
        x, info = lapack.dpttrs(fac[1], fac[2], b)
        if info != 0:
            raise NumericalError(f"tridiagonal solve failed (info={info})")
    else:
        x = fac[1].solve(np.asfortranarray(b))
    return np.ascontiguousarray(x.T).reshape(lead + grid.shape)


def integrate(grid, f):
    """Nodal quadrature ``sum f * h^dim`` over the trailing grid axes."""
    f = grid.check(f)
    axes = tuple(range(f.ndim - grid.dim, f.ndim))
    return np.sum(f, axis=axes) * grid.cell_volume


def _edge_energies(grid, f):
    """Squared differences across every stencil edge, per axis."""
    out = []
    for i, h in enumerate(grid.h):
        ax = _axis(grid, f, i)
        pad = [(0, 0)] * f.ndim
        pad[ax] = (1, 1)
        out.append((ax, np.diff(np.pad(f, pad), axis=ax) ** 2 / h**2))
    return out


def dirichlet_form(grid, f):
    """Discrete ``||grad f||^2 = <-Delta_h f, f>`` evaluated as a sum of squares."""
    f = grid.check(f)
    axes = tuple(range(f.ndim - grid.dim, f.ndim))
    total = 0.0
    for _, e in _edge_energies(grid, f):
        total = total + np.sum(e, axis=axes)
    return total * grid.cell_volume


def node_dirichlet_energy(grid, f):
    """Per-node share of the Dirichlet energy.

    Each interior edge is split evenly between its two end nodes, and each
    boundary edge is owned by its single interior node, so the shares are
    nonnegative and sum exactly to :func:`dirichlet_form`.
    """
    f = grid.check(f)
    out = np.zeros(f.shape)
    for ax, e in _edge_energies(grid, f):
        n = f.shape[ax]
        e = e.copy()
        first = [slice(None)] * f.ndim
        last = [slice(None)] * f.ndim
        first[ax] = 0
        last[ax] = n
        e[tuple(first)] *= 2.0
        e[tuple(last)] *= 2.0
        left = np.take(e, np.arange(0, n), axis=ax)
        right = np.take(e, np.arange(1, n + 1), axis=ax)
        out += 0.5 * (left + right)
    return out * grid.cell_volume


def embedding_ratio(grid, phi):
    """``||phi||_{L^4}^2 / ||grad phi||^2``; invariant under scaling of ``phi``."""
    phi = grid.check(phi)
    l4sq = np.sqrt(integrate(grid, phi**4))
    return l4sq / dirichlet_form(grid, phi)


def _ascend_ratio(grid, phi, max_iter=400, rtol=1e-12):
    # gradient ascent on log(ratio) in a smoothed metric; iterates normalised
    phi = phi / np.sqrt(dirichlet_form(grid, phi))
    best = embedding_ratio(grid, phi)
    step = 0.5
    w = grid.cell_volume
    for _ in range(max_iter):
        q4 = integrate(grid, phi**4)
        grad = 2.0 * phi**3 * w / q4 + 2.0 * apply_laplacian(grid, phi) * w
        direction = solve_helmholtz(grid, 1.0 / grid.gamma, grad)
        dnorm = np.sqrt(dirichlet_form(grid, direction))
        if dnorm == 0.0:
            break
        direction /= dnorm
        improved = False
        while step > 1e-12:
            trial = phi + step * direction
            trial /= np.sqrt(dirichlet_form(grid, trial))
            r = embedding_ratio(grid, trial)
            if r > best:
                gain = (r - best) / best
                phi, best, improved = trial, r, True
                step = min(2.0 * step, 1.0)
                break
            step *= 0.5
        if not improved or gain < rtol:
            break
    return best, phi


def estimate_embedding_constant(grid, trials=4, seed=0):
    """Numerical estimate of the best ``delta`` in ``||phi||_{L^4}^2 <= delta ||grad phi||^2``.

    Maximises :func:`embedding_ratio` by projected gradient ascent from the
    first eigenmode and from ``trials`` random smooth starts.  Deterministic
    for a fixed ``seed``.
    """
    if isinstance(trials, bool) or int(trials) != trials or trials < 1:
        raise InvalidArgumentError(f"trials must be a positive integer, got {trials!r}")
    rng = np.random.default_rng(seed)
    best, _ = _ascend_ratio(grid, sine_mode(grid))
    for _ in range(int(trials)):
        start = rng.standard_normal(grid.shape)
        start = solve_helmholtz(grid, 1.0 / grid.gamma, start)
        r, _ = _ascend_ratio(grid, start)
        best = max(best, r)
    return float(best)
