import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from coupled_brusselator.discretization import (
    apply_laplacian,
    build_grid,
    dirichlet_form,
    embedding_ratio,
    estimate_embedding_constant,
    integrate,
    laplacian_matrix,
    node_coordinates,
    node_dirichlet_energy,
    sine_mode,
    solve_helmholtz,
)
from coupled_brusselator.errors import InvalidArgumentError


def test_grid_three_nodes():
    g = build_grid(1, 1.0, 3)
    assert g.h == (0.25,)
    assert g.measure == 1.0
    assert g.gamma == pytest.approx(32.0 * (1.0 - math.cos(math.pi / 4)), rel=1e-15)
    assert g.gamma == pytest.approx(9.3726, abs=1e-4)


def test_gamma_is_smallest_matrix_eigenvalue():
    for g in (build_grid(1, 2.0, 11), build_grid(2, (1.0, 0.5), (6, 4))):
        eig = np.linalg.eigvalsh(-laplacian_matrix(g).toarray())
        assert eig[0] == pytest.approx(g.gamma, rel=1e-12)


def test_gamma_continuum_limit():
    assert build_grid(1, 1.0, 2000).gamma == pytest.approx(math.pi**2, rel=1e-6)
    assert build_grid(2, 1.0, 400).gamma == pytest.approx(2 * math.pi**2, rel=1e-4)


def test_measure_and_mesh_2d():
    g = build_grid(2, (2.0, 3.0), (3, 5))
    assert g.measure == 6.0
    assert g.h == pytest.approx((0.5, 0.5))
    assert g.shape == (3, 5)


@pytest.mark.parametrize("args", [(3, 1.0, 4), (1, 0.0, 4), (1, -1.0, 4), (1, 1.0, 0), (1, 1.0, 2.5),
                                  (2, (1.0,), (3, 3)), (1, math.inf, 3)])
def test_build_grid_rejects(args):
    with pytest.raises(InvalidArgumentError):
        build_grid(*args)


def test_laplacian_of_sine_mode():
    for g in (build_grid(1, 1.0, 17), build_grid(2, (1.0, 2.0), (9, 13))):
        s = sine_mode(g)
        np.testing.assert_allclose(apply_laplacian(g, s), -g.gamma * s, atol=1e-11 * g.gamma)


def test_laplacian_matches_matrix():
    g = build_grid(2, (1.0, 1.5), (5, 7))
    f = np.random.default_rng(1).standard_normal(g.shape)
    np.testing.assert_allclose(apply_laplacian(g, f).ravel(), laplacian_matrix(g) @ f.ravel(), rtol=1e-12)


def test_laplacian_zero_and_grid_mismatch():
    g = build_grid(1, 1.0, 8)
    assert not np.any(apply_laplacian(g, np.zeros(8)))
    with pytest.raises(InvalidArgumentError):
        apply_laplacian(g, np.zeros(7))


def test_laplacian_leading_axes():
    g = build_grid(1, 1.0, 10)
    f = np.random.default_rng(0).standard_normal((3, 2, 10))
    out = apply_laplacian(g, f)
    np.testing.assert_allclose(out[1, 0], apply_laplacian(g, f[1, 0]))


def test_green_identity_and_poincare():
    g = build_grid(2, (1.0, 1.3), (7, 6))
    rng = np.random.default_rng(3)
    f, q = rng.standard_normal((2,) + g.shape)
    assert integrate(g, apply_laplacian(g, f) * q) == pytest.approx(integrate(g, f * apply_laplacian(g, q)), rel=1e-12)
    assert dirichlet_form(g, f) == pytest.approx(-integrate(g, f * apply_laplacian(g, f)), rel=1e-12)
    assert dirichlet_form(g, f) >= g.gamma * integrate(g, f * f) * (1 - 1e-14)


def test_helmholtz_identity_and_eigenmode():
    for g in (build_grid(1, 1.0, 30), build_grid(2, 1.0, (8, 10))):
        rhs = np.random.default_rng(2).standard_normal(g.shape)
        x = solve_helmholtz(g, 0.37, rhs)
        resid = x - 0.37 * apply_laplacian(g, x) - rhs
        assert np.linalg.norm(resid) <= 1e-12 * np.linalg.norm(rhs)
        s = sine_mode(g)
        np.testing.assert_allclose(solve_helmholtz(g, 0.2, s), s / (1 + 0.2 * g.gamma), atol=1e-14)
        np.testing.assert_array_equal(solve_helmholtz(g, 0.0, rhs), rhs)


def test_helmholtz_rejects_negative_alpha():
    g = build_grid(1, 1.0, 4)
    with pytest.raises(InvalidArgumentError):
        solve_helmholtz(g, -1.0, np.zeros(4))


def test_quadrature_interior_nodes():
    # nodal weights h on interior nodes; closed forms of the discrete sums
    for n in (9, 99):
        g = build_grid(1, 1.0, n)
        (x,) = node_coordinates(g)
        h = g.h[0]
        assert integrate(g, np.ones(n)) == pytest.approx(1.0 - h, rel=1e-14)
        assert integrate(g, x) == pytest.approx(0.5 * (1.0 - h), rel=1e-14)
        assert integrate(g, np.sin(np.pi * x)) == pytest.approx(h / math.tan(math.pi * h / 2), rel=1e-13)


def test_quadrature_second_order_on_dirichlet_fields():
    errs = []
    for n in (15, 31, 63):
        g = build_grid(1, 1.0, n)
        (x,) = node_coordinates(g)
        errs.append(abs(integrate(g, np.sin(np.pi * x)) - 2.0 / math.pi))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert ratios == pytest.approx([4.0, 4.0], rel=0.05)


def test_node_energy_partitions_dirichlet_form():
    g = build_grid(2, 1.0, (5, 6))
    f = np.random.default_rng(5).standard_normal(g.shape)
    shares = node_dirichlet_energy(g, f)
    assert np.all(shares >= 0)
    assert shares.sum() == pytest.approx(dirichlet_form(g, f), rel=1e-13)


def _brute_force_delta(n, starts=8):
    # independent plain-numpy ratio ||phi||_4^2 / ||grad phi||^2 with zero boundary values
    h = 1.0 / (n + 1)

    def neg(phi):
        d = np.diff(np.concatenate([[0.0], phi, [0.0]]))
        grad = np.sum(d * d) / h
        return 0.0 if grad == 0 else -math.sqrt(h * np.sum(phi**4)) / grad

    rng = np.random.default_rng(11)
    x = np.arange(1, n + 1) * h
    best = -neg(np.sin(np.pi * x))
    for k in range(starts):
        x0 = rng.standard_normal(n) if k else np.sin(np.pi * x)
        res = minimize(neg, x0, method="BFGS", options={"gtol": 1e-10})
        best = max(best, -res.fun)
    return build_grid(1, 1.0, n), best


def test_embedding_constant_against_brute_force():
    g, brute = _brute_force_delta(6)
    est = estimate_embedding_constant(g, trials=4, seed=0)
    assert est == pytest.approx(brute, rel=0.05)
    assert est >= embedding_ratio(g, sine_mode(g))


def test_embedding_constant_deterministic_and_validated():
    g = build_grid(1, 1.0, 20)
    assert estimate_embedding_constant(g, 2, seed=4) == estimate_embedding_constant(g, 2, seed=4)
    with pytest.raises(InvalidArgumentError):
        estimate_embedding_constant(g, trials=0)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(min_value=1e-3, max_value=1e3) | st.floats(min_value=-1e3, max_value=-1e-3),
       seed=st.integers(0, 2**16))
def test_embedding_ratio_scale_invariant(c, seed):
    g = build_grid(1, 1.0, 12)
    phi = np.random.default_rng(seed).standard_normal(12)
    assert embedding_ratio(g, c * phi) == pytest.approx(embedding_ratio(g, phi), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(-5, 5), beta=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_laplacian_linear(alpha, beta, seed):
    g = build_grid(2, 1.0, (4, 5))
    f, q = np.random.default_rng(seed).standard_normal((2,) + g.shape)
    lhs = apply_laplacian(g, alpha * f + beta * q)
    rhs = alpha * apply_laplacian(g, f) + beta * apply_laplacian(g, q)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + abs(alpha) + abs(beta)) * np.max(np.abs(apply_laplacian(g, f) + 1)))
