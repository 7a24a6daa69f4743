import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrpce.basis import (
    OrthoBasis,
    build_basis,
    gram_matrix,
    gram_schmidt_basis,
    hermite_basis,
    input_expansion,
    orthogonality_residual,
)
from corrpce.errors import IllConditionedBasisError, MomentOrderError
from corrpce.moments import MomentTable, gaussian_moment_table, uniform_moment_table
from corrpce.polyalg import enumerate_basis_indices

from _oracles import decay_cov, gauss_hermite_2d


@pytest.mark.parametrize("rho", [0.0, 0.5, -0.5, 0.9, -0.9])
def test_orthogonal_under_quadrature(rho, decay_tables):
    # independent check: integrate Phi_i Phi_j with tensor Gauss-Hermite
    t = decay_tables(rho)
    b = build_basis(t, 6)
    pts, w = gauss_hermite_2d([1, 1], decay_cov(rho))
    V = b.evaluate(pts)
    G = (V * w[:, None]).T @ V
    d = np.sqrt(np.diag(G))
    R = G / np.outer(d, d)
    np.fill_diagonal(R, 0.0)
    assert np.abs(R).max() < 1e-10
    np.testing.assert_allclose(np.diag(G), b.sq_norms, rtol=1e-9)


def test_monic_structure(decay_tables):
    b = build_basis(decay_tables(0.5), 4)
    np.testing.assert_array_equal(np.diag(b.coeffs), 1.0)
    assert np.all(np.triu(b.coeffs, 1) == 0.0)
    assert b.sq_norms[0] == 1.0
    # Phi_1 = alpha - E[alpha]
    assert b.polys[1].coeff((0, 0)) == pytest.approx(-1.0)


def test_hermite_equivalence_independent(decay_tables):
    t = decay_tables(0.0)
    idx = enumerate_basis_indices(2, 8)
    gs, he = gram_schmidt_basis(idx, t), hermite_basis(idx, t)
    assert np.abs(gs.coeffs - he.coeffs).max() <= 1e-10
    np.testing.assert_allclose(gs.sq_norms, he.sq_norms, rtol=1e-12)


def test_univariate_hermite_closed_form():
    # mean 2, sd 0.5: Phi_2 = (x-2)^2 - 0.25, norm 2 * 0.5^4
    t = gaussian_moment_table([2.0], [[0.25]], 8)
    b = build_basis(t, 2)
    np.testing.assert_allclose(b.coeffs[2], [4.0 - 0.25, -4.0, 1.0], atol=1e-13)
    assert b.sq_norms[2] == pytest.approx(2 * 0.5 ** 4)


def test_legendre_for_uniform():
    t = uniform_moment_table([-1.0], [1.0], 8)
    b = build_basis(t, 3)
    # monic Legendre: x^2 - 1/3, x^3 - 3x/5
    np.testing.assert_allclose(b.coeffs[2], [-1 / 3, 0, 1, 0], atol=1e-14)
    np.testing.assert_allclose(b.coeffs[3], [0, -0.6, 0, 1], atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(-3, 3))
def test_residual_small_random_gaussians(rho, s1, s2, m):
    cov = np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])
    t = gaussian_moment_table([m, 1.0], cov, 8)
    b = build_basis(t, 4)
    assert orthogonality_residual(b, t) <= 1e-9


@settings(max_examples=10, deadline=None)
@given(deg1=st.permutations([(1, 0), (0, 1)]), deg2=st.permutations([(2, 0), (1, 1), (0, 2)]))
def test_ordering_within_degree_spans_same_space(deg1, deg2, decay_tables):
    # reordering monomials inside a degree changes the basis but not the projections
    t = decay_tables(0.5)
    idx = enumerate_basis_indices(2, 2)
    b = gram_schmidt_basis([(0, 0)] + list(deg1) + list(deg2), t)
    ref = gram_schmidt_basis(idx, t)
    f = lambda x: np.exp(0.3 * x[:, 0]) * x[:, 1]
    pts, w = gauss_hermite_2d([1, 1], decay_cov(0.5))

    def proj(basis):
        V = basis.evaluate(pts)
        c = (V * w[:, None]).T @ f(pts) / basis.sq_norms
        return V @ c

    np.testing.assert_allclose(proj(b), proj(ref), atol=1e-9)
    assert orthogonality_residual(b, t) < 1e-9


def test_input_expansion_reproduces_inputs(decay_tables):
    t = decay_tables(-0.5)
    b = build_basis(t, 3)
    c = input_expansion(b, t)
    x = np.array([[0.3, 1.7], [1.0, 1.0], [2.0, -0.5]])
    np.testing.assert_allclose(b.evaluate(x) @ c.T, x, atol=1e-12)


def test_input_expansion_order_zero_warns(decay_tables):
    t = decay_tables(0.0)
    b = build_basis(t, 0)
    with pytest.warns(UserWarning):
        c = input_expansion(b, t)
    np.testing.assert_allclose(c, [[1.0], [1.0]])


def test_insufficient_moments():
    t = gaussian_moment_table([0.0, 0.0], np.eye(2), 5)
    with pytest.raises(MomentOrderError):
        build_basis(t, 3)


def test_max_order_cap(decay_tables):
    with pytest.raises(ValueError, match="max_order"):
        build_basis(decay_tables(0.0), 11)


def test_inconsistent_moments_detected():
    # a two-point distribution cannot support a degree-2 orthogonal polynomial
    x = np.array([[-1.0], [1.0]])
    from corrpce.moments import empirical_moments

    t = empirical_moments(x, 4)
    with pytest.raises(IllConditionedBasisError):
        build_basis(t, 2)


def test_serialization_roundtrip(tmp_path, decay_tables):
    t = decay_tables(0.9)
    b = build_basis(t, 3)
    p = tmp_path / "b.json"
    b.to_json(p)
    back = OrthoBasis.from_json(str(p))
    np.testing.assert_array_equal(back.coeffs, b.coeffs)
    assert back.table_hash == t.content_hash
    assert orthogonality_residual(back, t) < 1e-9


def test_gram_matrix_symmetric(decay_tables):
    G = gram_matrix(decay_tables(0.5), enumerate_basis_indices(2, 3))
    np.testing.assert_array_equal(G, G.T)
