import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrpce.basis import build_basis
from corrpce.errors import MomentOrderError
from corrpce.galerkin import (
    GalerkinModel,
    Term,
    compile_model,
    evaluate_model_rhs,
    evaluate_surrogate,
    solution_to_csv,
    solve_galerkin,
    substitute_affine_parameters,
)
from corrpce.moments import AffineReparam, gaussian_moment_table, reduce_singular_gaussian
from corrpce.scenarios import decay_degenerate_model, decay_model, enzyme_setup

from _oracles import decay_cov

E1 = 1.0 - np.exp(-1.0)


def _group(tensors, factors=()):
    return [g for g in tensors.groups if g[0] == factors]


def test_p0_tensors(decay_tables):
    t = decay_tables(0.5)
    b = build_basis(t, 0)
    T = compile_model(decay_model(), b, t)
    (lin,) = _group(T, factors=(0,))
    (src,) = _group(T, factors=())
    assert lin[1][0, 0] == pytest.approx(1.0)  # E[alpha], coefficient -1 kept separately
    assert lin[3] == (-1.0,)
    assert src[1][0] == pytest.approx(1.03125, abs=1e-14)


@pytest.mark.parametrize("rho,expected", [(0.0, E1), (0.5, 1.03125 * E1)])
def test_p0_solution_closed_form(rho, expected, decay_tables):
    t = decay_tables(rho)
    sol = solve_galerkin(decay_model(), build_basis(t, 0), t, (0, 1), abs_tol=1e-10, rel_tol=1e-10)
    assert sol.coefficients[0, -1, 0] == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("rho", [0.0, 0.9])
def test_identity_and_symmetry(rho, decay_tables):
    t = decay_tables(rho)
    b = build_basis(t, 3)
    ident = GalerkinModel(("y", "z"), (Term(0, 1.0, (0, 0), (1,)), Term(1, 1.0, (0, 0), (0, 1))), [0, 0], 2)
    T = compile_model(ident, b, t)
    lin = _group(T, factors=(1,))[0][1]
    np.testing.assert_allclose(lin, np.eye(b.size), atol=1e-9)
    bil = _group(T, factors=(0, 1))[0][1]
    np.testing.assert_array_equal(bil, bil.transpose(1, 0, 2))


def test_bilinear_tensor_matches_quadrature(decay_tables):
    from _oracles import gauss_hermite_2d

    t = decay_tables(-0.5)
    b = build_basis(t, 2)
    m = GalerkinModel(("y",), (Term(0, 1.0, (1, 0), (0, 0)),), [0.0], 2)
    T = compile_model(m, b, t).groups[0][1]
    pts, w = gauss_hermite_2d([1, 1], decay_cov(-0.5))
    V = b.evaluate(pts)
    ref = np.einsum("q,q,qi,qj,qk->ijk", w, pts[:, 0], V, V, V) / b.sq_norms
    np.testing.assert_allclose(T, ref, atol=1e-11)


def test_required_order_error():
    t = gaussian_moment_table([1, 1], decay_cov(0.0), 16)
    b = build_basis(t, 8)
    with pytest.raises(MomentOrderError, match="order 17"):
        compile_model(decay_model(), b, t)


def test_mismatched_table_rejected(decay_tables):
    b = build_basis(decay_tables(0.0), 2)
    with pytest.raises(ValueError, match="not built from"):
        compile_model(decay_model(), b, decay_tables(0.5))


def test_initial_condition_projection(decay_tables):
    t = decay_tables(0.9)
    sol = solve_galerkin(decay_model(), build_basis(t, 8), t, (0, 1))
    assert np.all(sol.coefficients[:, 0, :] == 0.0)
    assert sol.coefficients.shape == (1, 200, 45)


def test_substitution_plus_one():
    r = reduce_singular_gaussian([1, 1], decay_cov(1.0))
    m = substitute_affine_parameters(decay_model(), r)
    assert m.n_params == 1
    terms = {(t.param_exponents, t.state_factors): t.coefficient for t in m.terms}
    assert terms == {((1,), (0,)): -1.0, ((2,), ()): 1.0}


def test_substitution_minus_one():
    r = reduce_singular_gaussian([1, 1], decay_cov(-1.0))
    m = substitute_affine_parameters(decay_model(), r)
    terms = {(t.param_exponents, t.state_factors): t.coefficient for t in m.terms}
    assert terms == pytest.approx({((1,), (0,)): -1.0, ((2,), ()): -1.0, ((1,), ()): 2.0})
    ref = {(t.param_exponents, t.state_factors): t.coefficient for t in decay_degenerate_model(-1).terms}
    assert terms == pytest.approx(ref)


def test_substitution_identity():
    m = decay_model()
    out = substitute_affine_parameters(m, AffineReparam([0, 0], np.eye(2), None))
    assert sorted(out.terms, key=repr) == sorted(m.terms, key=repr)


def test_substitution_dimension_mismatch():
    with pytest.raises(ValueError):
        substitute_affine_parameters(decay_model(), AffineReparam([0, 0, 0], np.ones((3, 1)), None))


def test_surrogate_at_mean(decay_tables):
    t = decay_tables(0.0)
    b = build_basis(t, 8)
    sol = solve_galerkin(decay_model(), b, t, (0, 1))
    assert evaluate_surrogate(sol, b, [1.0, 1.0], 1.0)[0] == pytest.approx(E1, abs=1e-3)
    np.testing.assert_array_equal(evaluate_surrogate(sol, b, [[0.3, 2.0], [1.1, 0.9]], 0.0), 0.0)
    with pytest.raises(ValueError):
        evaluate_surrogate(sol, b, [1.0, 1.0], 1.5)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.05, 1.0))
def test_surrogate_matches_direct_solve(z1, z2, t_query):
    t = gaussian_moment_table([1, 1], decay_cov(0.5), 17)
    b = build_basis(t, 8)
    sol = _cached_decay_solution(t, b)
    xi = np.array([1 + 0.25 * z1, 1 + 0.25 * z2])
    exact = xi[1] * (1 - np.exp(-xi[0] * t_query))
    assert abs(evaluate_surrogate(sol, b, xi, t_query)[0] - exact) <= 1e-3


_SOL = {}


def _cached_decay_solution(t, b):
    if "s" not in _SOL:
        _SOL["s"] = solve_galerkin(decay_model(), b, t, (0, 1))
    return _SOL["s"]


def test_model_rhs_batch():
    m = decay_model()
    params = np.array([[1.0, 2.0], [0.5, 1.0]])
    y = np.array([[0.5], [0.0]])
    np.testing.assert_allclose(evaluate_model_rhs(m, params, y), [[-1.0 * (0.5 - 2.0)], [0.5]])


def test_enzyme_conservation_per_coefficient():
    model, table, _ = enzyme_setup(np.eye(3), 3)
    b = build_basis(table, 3)
    sol = solve_galerkin(model, b, table, (0, 20))
    S, C, E, P = sol.coefficients
    drift1 = np.abs((E + C) - (E + C)[0]).max()
    drift2 = np.abs((S + C + P) - (S + C + P)[0]).max()
    assert drift1 <= 1e-5 and drift2 <= 1e-5


def test_term_validation():
    with pytest.raises(ValueError):
        Term(0, 1.0, (1,), (0, 0, 0))
    with pytest.raises(ValueError):
        GalerkinModel(("y",), (Term(0, 1.0, (1, 0)),), [0.0], 1)


def test_csv_export(decay_tables):
    t = decay_tables(0.0)
    b = build_basis(t, 1)
    sol = solve_galerkin(decay_model(), b, t, (0, 1), t_eval=[0.0, 1.0])
    lines = solution_to_csv(sol).splitlines()
    assert lines[0] == "t,state,basis_index,coefficient"
    assert len(lines) == 1 + 2 * 3
    assert lines[1] == "0.0,y,0,0.0"
