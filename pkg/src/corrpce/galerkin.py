"""Galerkin projection of polynomial ODE systems with random parameters."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import OrthoBasis
from .moments import AffineReparam, MomentTable
from .ode import OdeResult, dopri5
from .polyalg import Polynomial, affine_transform_matrix, enumerate_basis_indices, substitute_affine, total_degree

#: Relative threshold below which projected tensor entries are dropped.
PRUNE_RTOL = 1e-13
DEFAULT_GRID_POINTS = 200


@dataclass(frozen=True)
class Term:
    """``coefficient * xi**param_exponents * prod(y[s] for s in state_factors)`` added to ``dy[target]/dt``."""

    target: int
    coefficient: float
    param_exponents: tuple
    state_factors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "param_exponents", tuple(int(e) for e in self.param_exponents))
        object.__setattr__(self, "state_factors", tuple(sorted(int(s) for s in self.state_factors)))
        if len(self.state_factors) > 2:
            raise ValueError("at most two state factors per term")
        if any(e < 0 for e in self.param_exponents):
            raise ValueError("negative parameter exponent")


@dataclass(frozen=True)
class GalerkinModel:
    state_names: tuple
    terms: tuple
    initial_conditions: np.ndarray
    n_params: int
    param_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "terms", tuple(self.terms))
        ic = np.asarray(self.initial_conditions, dtype=float)
        object.__setattr__(self, "initial_conditions", ic)
        if not self.param_names:
            object.__setattr__(self, "param_names", tuple(f"xi{l + 1}" for l in range(self.n_params)))
        S = len(self.state_names)
        if ic.shape != (S,):
            raise ValueError("one initial condition per state required")
        for t in self.terms:
            if len(t.param_exponents) != self.n_params:
                raise ValueError(f"term {t} does not have {self.n_params} parameter exponents")
            if not 0 <= t.target < S or any(not 0 <= s < S for s in t.state_factors):
                raise ValueError(f"term {t} references an unknown state")

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def r_max(self) -> int:
        return max((total_degree(t.param_exponents) for t in self.terms), default=0)

    def required_order(self, p: int) -> int:
        """Moment order needed to project every term onto a degree-``p`` basis."""
        return max(((len(t.state_factors) + 1) * p + total_degree(t.param_exponents) for t in self.terms), default=2 * p)


def substitute_affine_parameters(model: GalerkinModel, reparam: AffineReparam) -> GalerkinModel:
    """Rewrite the model in reduced parameters ``eta`` with ``xi = offset + matrix @ eta``."""
    if reparam.full_dimension != model.n_params:
        raise ValueError(
            f"reparameterization maps to {reparam.full_dimension} parameters, model has {model.n_params}"
        )
    d = reparam.reduced_dimension
    merged: dict = {}
    for t in model.terms:
        poly = substitute_affine(Polynomial.monomial(t.param_exponents), reparam.offset, reparam.matrix)
        for r, c in poly.items():
            key = (t.target, r, t.state_factors)
            merged[key] = merged.get(key, 0.0) + t.coefficient * c
    terms = [Term(tg, c, r, f) for (tg, r, f), c in merged.items() if c != 0.0]
    names = tuple(f"eta{l + 1}" for l in range(d))
    return GalerkinModel(model.state_names, tuple(terms), model.initial_conditions, d, names)


@dataclass
class GalerkinTensors:
    """Projected operators grouped by (parameter monomial, state factors).

    ``groups`` holds ``(factors, tensor, targets, coefs)``; ``tensor`` is 1-, 2-
    or 3-D depending on the number of state factors, indexed ``[..., k]``.
    """

    size: int
    n_states: int
    groups: list = field(default_factory=list)
    table_hash: str = ""

    def rhs(self, t, y: np.ndarray) -> np.ndarray:
        K = self.size
        u = y.reshape(self.n_states, K)
        out = np.zeros((self.n_states, K))
        for factors, T, targets, coefs in self.groups:
            if not factors:
                v = T
            elif len(factors) == 1:
                v = u[factors[0]] @ T
            else:
                v = u[factors[1]] @ (u[factors[0]] @ T.reshape(K, K * K)).reshape(K, K)
            for s, c in zip(targets, coefs):
                out[s] += c * v
        return out.ravel()


def _prune(T: np.ndarray) -> np.ndarray:
    flat = T.reshape(-1, T.shape[-1])
    thresh = PRUNE_RTOL * np.abs(flat).max(axis=0)
    return np.where(np.abs(T) < thresh, 0.0, T)


def compile_model(model: GalerkinModel, basis: OrthoBasis, table: MomentTable) -> GalerkinTensors:
    """Project every model term onto the basis using moments of ``table``."""
    if basis.table_hash != table.content_hash:
        raise ValueError("basis was not built from this moment table")
    if model.n_params != basis.dimension:
        raise ValueError(f"model has {model.n_params} parameters, basis is {basis.dimension}-D")
    p = basis.order
    need = model.required_order(p)
    table.require(need, f"Galerkin projection at p={p}, r_max={model.r_max}")
    n, K = basis.dimension, basis.size
    F = basis.coefficients_in(table)
    w_idx = list(basis.frame_indices)
    w_keys = table.keys(w_idx)
    inv_norm = 1.0 / basis.sq_norms

    by_key: dict = {}
    for t in model.terms:
        key = (t.param_exponents, t.state_factors)
        by_key.setdefault(key, []).append((t.target, t.coefficient))

    groups = []
    for (r, factors), pairs in by_key.items():
        nf = len(factors)
        r_deg = total_degree(r)
        q_idx = enumerate_basis_indices(n, r_deg)
        row, _ = affine_transform_matrix([r], table.frame_loc, table.frame_matrix, q_idx)
        qc = row[0]
        q_keys = table.keys(q_idx)
        T = np.zeros((K,) * (nf + 1))
        for q, c in zip(q_keys, qc):
            if c == 0.0:
                continue
            if nf == 0:
                g = table.frame_values[table.positions(w_keys + q)]
                T += c * (F @ g)
            elif nf == 1:
                G = table.frame_values[table.positions(w_keys[:, None] + w_keys[None, :] + q)]
                T += c * (F @ G @ F.T)
            else:
                G = table.frame_values[
                    table.positions(w_keys[:, None, None] + w_keys[None, :, None] + w_keys[None, None, :] + q)
                ]
                T += c * np.einsum("ia,jb,kc,abc->ijk", F, F, F, G, optimize=True)
        T = _prune(T * inv_norm)
        if nf == 2:
            T = 0.5 * (T + T.transpose(1, 0, 2))
        groups.append((factors, T, tuple(s for s, _ in pairs), tuple(c for _, c in pairs)))
    return GalerkinTensors(K, model.n_states, groups, table.content_hash)


@dataclass
class ExpandedSolution:
    times: np.ndarray
    coefficients: np.ndarray  # (n_states, n_times, N+1)
    basis: OrthoBasis
    state_names: tuple
    n_steps: int = 0
    n_rejected: int = 0
    dense: OdeResult | None = field(default=None, repr=False)

    def state_index(self, state) -> int:
        return self.state_names.index(state) if isinstance(state, str) else int(state)

    def coefficients_at(self, t: float) -> np.ndarray:
        """(n_states, N+1) coefficients at an arbitrary time inside the span."""
        hit = np.flatnonzero(self.times == t)
        if hit.size:
            return self.coefficients[:, hit[0], :]
        lo, hi = self.times.min(), self.times.max()
        if not lo <= t <= hi:
            raise ValueError(f"t={t} outside the solved span [{lo}, {hi}]")
        if self.dense is None:
            raise ValueError("no dense output stored; request t on the output grid")
        return self.dense.sol(t).reshape(len(self.state_names), -1)


def integrate(
    tensors: GalerkinTensors,
    model: GalerkinModel,
    t_span: tuple[float, float],
    abs_tol: float = 1e-6,
    rel_tol: float = 1e-6,
    t_eval: Sequence[float] | None = None,
    *,
    basis: OrthoBasis | None = None,
    dense: bool = True,
) -> ExpandedSolution:
    """Integrate the coupled coefficient system from deterministic initial conditions."""
    S, K = model.n_states, tensors.size
    u0 = np.zeros((S, K))
    u0[:, 0] = model.initial_conditions
    if t_eval is None:
        t_eval = np.linspace(t_span[0], t_span[1], DEFAULT_GRID_POINTS)
    res = dopri5(tensors.rhs, t_span, u0.ravel(), t_eval, rtol=rel_tol, atol=abs_tol, dense=dense)
    coeffs = res.y.reshape(len(res.t), S, K).transpose(1, 0, 2).copy()
    return ExpandedSolution(
        np.asarray(res.t), coeffs, basis, model.state_names, res.n_steps, res.n_rejected, res if dense else None
    )


def solve_galerkin(model, basis, table, t_span, **kwargs) -> ExpandedSolution:
    """Compile and integrate in one call."""
    return integrate(compile_model(model, basis, table), model, t_span, basis=basis, **kwargs)


def evaluate_surrogate(solution: ExpandedSolution, basis: OrthoBasis, xi, t: float) -> np.ndarray:
    """Surrogate state values at parameter points ``xi``; shape (m, n_states) or (n_states,)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    u = solution.coefficients_at(t)
    vals = basis.evaluate(np.atleast_2d(xi)) @ u.T
    return vals[0] if single else vals


def evaluate_model_rhs(model: GalerkinModel, params: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Deterministic right-hand side for a batch: ``params`` (m, n), ``y`` (m, S)."""
    params = np.atleast_2d(params)
    y = np.atleast_2d(y)
    out = np.zeros_like(y)
    for t in model.terms:
        v = t.coefficient * np.prod(params ** np.asarray(t.param_exponents), axis=1)
        for s in t.state_factors:
            v = v * y[:, s]
        out[:, t.target] += v
    return out


def solution_to_csv(solution: ExpandedSolution, path=None, header: dict | None = None) -> str:
    """Long-format coefficient table: t, state, basis_index, coefficient."""
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "state", "basis_index", "coefficient"])
    S, T, K = solution.coefficients.shape
    for it, t in enumerate(solution.times):
        for s in range(S):
            for j in range(K):
                w.writerow([repr(float(t)), solution.state_names[s], j, repr(float(solution.coefficients[s, it, j]))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
