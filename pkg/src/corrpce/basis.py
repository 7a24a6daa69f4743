"""Orthogonal polynomial bases built by Gram-Schmidt on monic monomials."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial import hermite_e

from .errors import IllConditionedBasisError
from .moments import MomentTable
from .polyalg import (
    MultiIndex,
    Polynomial,
    affine_transform_matrix,
    enumerate_basis_indices,
    substitute_affine,
    total_degree,
    unit_index,
)

#: Default ceiling on the expansion order; pass ``max_order`` to lift it.
DEFAULT_MAX_ORDER = 10
#: Normalized cross inner products above this flag a non-orthogonal basis.
ORTHOGONALITY_TOL = 1e-9
_NORM_RTOL = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Polynomials Phi_0..Phi_N orthogonal under one input measure.

    ``coeffs[j]`` holds Phi_j over the monic monomials ``indices`` (unit
    lower-triangular: Phi_j = e_j + lower members).  ``frame_coeffs[j]`` is
    the same polynomial written in the whitened frame variable of the
    generating moment table, which is what the numerics use.
    """

    indices: tuple
    coeffs: np.ndarray
    sq_norms: np.ndarray
    frame_loc: np.ndarray
    frame_matrix: np.ndarray
    frame_indices: tuple
    frame_coeffs: np.ndarray
    table_hash: str

    @property
    def dimension(self) -> int:
        return len(self.indices[0])

    @property
    def order(self) -> int:
        return max(total_degree(k) for k in self.indices)

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self):
        return self.size

    @cached_property
    def _pos(self) -> dict:
        return {k: i for i, k in enumerate(self.indices)}

    def position(self, index: Sequence[int]) -> int:
        return self._pos[tuple(index)]

    @property
    def polys(self) -> list[Polynomial]:
        return [Polynomial.from_vector(self.indices, row) for row in self.coeffs]

    def to_frame(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return np.linalg.solve(self.frame_matrix, (xi - self.frame_loc).T).T

    def evaluate(self, xi) -> np.ndarray:
        """Values of every Phi_j at the rows of ``xi``; shape (m, N+1)."""
        w = self.to_frame(xi)
        mono = np.ones((w.shape[0], len(self.frame_indices)))
        for i, k in enumerate(self.frame_indices):
            mono[:, i] = np.prod(w ** np.asarray(k), axis=1)
        return mono @ self.frame_coeffs.T

    def coefficients_in(self, table: MomentTable) -> np.ndarray:
        """Frame coefficients of the basis in the frame of ``table``."""
        if table.same_frame(self.frame_loc, self.frame_matrix):
            return self.frame_coeffs
        E, _ = affine_transform_matrix(self.indices, table.frame_loc, table.frame_matrix, self.frame_indices)
        return self.coeffs @ E

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "indices": [list(k) for k in self.indices],
            "coeffs": self.coeffs.tolist(),
            "sq_norms": self.sq_norms.tolist(),
            "frame": {
                "loc": self.frame_loc.tolist(),
                "matrix": self.frame_matrix.tolist(),
                "indices": [list(k) for k in self.frame_indices],
                "coeffs": self.frame_coeffs.tolist(),
            },
            "table_hash": self.table_hash,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, doc: dict) -> "OrthoBasis":
        fr = doc["frame"]
        return cls(
            tuple(tuple(k) for k in doc["indices"]),
            np.asarray(doc["coeffs"], dtype=float),
            np.asarray(doc["sq_norms"], dtype=float),
            np.asarray(fr["loc"], dtype=float),
            np.asarray(fr["matrix"], dtype=float),
            tuple(tuple(k) for k in fr["indices"]),
            np.asarray(fr["coeffs"], dtype=float),
            doc["table_hash"],
        )

    @classmethod
    def from_json(cls, text_or_path: str) -> "OrthoBasis":
        text = text_or_path
        if not text_or_path.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _check_indices(indices) -> list[MultiIndex]:
    idx = [tuple(int(e) for e in k) for k in indices]
    if not idx:
        raise ValueError("empty index list")
    n = len(idx[0])
    if any(len(k) != n for k in idx):
        raise ValueError("indices have mixed dimensions")
    if idx[0] != (0,) * n:
        raise ValueError("the first monic polynomial must be the constant 1")
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate indices")
    degs = [total_degree(k) for k in idx]
    if any(b < a for a, b in zip(degs, degs[1:])):
        raise ValueError("indices must be graded (total degree non-decreasing)")
    return idx


def gram_matrix(table: MomentTable, indices: Sequence[MultiIndex]) -> np.ndarray:
    """``G[a, b] = E_w[w**(a+b)]`` in the frame of ``table``."""
    k = table.keys(indices)
    return table.frame_values[table.positions(k[:, None] + k[None, :])]


def gram_schmidt_basis(indices, table: MomentTable, *, max_order: int = DEFAULT_MAX_ORDER) -> OrthoBasis:
    """Orthogonalize the monic monomials ``indices`` against ``table``'s measure.

    Modified Gram-Schmidt with one full re-orthogonalization pass.  Inner
    products are raw-moment sums evaluated in the table's whitened frame.
    """
    idx = _check_indices(indices)
    n = len(idx[0])
    if n != table.dimension:
        raise ValueError(f"indices are {n}-D, table is {table.dimension}-D")
    p = max(total_degree(k) for k in idx)
    if p > max_order:
        raise ValueError(f"order {p} exceeds max_order={max_order}; raise the cap explicitly")
    table.require(2 * p, "Gram-Schmidt")
    w_idx = enumerate_basis_indices(n, p)
    E, _ = affine_transform_matrix(idx, table.frame_loc, table.frame_matrix, w_idx)
    G = gram_matrix(table, w_idx)

    K, Kw = len(idx), len(w_idx)
    F = np.zeros((K, Kw))
    GF = np.zeros((K, Kw))
    A = np.zeros((K, K))
    norms = np.zeros(K)
    for j in range(K):
        v = E[j].copy()
        a = np.zeros(K)
        a[j] = 1.0
        for _ in range(2):
            for k in range(j):
                c = (v @ GF[k]) / norms[k]
                v -= c * F[k]
                a[:j] -= c * A[k, :j]
        nrm = v @ G @ v
        scale = E[j] @ G @ E[j]
        if not nrm > _NORM_RTOL * scale:
            raise IllConditionedBasisError(
                f"moment table inconsistent or ill-conditioned at degree {total_degree(idx[j])}: "
                f"squared norm {nrm:.3g} for monomial {idx[j]}"
            )
        F[j], A[j], norms[j], GF[j] = v, a, nrm, G @ v
    return OrthoBasis(
        tuple(idx), A, norms, table.frame_loc.copy(), table.frame_matrix.copy(),
        tuple(w_idx), F, table.content_hash,
    )


def build_basis(table: MomentTable, order: int, **kwargs) -> OrthoBasis:
    return gram_schmidt_basis(enumerate_basis_indices(table.dimension, order), table, **kwargs)


def orthogonality_residual(basis: OrthoBasis, table: MomentTable) -> float:
    """max_{i != j} |<Phi_i, Phi_j>| / (||Phi_i|| ||Phi_j||) under ``table``."""
    if basis.size == 1:
        return 0.0
    table.require(2 * basis.order, "orthogonality check")
    F = basis.coefficients_in(table)
    P = F @ gram_matrix(table, basis.frame_indices) @ F.T
    d = np.sqrt(np.abs(np.diag(P)))
    R = np.abs(P) / np.outer(d, d)
    np.fill_diagonal(R, 0.0)
    return float(R.max())


def input_expansion(basis: OrthoBasis, table: MomentTable) -> np.ndarray:
    """Expansion coefficients of each input variable xi_l on the basis.

    Returns an (n, N+1) array.  For p >= 1 the representation is exact:
    xi_l is itself a monic member, so its coefficients are the l-th unit
    row of the inverse monic-coefficient matrix.
    """
    n, K = basis.dimension, basis.size
    out = np.zeros((n, K))
    for l in range(n):
        e = unit_index(n, l)
        if e not in basis._pos:
            warnings.warn("order-0 basis cannot represent the inputs; keeping only their mean", stacklevel=2)
            out[l, 0] = table[e]
            continue
        rhs = np.zeros(K)
        rhs[basis.position(e)] = 1.0
        out[l] = np.linalg.solve(basis.coeffs.T, rhs)
    return out


def hermite_basis(indices, table: MomentTable) -> OrthoBasis:
    """Tensor products of scaled probabilists' Hermite polynomials.

    Only valid for independent Gaussian inputs whose table frame is diagonal
    (loc = mean, scale = std).  Built from closed forms, not from moments.
    """
    idx = _check_indices(indices)
    L = table.frame_matrix
    if not np.array_equal(L, np.diag(np.diag(L))):
        raise ValueError("Hermite tensor basis needs independent inputs")
    loc, sig = table.frame_loc, np.diag(L)
    n = len(idx[0])
    p = max(total_degree(k) for k in idx)
    w_idx = enumerate_basis_indices(n, p)
    wpos = {k: i for i, k in enumerate(w_idx)}
    he = [hermite_e.herme2poly([0] * k + [1]) for k in range(p + 1)]
    F = np.zeros((len(idx), len(w_idx)))
    A = np.zeros((len(idx), len(idx)))
    norms = np.zeros(len(idx))
    for j, k in enumerate(idx):
        terms = {(0,) * n: math.prod(sig[l] ** k[l] for l in range(n))}
        for l in range(n):
            new = {}
            for t, c in terms.items():
                for e, h in enumerate(he[k[l]]):
                    if h:
                        key = t[:l] + (e,) + t[l + 1:]
                        new[key] = new.get(key, 0.0) + c * h
            terms = new
        for t, c in terms.items():
            F[j, wpos[t]] = c
        poly_xi = substitute_affine(Polynomial(terms, n), -loc / sig, np.diag(1.0 / sig))
        A[j] = poly_xi.to_vector(idx)
        A[j, j] = 1.0
        norms[j] = math.prod(sig[l] ** (2 * k[l]) * math.factorial(k[l]) for l in range(n))
    return OrthoBasis(tuple(idx), A, norms, loc.copy(), L.copy(), tuple(w_idx), F, table.content_hash)
