"""Multi-indices and sparse multivariate polynomials.

A multi-index is a plain tuple of non-negative ints ``(j_1, ..., j_n)`` naming
the monomial ``xi_1**j_1 * ... * xi_n**j_n``.  Polynomials are sparse maps from
multi-index to coefficient.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BasisSizeError, MomentOrderError

MultiIndex = tuple[int, ...]

#: Hard limit on the number of basis members a truncation may produce.
MAX_BASIS_SIZE = 200_000

#: Relative threshold below which coefficients are dropped after arithmetic.
PRUNE_RTOL = 1e-14


def total_degree(index: Sequence[int]) -> int:
    return int(sum(index))


def basis_size(n: int, p: int) -> int:
    """Number of monomials in ``n`` variables with total degree <= ``p``."""
    if n < 1 or p < 0:
        raise ValueError(f"need n >= 1 and p >= 0, got n={n}, p={p}")
    size = math.comb(n + p, p)
    if size > MAX_BASIS_SIZE:
        raise BasisSizeError(
            f"(n={n}, p={p}) gives {size} basis terms, above the limit of {MAX_BASIS_SIZE}"
        )
    return size


def _compositions(n: int, d: int):
    # lexicographically descending: (d,0,..) first, (..,0,d) last
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(n - 1, d - first):
            yield (first,) + rest


def enumerate_basis_indices(n: int, p: int) -> list[MultiIndex]:
    """All multi-indices of total degree <= p in graded-lexicographic order.

    >>> enumerate_basis_indices(2, 2)
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    """
    basis_size(n, p)
    out: list[MultiIndex] = []
    for d in range(p + 1):
        out.extend(_compositions(n, d))
    return out


def unit_index(n: int, l: int, power: int = 1) -> MultiIndex:
    e = [0] * n
    e[l] = power
    return tuple(e)


def index_add(a: Sequence[int], b: Sequence[int]) -> MultiIndex:
    return tuple(int(x) + int(y) for x, y in zip(a, b))


def _prune(terms: dict[MultiIndex, float]) -> dict[MultiIndex, float]:
    if not terms:
        return terms
    cutoff = PRUNE_RTOL * max(abs(c) for c in terms.values())
    return {k: c for k, c in terms.items() if c != 0.0 and abs(c) >= cutoff}


class Polynomial:
    """Immutable sparse polynomial in ``dim`` variables."""

    __slots__ = ("_terms", "dim")

    def __init__(self, terms: Mapping[Sequence[int], float], dim: int | None = None):
        clean: dict[MultiIndex, float] = {}
        for idx, c in terms.items():
            key = tuple(int(k) for k in idx)
            if any(k < 0 for k in key):
                raise ValueError(f"negative exponent in {key}")
            if dim is None:
                dim = len(key)
            elif len(key) != dim:
                raise ValueError(f"index {key} does not have dimension {dim}")
            c = float(c)
            if c != 0.0:
                clean[key] = clean.get(key, 0.0) + c
        if dim is None:
            raise ValueError("dimension of an empty polynomial must be given")
        self._terms = {k: c for k, c in clean.items() if c != 0.0}
        self.dim = int(dim)

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, value: float, dim: int) -> "Polynomial":
        return cls({(0,) * dim: value}, dim)

    @classmethod
    def monomial(cls, index: Sequence[int], coeff: float = 1.0) -> "Polynomial":
        return cls({tuple(index): coeff}, len(index))

    @classmethod
    def variable(cls, l: int, dim: int) -> "Polynomial":
        return cls.monomial(unit_index(dim, l))

    @classmethod
    def from_vector(cls, indices: Sequence[MultiIndex], coeffs: Sequence[float]) -> "Polynomial":
        if len(indices) != len(coeffs):
            raise ValueError("indices and coefficients differ in length")
        dim = len(indices[0])
        return cls(dict(zip(map(tuple, indices), map(float, coeffs))), dim)

    # -- accessors ----------------------------------------------------
    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, index: Sequence[int]) -> float:
        return self._terms.get(tuple(index), 0.0)

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(total_degree(k) for k in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def to_vector(self, indices: Sequence[MultiIndex]) -> np.ndarray:
        pos = {tuple(k): i for i, k in enumerate(indices)}
        out = np.zeros(len(indices))
        for k, c in self._terms.items():
            if k not in pos:
                raise KeyError(f"monomial {k} not in the target index set")
            out[pos[k]] = c
        return out

    def __len__(self):
        return len(self._terms)

    def __repr__(self):
        if not self._terms:
            return f"Polynomial(0, dim={self.dim})"
        parts = [f"{c:+.6g}*{list(k)}" for k, c in sorted(self._terms.items(), key=lambda kv: (sum(kv[0]), tuple(-e for e in kv[0])))]
        return "Polynomial(" + " ".join(parts) + ")"

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dim == other.dim and self._terms == other._terms

    def __hash__(self):
        return hash((self.dim, frozenset(self._terms.items())))

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(k) - other.coeff(k)) <= atol for k in keys)

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Polynomial"):
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.dim)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial(_prune(out), self.dim)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({k: -c for k, c in self._terms.items()}, self.dim)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return Polynomial({k: float(other) * c for k, c in self._terms.items()}, self.dim)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return poly_product(self, other)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = Polynomial.constant(1.0, self.dim)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    # -- evaluation ---------------------------------------------------
    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have {pts.shape[1]} coordinates, polynomial has {self.dim}")
        val = np.zeros(pts.shape[0])
        for k, c in self._terms.items():
            val += c * np.prod(pts ** np.asarray(k), axis=1)
        return float(val[0]) if single else val


def poly_product(a: Polynomial, b: Polynomial) -> Polynomial:
    """Product of two polynomials in the same variables."""
    a._check(b)
    out: dict[MultiIndex, float] = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            k = index_add(ka, kb)
            out[k] = out.get(k, 0.0) + ca * cb
    return Polynomial(_prune(out), a.dim)


def expectation(poly: Polynomial, table) -> float:
    """E[poly(xi)] as the coefficient-weighted sum of raw moments from ``table``."""
    if poly.dim != table.dimension:
        raise ValueError(f"polynomial has dimension {poly.dim}, table {table.dimension}")
    if poly.degree > table.max_order:
        raise MomentOrderError(
            f"moment table too small: polynomial degree {poly.degree} > max_order {table.max_order}"
        )
    return float(sum(c * table[k] for k, c in poly.items()))


def substitute_affine(poly: Polynomial, offset: Sequence[float], matrix) -> Polynomial:
    """Compose ``poly`` with ``x = offset + matrix @ y``; the result is a polynomial in y."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    offset = np.asarray(offset, dtype=float)
    n, d = matrix.shape
    if poly.dim != n or offset.shape != (n,):
        raise ValueError(f"affine map is {n}->{d} with offset {offset.shape}, polynomial dim {poly.dim}")
    linear = []
    for l in range(n):
        terms = {(0,) * d: offset[l]}
        for m in range(d):
            if matrix[l, m] != 0.0:
                terms[unit_index(d, m)] = matrix[l, m]
        linear.append(Polynomial(terms, d))
    powers: dict[tuple[int, int], Polynomial] = {}

    def power(l, k):
        if (l, k) not in powers:
            powers[(l, k)] = linear[l] ** k
        return powers[(l, k)]

    acc: dict[MultiIndex, float] = {}
    for idx, c in poly.items():
        term = Polynomial.constant(c, d)
        for l, k in enumerate(idx):
            if k:
                term = term * power(l, k)
        for kk, cc in term.items():
            acc[kk] = acc.get(kk, 0.0) + cc
    return Polynomial(_prune(acc), d)


def shift_tables(indices: Sequence[MultiIndex]) -> np.ndarray:
    """``out[m, i]`` is the position of ``indices[i] + e_m`` in ``indices`` or -1."""
    pos = {tuple(k): i for i, k in enumerate(indices)}
    n = len(indices[0])
    out = np.full((n, len(indices)), -1, dtype=np.int64)
    for i, k in enumerate(indices):
        for m in range(n):
            out[m, i] = pos.get(k[:m] + (k[m] + 1,) + k[m + 1:], -1)
    return out


def affine_transform_matrix(
    indices_in: Sequence[MultiIndex],
    offset: Sequence[float],
    matrix,
    indices_out: Sequence[MultiIndex] | None = None,
) -> tuple[np.ndarray, list[MultiIndex]]:
    """Rewrite monomials under ``x = offset + matrix @ y``.

    Row ``a`` of the returned array holds the coefficients of
    ``prod_l (offset_l + (matrix @ y)_l) ** a_l`` over the y-monomials in
    ``indices_out`` (default: all y-monomials up to the largest input degree).
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    offset = np.asarray(offset, dtype=float)
    n, d = matrix.shape
    p = max(total_degree(k) for k in indices_in)
    if indices_out is None:
        indices_out = enumerate_basis_indices(d, p)
    indices_out = [tuple(k) for k in indices_out]
    shifts = shift_tables(indices_out)
    pos_out = {k: i for i, k in enumerate(indices_out)}
    zero = (0,) * n
    rows: dict[MultiIndex, np.ndarray] = {}
    base = np.zeros(len(indices_out))
    base[pos_out[(0,) * d]] = 1.0
    rows[zero] = base

    def row(a: MultiIndex) -> np.ndarray:
        if a in rows:
            return rows[a]
        i = next(l for l in range(n) if a[l] > 0)
        prev = row(a[:i] + (a[i] - 1,) + a[i + 1:])
        res = offset[i] * prev
        nz = np.flatnonzero(prev)
        for m in range(d):
            if matrix[i, m] == 0.0:
                continue
            tgt = shifts[m, nz]
            if np.any(tgt < 0):
                raise MomentOrderError("output index set is not closed under the required degree")
            res[tgt] += matrix[i, m] * prev[nz]
        rows[a] = res
        return res

    out = np.vstack([row(tuple(k)) for k in indices_in])
    return out, indices_out
