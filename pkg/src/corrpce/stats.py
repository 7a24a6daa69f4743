"""Mean, standard deviation and correlated Sobol' indices of an expansion."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .basis import OrthoBasis
from .galerkin import ExpandedSolution
from .moments import MomentTable
from .polyalg import MultiIndex, Polynomial, affine_transform_matrix, enumerate_basis_indices

MAX_SOBOL_DIM = 6
#: Output variance below which Sobol' indices are reported as undefined.
VARIANCE_FLOOR = 1e-14


def mean_series(solution: ExpandedSolution) -> np.ndarray:
    """(n_states, n_times) mean: the Phi_0 coefficient."""
    return solution.coefficients[:, :, 0].copy()


def variance_series(solution: ExpandedSolution, basis: OrthoBasis | None = None) -> np.ndarray:
    basis = basis or solution.basis
    u = solution.coefficients[:, :, 1:]
    return np.einsum("stj,j->st", u * u, basis.sq_norms[1:])


def std_series(solution: ExpandedSolution, basis: OrthoBasis | None = None) -> np.ndarray:
    return np.sqrt(np.maximum(variance_series(solution, basis), 0.0))


def subsets(n: int) -> list[tuple[int, ...]]:
    """Non-empty subsets of range(n), by size then lexicographically."""
    return [c for k in range(1, n + 1) for c in combinations(range(n), k)]


def subset_label(subset: Sequence[int]) -> str:
    return "".join(str(l + 1) for l in subset) if len(subset) < 10 else "-".join(str(l + 1) for l in subset)


def marginal_expectation_monic(index: MultiIndex, subset: Sequence[int], table: MomentTable) -> Polynomial:
    """Marginal expectation of the monomial ``xi**index`` keeping ``subset`` free.

    Variables outside ``subset`` are integrated against their joint marginal:
    the result is ``mu^{index restricted to the complement}`` times the kept
    monomial.  Subset positions are 0-based.
    """
    n = table.dimension
    keep = set(subset)
    rest = tuple(0 if l in keep else e for l, e in enumerate(index))
    free = tuple(e if l in keep else 0 for l, e in enumerate(index))
    return Polynomial({free: table[rest]}, n)


def _projection_matrix(idx: list[MultiIndex], mom: dict, keep: set) -> np.ndarray:
    """Matrix form of the marginal expectation on coefficient vectors over ``idx``."""
    pos = {k: i for i, k in enumerate(idx)}
    P = np.zeros((len(idx), len(idx)))
    for j, k in enumerate(idx):
        rest = tuple(0 if l in keep else e for l, e in enumerate(k))
        free = tuple(e if l in keep else 0 for l, e in enumerate(k))
        P[pos[free], j] = mom[rest]
    return P


@dataclass
class SobolReport:
    times: np.ndarray
    state_names: tuple
    subsets: list
    S: np.ndarray  # (n_states, n_times, n_subsets)
    S_u: np.ndarray
    S_c: np.ndarray
    total: np.ndarray  # (n_states, n_times, n)
    total_u: np.ndarray
    total_c: np.ndarray
    variance: np.ndarray  # (n_states, n_times)
    defined: np.ndarray  # bool (n_states, n_times)

    def subset_position(self, subset) -> int:
        return self.subsets.index(tuple(subset))

    def at(self, state, t: float, subset) -> tuple[float, float, float]:
        s = self.state_names.index(state) if isinstance(state, str) else int(state)
        it = int(np.argmin(np.abs(self.times - t)))
        k = self.subset_position(subset)
        return float(self.S[s, it, k]), float(self.S_u[s, it, k]), float(self.S_c[s, it, k])


class _SobolOperator:
    """Precomputed per-basis machinery in the standardized coordinates."""

    def __init__(self, basis: OrthoBasis, table: MomentTable):
        n, p = basis.dimension, basis.order
        if n > MAX_SOBOL_DIM:
            raise ValueError(f"Sobol' analysis supports at most {MAX_SOBOL_DIM} inputs")
        table.require(2 * p, "Sobol' analysis")
        # w = L^{-1} D z with xi = loc + L w = loc + D z
        D = np.diag(table.frame_scale)
        F = basis.coefficients_in(table)
        self.z_idx = enumerate_basis_indices(n, p)
        Wz = np.linalg.solve(table.frame_matrix, D)
        Ez, _ = affine_transform_matrix(list(basis.frame_indices), np.zeros(n), Wz, self.z_idx)
        self.Fz = F @ Ez  # basis in z monomials
        m_idx, m_val = table.standardized(2 * p)
        mom = dict(zip(m_idx, m_val))
        Kz = len(self.z_idx)
        self.G = np.array([[mom[tuple(a + b for a, b in zip(x, y))] for y in self.z_idx] for x in self.z_idx])
        self.g = self.G[0].copy()
        self.subsets = subsets(n)
        self.P = {(): np.outer(np.eye(Kz)[0], self.g)}
        for sub in self.subsets:
            self.P[sub] = _projection_matrix(self.z_idx, mom, set(sub))
        self.n = n

    def indices(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        """Unnormalized Var[M_l], Cov[M_l, u] per subset and Var[u]."""
        G, g = self.G, self.g
        M = {(): self.P[()] @ c}
        var_m, cov_mu = [], []
        Gc = G @ c
        gc = g @ c
        for sub in self.subsets:
            m = self.P[sub] @ c
            for k in range(len(sub)):
                for low in combinations(sub, k):
                    m = m - M[low]
            M[sub] = m
            gm = g @ m
            var_m.append(m @ G @ m - gm * gm)
            cov_mu.append(m @ Gc - gm * gc)
        return np.array(var_m), np.array(cov_mu), float(c @ Gc - gc * gc)


def sobol_report(
    solution: ExpandedSolution,
    basis: OrthoBasis | None = None,
    table: MomentTable | None = None,
    times: Sequence[float] | None = None,
) -> SobolReport:
    """Correlated Sobol' indices with their uncorrelated and correlated shares.

    ``S_u`` is the variance of the subset's Sobol' term, ``S_c`` its
    covariance with the rest of the output, and ``S = S_u + S_c``.  At times
    where the output variance is below ``VARIANCE_FLOOR`` the indices are
    zero-filled and ``defined`` is False.
    """
    basis = basis or solution.basis
    if table is None:
        raise ValueError("a moment table is required")
    if basis.table_hash != table.content_hash:
        raise ValueError("basis was not built from this moment table")
    op = _SobolOperator(basis, table)
    if times is None:
        tt = solution.times
        U = solution.coefficients
    else:
        tt = np.asarray(times, dtype=float)
        U = np.stack([solution.coefficients_at(t) for t in tt], axis=1)
    S_n, T_n = U.shape[0], len(tt)
    nsub = len(op.subsets)
    out = {k: np.zeros((S_n, T_n, nsub)) for k in ("S", "S_u", "S_c")}
    variance = np.einsum("stj,j->st", U[:, :, 1:] ** 2, basis.sq_norms[1:])
    defined = variance >= VARIANCE_FLOOR
    for s in range(S_n):
        for it in range(T_n):
            if not defined[s, it]:
                continue
            c = U[s, it] @ op.Fz
            var_m, cov_mu, _ = op.indices(c)
            V = variance[s, it]
            out["S_u"][s, it] = var_m / V
            out["S_c"][s, it] = (cov_mu - var_m) / V
            out["S"][s, it] = out["S_u"][s, it] + out["S_c"][s, it]
    n = basis.dimension
    member = np.array([[l in sub for sub in op.subsets] for l in range(n)], dtype=float)
    return SobolReport(
        tt, solution.state_names, op.subsets, out["S"], out["S_u"], out["S_c"],
        out["S"] @ member.T, out["S_u"] @ member.T, out["S_c"] @ member.T, variance, defined,
    )


def sobol_independent(solution: ExpandedSolution, basis: OrthoBasis | None = None) -> np.ndarray:
    """Sobol' indices for independent inputs straight from the coefficients.

    Each basis term contributes ``u_j^2 ||Phi_j||^2`` to the subset of
    variables it depends on.  Returns (n_states, n_times, n_subsets).
    """
    basis = basis or solution.basis
    subs = subsets(basis.dimension)
    which = {sub: i for i, sub in enumerate(subs)}
    contrib = solution.coefficients ** 2 * basis.sq_norms
    out = np.zeros(contrib.shape[:2] + (len(subs),))
    for j, k in enumerate(basis.indices):
        sub = tuple(l for l, e in enumerate(k) if e)
        if sub:
            out[:, :, which[sub]] += contrib[:, :, j]
    var = out.sum(axis=2, keepdims=True)
    return np.divide(out, var, out=np.zeros_like(out), where=var >= VARIANCE_FLOOR)


def _write(rows, columns, path, header):
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _fmt(x: float) -> str:
    return repr(float(x))


def mean_std_to_csv(solution: ExpandedSolution, path=None, header=None) -> str:
    mu, sd = mean_series(solution), std_series(solution)
    rows = [
        [_fmt(t), name, _fmt(mu[s, it]), _fmt(sd[s, it])]
        for it, t in enumerate(solution.times)
        for s, name in enumerate(solution.state_names)
    ]
    return _write(rows, ["t", "state", "mean", "std"], path, header)


def sobol_to_csv(report: SobolReport, path=None, header=None) -> str:
    rows = []
    for it, t in enumerate(report.times):
        for s, name in enumerate(report.state_names):
            for k, sub in enumerate(report.subsets):
                if report.defined[s, it]:
                    vals = [_fmt(report.S[s, it, k]), _fmt(report.S_u[s, it, k]), _fmt(report.S_c[s, it, k])]
                else:
                    vals = ["undefined"] * 3
                rows.append([_fmt(t), name, subset_label(sub)] + vals)
    return _write(rows, ["t", "state", "subset", "S", "S_u", "S_c"], path, header)


def sobol_total_to_csv(report: SobolReport, path=None, header=None) -> str:
    rows = []
    n = report.total.shape[2]
    for it, t in enumerate(report.times):
        for s, name in enumerate(report.state_names):
            for l in range(n):
                if report.defined[s, it]:
                    vals = [_fmt(report.total[s, it, l]), _fmt(report.total_u[s, it, l]), _fmt(report.total_c[s, it, l])]
                else:
                    vals = ["undefined"] * 3
                rows.append([_fmt(t), name, str(l + 1)] + vals)
    return _write(rows, ["t", "state", "variable", "S_T", "S_T_u", "S_T_c"], path, header)
