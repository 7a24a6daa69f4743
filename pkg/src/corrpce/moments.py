"""Raw-moment tables for the random inputs.

Every :class:`MomentTable` carries two views of the same measure:

* ``values`` - raw moments ``E[prod xi_l**r_l]``, the public contract;
* ``frame_values`` - moments of the whitened variable ``w`` defined by
  ``xi = frame_loc + frame_matrix @ w``.

Downstream linear algebra (Gram-Schmidt, Galerkin tensors, Sobol' sums) runs
on the whitened view because raw-monomial Gram matrices lose most of their
digits once the inputs are correlated or far from the origin.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .errors import MomentOrderError, NotPSDError, SingularCovarianceError
from .polyalg import MultiIndex, affine_transform_matrix, enumerate_basis_indices, total_degree

#: Hard cap on the order of any moment table.
MAX_MOMENT_ORDER = 40
#: Above this magnitude a table is flagged as ill-conditioned.
MAGNITUDE_WARNING = 1e12
#: Relative eigenvalue threshold for rank decisions on covariance matrices.
RANK_RTOL = 1e-12
#: Default Monte Carlo sample count for moment tables.
DEFAULT_MC_SAMPLES = 1_000_000


class MomentMagnitudeWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# distribution specs


def _as_vector(x, name):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    return v


def _as_square(x, n, name):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {a.shape}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean, "mean")
        cov = _as_square(self.covariance, mean.size, "covariance")
        lam = np.linalg.eigvalsh(cov)
        if lam.min() < -RANK_RTOL * max(lam.max(), 0.0) - 1e-300:
            raise ValueError("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dimension(self) -> int:
        return self.mean.size

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        factor = psd_factor(self.covariance)
        return self.mean + rng.standard_normal((m, factor.shape[1])) @ factor.T


def _check_correlation(c: np.ndarray):
    if not np.allclose(np.diag(c), 1.0, rtol=0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    if np.abs(c).max() > 1.0 + 1e-12:
        raise ValueError("correlation entries must lie in [-1, 1]")


@dataclass(frozen=True, eq=False)
class CorrelatedUniform:
    """Uniform marginals with given mean/std, coupled through a Gaussian copula."""

    mean: np.ndarray
    std: np.ndarray
    correlation: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean, "mean")
        std = _as_vector(self.std, "std")
        if std.shape != mean.shape:
            raise ValueError("mean and std differ in length")
        if np.any(std <= 0):
            raise ValueError("std entries must be positive")
        corr = _as_square(self.correlation, mean.size, "correlation")
        _check_correlation(corr)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "correlation", corr)

    @property
    def dimension(self) -> int:
        return self.mean.size

    @property
    def lower(self) -> np.ndarray:
        return self.mean - math.sqrt(3.0) * self.std

    @property
    def upper(self) -> np.ndarray:
        return self.mean + math.sqrt(3.0) * self.std


@dataclass(frozen=True, eq=False)
class SampleSet:
    draws: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2 or d.shape[0] == 0:
            raise ValueError("sample set must be a non-empty (m, n) matrix")
        object.__setattr__(self, "draws", d)

    @property
    def dimension(self) -> int:
        return self.draws.shape[1]


@dataclass(frozen=True, eq=False)
class AffineReparam:
    """``xi = offset + matrix @ eta`` with ``eta`` distributed as ``reduced_spec``."""

    offset: np.ndarray
    matrix: np.ndarray
    reduced_spec: object

    def __post_init__(self):
        object.__setattr__(self, "offset", _as_vector(self.offset, "offset"))
        object.__setattr__(self, "matrix", np.atleast_2d(np.asarray(self.matrix, dtype=float)))
        if self.matrix.shape[0] != self.offset.size:
            raise ValueError("offset and matrix disagree on the full dimension")

    @property
    def full_dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def reduced_dimension(self) -> int:
        return self.matrix.shape[1]

    def apply(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return self.offset + eta @ self.matrix.T


# ---------------------------------------------------------------------------
# moment table


def _check_order(max_order: int):
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if max_order > MAX_MOMENT_ORDER:
        raise MomentOrderError(
            f"max_order {max_order} exceeds the double-precision cap of {MAX_MOMENT_ORDER}"
        )


@dataclass(frozen=True, eq=False)
class MomentTable:
    dimension: int
    max_order: int
    indices: tuple
    values: np.ndarray
    provenance: dict
    frame_loc: np.ndarray
    frame_matrix: np.ndarray
    frame_values: np.ndarray
    _standardized: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        idx = tuple(tuple(int(e) for e in k) for k in self.indices)
        object.__setattr__(self, "indices", idx)
        for name in ("values", "frame_values", "frame_loc", "frame_matrix"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        K = len(idx)
        if self.values.shape != (K,) or self.frame_values.shape != (K,):
            raise ValueError("value arrays do not match the index set")
        if idx[0] != (0,) * self.dimension or self.values[0] != 1.0 or self.frame_values[0] != 1.0:
            raise ValueError("moment of the zero index must be exactly 1")
        for a in (self.values, self.frame_values):
            a.setflags(write=False)

    # -- lookup ---------------------------------------------------------
    @cached_property
    def _base(self) -> int:
        return self.max_order + 1

    @cached_property
    def _pos(self) -> dict:
        return {k: i for i, k in enumerate(self.indices)}

    @cached_property
    def _dense_pos(self) -> np.ndarray:
        B = self._base
        dense = np.full(B ** self.dimension, -1, dtype=np.int64)
        dense[self.keys(np.asarray(self.indices))] = np.arange(len(self.indices))
        return dense

    def keys(self, exps) -> np.ndarray:
        """Integer key of each exponent row; additive under index addition."""
        exps = np.asarray(exps, dtype=np.int64)
        weights = self._base ** np.arange(self.dimension, dtype=np.int64)
        return exps @ weights

    def positions(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        if keys.size and (keys.min() < 0 or keys.max() >= self._dense_pos.size):
            raise MomentOrderError("moment table too small for the requested index sums")
        pos = self._dense_pos[keys]
        if np.any(pos < 0):
            raise MomentOrderError(
                f"moment table too small: some requested moments exceed order {self.max_order}"
            )
        return pos

    def __getitem__(self, index: Sequence[int]) -> float:
        key = tuple(int(e) for e in index)
        if len(key) != self.dimension:
            raise ValueError(f"index {key} has wrong dimension (table is {self.dimension}-D)")
        if total_degree(key) > self.max_order:
            raise MomentOrderError(
                f"moment table too small: order {total_degree(key)} requested, max_order {self.max_order}"
            )
        return float(self.values[self._pos[key]])

    def frame_moment(self, index: Sequence[int]) -> float:
        return float(self.frame_values[self._pos[tuple(index)]])

    def covers(self, order: int) -> bool:
        return order <= self.max_order

    def require(self, order: int, what: str = "computation"):
        if order > self.max_order:
            raise MomentOrderError(
                f"{what} needs moments up to order {order}, table has max_order {self.max_order}"
            )

    @property
    def frame_scale(self) -> np.ndarray:
        """Marginal standard deviation implied by the frame."""
        s = np.sqrt(np.sum(self.frame_matrix ** 2, axis=1))
        return np.where(s > 0, s, 1.0)

    def same_frame(self, loc, matrix) -> bool:
        return np.array_equal(self.frame_loc, loc) and np.array_equal(self.frame_matrix, matrix)

    # -- derived moment sets ---------------------------------------------
    def moments_under(self, offset, matrix, order: int) -> tuple[list[MultiIndex], np.ndarray]:
        """Moments of ``y = offset + matrix @ w`` up to ``order`` (w is the frame variable)."""
        self.require(order, "moment transform")
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        d = matrix.shape[0]
        out_idx = enumerate_basis_indices(d, order)
        w_idx = enumerate_basis_indices(self.dimension, order)
        T, _ = affine_transform_matrix(out_idx, offset, matrix, w_idx)
        wv = self.frame_values[self.positions(self.keys(w_idx))]
        vals = T @ wv
        vals[0] = 1.0
        return out_idx, vals

    def standardized(self, order: int) -> tuple[list[MultiIndex], np.ndarray]:
        """Moments of ``z = (xi - frame_loc) / frame_scale`` up to ``order``."""
        if order not in self._standardized:
            S = self.frame_matrix / self.frame_scale[:, None]
            self._standardized[order] = self.moments_under(np.zeros(self.dimension), S, order)
        return self._standardized[order]

    # -- identity / serialization ------------------------------------------
    @cached_property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.dimension}:{self.max_order}".encode())
        h.update(np.asarray(self.indices, dtype=np.int64).tobytes())
        for a in (self.values, self.frame_loc, self.frame_matrix, self.frame_values):
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "max_order": self.max_order,
            "provenance": self.provenance,
            "entries": [
                {"index": list(k), "value": float(v)} for k, v in zip(self.indices, self.values)
            ],
            "frame": {
                "loc": self.frame_loc.tolist(),
                "matrix": self.frame_matrix.tolist(),
                "values": self.frame_values.tolist(),
            },
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, doc: dict) -> "MomentTable":
        n = int(doc["dimension"])
        M = int(doc["max_order"])
        entries = {tuple(e["index"]): float(e["value"]) for e in doc["entries"]}
        indices = enumerate_basis_indices(n, M)
        missing = [k for k in indices if k not in entries]
        if missing:
            raise MomentOrderError(f"table document lacks {len(missing)} entries, e.g. {missing[0]}")
        values = np.array([entries[k] for k in indices])
        frame = doc.get("frame")
        if frame is None:
            loc, mat, fv = np.zeros(n), np.eye(n), values
        else:
            loc = np.asarray(frame["loc"], dtype=float)
            mat = np.asarray(frame["matrix"], dtype=float).reshape(n, n)
            fv = np.asarray(frame["values"], dtype=float)
        return cls(n, M, tuple(indices), values, dict(doc.get("provenance", {})), loc, mat, fv)

    @classmethod
    def from_json(cls, text_or_path: str) -> "MomentTable":
        text = text_or_path
        if not text_or_path.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _guard_magnitude(values: np.ndarray, max_order: int):
    big = np.abs(values).max()
    if big > MAGNITUDE_WARNING:
        warnings.warn(
            f"raw moments reach {big:.3g} at order <= {max_order}; expect loss of precision",
            MomentMagnitudeWarning,
            stacklevel=3,
        )


def _table_from_frame(indices, frame_loc, frame_matrix, frame_values, provenance, raw=None):
    n = len(frame_loc)
    M = max(total_degree(k) for k in indices)
    frame_values = np.asarray(frame_values, dtype=float).copy()
    frame_values[0] = 1.0
    proto = MomentTable(n, M, tuple(indices), frame_values, provenance, frame_loc, frame_matrix, frame_values)
    if raw is None:
        _, raw = proto.moments_under(frame_loc, frame_matrix, M)
    raw = np.asarray(raw, dtype=float).copy()
    raw[0] = 1.0
    _guard_magnitude(raw, M)
    return MomentTable(n, M, tuple(indices), raw, provenance, frame_loc, frame_matrix, frame_values)


# ---------------------------------------------------------------------------
# Gaussian


def _double_factorial_moment(k: int) -> float:
    # E[w**k] for w ~ N(0, 1)
    if k % 2:
        return 0.0
    return float(math.prod(range(k - 1, 0, -2))) if k else 1.0


def gaussian_moment_table(mean, covariance, max_order: int) -> MomentTable:
    """Exact raw moments of N(mean, covariance) up to ``max_order``.

    Uses ``mu[r + e_i] = mean_i mu[r] + sum_j cov_ij r_j mu[r - e_j]``.
    """
    _check_order(max_order)
    spec = Gaussian(mean, covariance)
    n = spec.dimension
    cov = spec.covariance
    lam = np.linalg.eigvalsh(cov)
    if lam.min() <= RANK_RTOL * lam.max():
        raise SingularCovarianceError(
            "covariance is singular (rank-deficient); reduce it first with reduce_singular_gaussian"
        )
    mu = spec.mean
    indices = enumerate_basis_indices(n, max_order)
    raw: dict[MultiIndex, float] = {(0,) * n: 1.0}
    for t in indices[1:]:
        i = next(l for l in range(n) if t[l] > 0)
        r = t[:i] + (t[i] - 1,) + t[i + 1:]
        v = mu[i] * raw[r]
        for j in range(n):
            if r[j] and cov[i, j] != 0.0:
                v += cov[i, j] * r[j] * raw[r[:j] + (r[j] - 1,) + r[j + 1:]]
        raw[t] = v
    L = np.linalg.cholesky(cov)
    frame_values = [math.prod(_double_factorial_moment(k) for k in t) for t in indices]
    provenance = {"kind": "analytic", "distribution": "gaussian"}
    return _table_from_frame(indices, mu, L, frame_values, provenance, raw=[raw[t] for t in indices])


def uniform_moment_table(lower, upper, max_order: int) -> MomentTable:
    """Exact raw moments of independent uniforms on ``[lower_l, upper_l]``."""
    _check_order(max_order)
    a = _as_vector(lower, "lower")
    b = _as_vector(upper, "upper")
    if a.shape != b.shape or np.any(b <= a):
        raise ValueError("need lower < upper componentwise")
    n = a.size
    ks = np.arange(max_order + 1)
    raw1 = np.array([[(bb ** (k + 1) - aa ** (k + 1)) / ((k + 1) * (bb - aa)) for k in ks] for aa, bb in zip(a, b)])
    # standardized uniform lives on [-sqrt3, sqrt3]
    w1 = np.array([3.0 ** (k / 2) / (k + 1) if k % 2 == 0 else 0.0 for k in ks])
    indices = enumerate_basis_indices(n, max_order)
    raw = [math.prod(raw1[l, k] for l, k in enumerate(t)) for t in indices]
    frame_values = [math.prod(w1[k] for k in t) for t in indices]
    loc = 0.5 * (a + b)
    scale = (b - a) / math.sqrt(12.0)
    provenance = {"kind": "analytic", "distribution": "uniform"}
    return _table_from_frame(indices, loc, np.diag(scale), frame_values, provenance, raw=raw)


# ---------------------------------------------------------------------------
# copula sampling


def psd_factor(matrix, rtol: float = RANK_RTOL) -> np.ndarray:
    """Return ``F`` (n x rank) with ``F @ F.T == matrix`` via pivoted Cholesky."""
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    scale = max(np.abs(np.diag(a)).max(), 1e-300)
    c, piv, rank, info = linalg.lapack.dpstrf(a, tol=rtol * scale, lower=1)
    if info < 0:
        raise ValueError(f"dpstrf failed with info={info}")
    Lp = np.tril(c)[:, :rank]
    F = np.zeros((n, rank))
    F[piv - 1, :] = Lp
    if not np.allclose(F @ F.T, a, rtol=0, atol=1e-10 * scale):
        raise NotPSDError("matrix is not positive semi-definite")
    return F


def nataf_adjust(correlation) -> np.ndarray:
    """Latent Gaussian correlation giving uniform marginals the target linear correlation."""
    c = np.asarray(correlation, dtype=float)
    r = 2.0 * np.sin(np.pi * c / 6.0)
    exact = np.abs(c) == 1.0
    r[exact] = c[exact]
    return r


def _offending_pair(r: np.ndarray) -> tuple[int, int]:
    lam, vec = np.linalg.eigh(r)
    v = vec[:, 0]
    n = r.shape[0]
    pairs = [(abs(v[i] * v[j] * r[i, j]), i, j) for i in range(n) for j in range(i + 1, n)]
    _, i, j = max(pairs)
    return i, j


class CopulaUniformSampler:
    """Correlated uniforms through a Gaussian copula.

    Marginal ``l`` is uniform on ``mean_l +- sqrt(3) std_l``.  The latent
    Gaussian correlation is ``2 sin(pi C / 6)``, which makes the linear
    correlation of the uniforms equal ``C``.
    """

    def __init__(self, mean, std, correlation, seed=None):
        self.spec = CorrelatedUniform(mean, std, correlation)
        self.latent_correlation = nataf_adjust(self.spec.correlation)
        lam = np.linalg.eigvalsh(self.latent_correlation)
        if lam[0] < -1e-10 * lam[-1]:
            i, j = _offending_pair(self.latent_correlation)
            raise NotPSDError(
                f"adjusted copula correlation is not PSD (min eigenvalue {lam[0]:.3g}); "
                f"check the pair ({i + 1}, {j + 1}) with target {self.spec.correlation[i, j]:g}"
            )
        self.factor = psd_factor(self.latent_correlation)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.loc = self.spec.mean
        cov = self.spec.correlation * np.outer(self.spec.std, self.spec.std)
        try:
            self.frame_matrix = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            self.frame_matrix = np.diag(self.spec.std)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def __call__(self, m: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = self._rng if rng is None else rng
        g = rng.standard_normal((m, self.factor.shape[1]))
        u = ndtr(g @ self.factor.T)
        lo, hi = self.spec.lower, self.spec.upper
        return lo + (hi - lo) * u


def copula_uniform_sampler(mean, std, correlation, seed=None) -> CopulaUniformSampler:
    return CopulaUniformSampler(mean, std, correlation, seed)


# ---------------------------------------------------------------------------
# sample moments


def _sample_power_sums(w: np.ndarray, max_order: int) -> tuple[list[MultiIndex], np.ndarray]:
    m, n = w.shape
    indices = enumerate_basis_indices(n, max_order)
    prefix = enumerate_basis_indices(n - 1, max_order) if n > 1 else [()]
    ppos = {k: i for i, k in enumerate(prefix)}
    chunk = max(4096, (1 << 23) // max(len(prefix), max_order + 1))
    sums = np.zeros((len(prefix), max_order + 1))
    for start in range(0, m, chunk):
        blk = w[start:start + chunk]
        c = blk.shape[0]
        pw = np.empty((n, c, max_order + 1))
        pw[:, :, 0] = 1.0
        for k in range(1, max_order + 1):
            pw[:, :, k] = pw[:, :, k - 1] * blk.T
        pre = np.empty((c, len(prefix)))
        for i, k in enumerate(prefix):
            col = np.ones(c)
            for l, e in enumerate(k):
                if e:
                    col = col * pw[l, :, e]
            pre[:, i] = col
        sums += pre.T @ pw[n - 1]
    vals = np.array([sums[ppos[k[:-1]], k[-1]] for k in indices]) / m
    return indices, vals


def _empirical_frame(x: np.ndarray):
    loc = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, bias=True)) if x.shape[0] > 1 else np.zeros((x.shape[1],) * 2)
    lam = np.linalg.eigvalsh(cov) if cov.size else np.zeros(1)
    if lam.max() > 0 and lam.min() > RANK_RTOL * lam.max():
        return loc, np.linalg.cholesky(cov)
    s = np.sqrt(np.diag(cov))
    return loc, np.diag(np.where(s > 0, s, 1.0))


def _moments_from_samples(x, max_order, loc, frame_matrix, provenance):
    _check_order(max_order)
    w = linalg.solve_triangular(frame_matrix, (x - loc).T, lower=True).T
    indices, fv = _sample_power_sums(w, max_order)
    return _table_from_frame(indices, np.asarray(loc, float), np.asarray(frame_matrix, float), fv, provenance)


def monte_carlo_moment_table(
    sampler: Callable[[int, np.random.Generator], np.ndarray],
    n_samples: int = DEFAULT_MC_SAMPLES,
    max_order: int = 4,
    seed: int | None = 0,
) -> MomentTable:
    """Sample moments of ``n_samples`` draws from ``sampler(m, rng)``.

    The sampler may expose ``loc`` and ``frame_matrix`` to fix the
    whitening frame; otherwise the sample mean/covariance are used.
    """
    if n_samples < 1000:
        raise ValueError("Monte Carlo moment tables need at least 1000 samples")
    rng = np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(sampler(n_samples, rng), dtype=float))
    if x.shape[0] != n_samples:
        x = x.reshape(n_samples, -1)
    if hasattr(sampler, "loc") and hasattr(sampler, "frame_matrix"):
        loc, fm = np.asarray(sampler.loc, float), np.asarray(sampler.frame_matrix, float)
    else:
        loc, fm = _empirical_frame(x)
    prov = {"kind": "monte_carlo", "samples": int(n_samples), "seed": seed}
    return _moments_from_samples(x, max_order, loc, fm, prov)


def empirical_moments(samples, max_order: int) -> MomentTable:
    """Raw moments of an observed sample matrix (m draws x n variables)."""
    if not isinstance(samples, SampleSet):
        samples = SampleSet(samples)
    x = samples.draws
    loc, fm = _empirical_frame(x)
    prov = {"kind": "empirical", "samples": int(x.shape[0])}
    return _moments_from_samples(x, max_order, loc, fm, prov)


# ---------------------------------------------------------------------------
# degenerate inputs


def reduce_singular_gaussian(mean, covariance) -> AffineReparam:
    """Express a rank-deficient Gaussian through a subset of its own coordinates.

    Returns ``xi = offset + matrix @ xi_P`` where ``xi_P`` are ``d = rank``
    pivot coordinates, distributed as ``N(mean_P, cov_PP)``.
    """
    spec = Gaussian(mean, covariance)
    cov = spec.covariance
    lam, vec = np.linalg.eigh(cov)
    keep = lam > RANK_RTOL * lam.max()
    d = int(keep.sum())
    if d == spec.dimension:
        raise ValueError("no reduction needed: covariance has full rank")
    if d == 0:
        raise ValueError("covariance is zero; the input is deterministic")
    factor = vec[:, keep] * np.sqrt(lam[keep])
    _, _, piv = linalg.qr(factor.T, pivoting=True)
    P = np.sort(piv[:d])
    matrix = cov[:, P] @ np.linalg.inv(cov[np.ix_(P, P)])
    matrix[P, :] = np.eye(d)
    offset = spec.mean - matrix @ spec.mean[P]
    offset[P] = 0.0
    reduced = Gaussian(spec.mean[P], cov[np.ix_(P, P)])
    rebuilt = matrix @ reduced.covariance @ matrix.T
    if not np.allclose(rebuilt, cov, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ArithmeticError("affine reduction does not reproduce the covariance")
    return AffineReparam(offset, matrix, reduced)


def reduce_comonotone_uniform(mean, std, correlation) -> AffineReparam:
    """Collapse fully (+-1) correlated uniforms onto one standard uniform ``u``.

    ``xi_l = mean_l + s_l sqrt(3) std_l (2u - 1)`` with ``s_l`` the sign pattern
    of the first row of the correlation matrix.
    """
    spec = CorrelatedUniform(mean, std, correlation)
    signs = np.sign(spec.correlation[0])
    if np.any(signs == 0) or not np.array_equal(spec.correlation, np.outer(signs, signs)):
        raise ValueError("correlation matrix is not a rank-one +-1 pattern")
    half = math.sqrt(3.0) * spec.std * signs
    return AffineReparam(
        spec.mean - half,
        (2.0 * half)[:, None],
        CorrelatedUniform([0.5], [1.0 / math.sqrt(12.0)], [[1.0]]),
    )


def moment_table(spec, max_order: int, *, samples: int = DEFAULT_MC_SAMPLES, seed: int | None = 0) -> MomentTable:
    """Default moment source for a distribution spec.

    Gaussians and independent (or one-dimensional) uniforms are exact; any
    other copula-coupled uniform is integrated by Monte Carlo.
    """
    if isinstance(spec, Gaussian):
        return gaussian_moment_table(spec.mean, spec.covariance, max_order)
    if isinstance(spec, CorrelatedUniform):
        if np.array_equal(spec.correlation, np.eye(spec.dimension)):
            return uniform_moment_table(spec.lower, spec.upper, max_order)
        sampler = copula_uniform_sampler(spec.mean, spec.std, spec.correlation)
        return monte_carlo_moment_table(sampler, samples, max_order, seed)
    if isinstance(spec, SampleSet):
        return empirical_moments(spec, max_order)
    raise TypeError(f"unsupported distribution spec {type(spec).__name__}")
