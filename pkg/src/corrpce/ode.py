"""Dormand-Prince 5(4) integrator with PI step-size control and dense output."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StiffnessError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order minus embedded fourth-order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + th) = y + h * K^T (P @ [th, th^2, th^3, th^4])
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
BETA = 0.04
EXPO = 0.2 - 0.75 * BETA
MIN_FACTOR, MAX_FACTOR = 0.2, 10.0


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    n_fev: int = 0
    segments: list = field(default_factory=list, repr=False)

    def sol(self, t: float) -> np.ndarray:
        """Dense-output value at ``t`` (needs ``dense=True`` at solve time)."""
        if not self.segments:
            raise ValueError("dense output was not stored")
        t0 = self.segments[0][0]
        t1 = self.segments[-1][0] + self.segments[-1][1]
        if not (min(t0, t1) <= t <= max(t0, t1)):
            raise ValueError(f"t={t} outside the solved span [{t0}, {t1}]")
        starts = np.array([s[0] for s in self.segments])
        i = int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1))
        ts, h, y0, K = self.segments[i]
        return _interpolate(y0, K, h, (t - ts) / h)


def _interpolate(y0, K, h, theta):
    q = P @ np.array([theta, theta ** 2, theta ** 3, theta ** 4])
    return y0 + h * np.tensordot(q, K, axes=(0, 0))


def _norm(x, kind):
    if kind == "max":
        return float(np.max(np.abs(x))) if x.size else 0.0
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, norm):
    sc = atol + rtol * np.abs(y0)
    d0, d1 = _norm(y0 / sc, norm), _norm(f0 / sc, norm)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = _norm((f1 - f0) / sc, norm) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def dopri5(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t_span: tuple[float, float],
    y0,
    t_eval=None,
    rtol: float = 1e-6,
    atol: float = 1e-6,
    *,
    norm: str = "rms",
    dense: bool = False,
    max_steps: int = 1_000_000,
    first_step: float | None = None,
) -> OdeResult:
    """Integrate ``y' = fun(t, y)`` over ``t_span``.

    Outputs are reported at ``t_eval`` (default: the two span endpoints)
    through the fourth-order continuous extension.  ``norm`` selects the
    error norm: ``"rms"`` or ``"max"`` (useful for batched systems).
    """
    t0, tf = map(float, t_span)
    if tf == t0:
        raise ValueError("degenerate time span")
    direction = 1.0 if tf > t0 else -1.0
    y = np.asarray(y0, dtype=float).copy()
    t_eval = np.array([t0, tf]) if t_eval is None else np.asarray(t_eval, dtype=float)
    if np.any(direction * np.diff(t_eval) < 0):
        raise ValueError("t_eval must be monotone in the integration direction")
    lo, hi = min(t0, tf), max(t0, tf)
    if t_eval.size and (t_eval.min() < lo - 1e-12 * abs(hi) or t_eval.max() > hi + 1e-12 * abs(hi)):
        raise ValueError("t_eval lies outside t_span")

    out = np.empty((t_eval.size, y.size))
    k_out = 0
    while k_out < t_eval.size and t_eval[k_out] == t0:
        out[k_out] = y
        k_out += 1

    f = fun(t0, y)
    nfev = 1
    if first_step is None:
        h = _initial_step(fun, t0, y, f, direction, rtol, atol, norm)
        nfev += 1
    else:
        h = abs(first_step)
    t = t0
    K = np.empty((7, y.size))
    facold = 1e-4
    reject = False
    n_steps = n_rej = 0
    segments = []

    while direction * (tf - t) > 0:
        if n_steps + n_rej >= max_steps:
            raise RuntimeError(f"maximum number of steps ({max_steps}) reached at t={t}")
        min_h = 16 * np.spacing(abs(t)) if t else 1e-300
        if h < min_h:
            raise StiffnessError(t, h)
        last = direction * (t + direction * h - tf) >= 0
        if last:
            h = abs(tf - t)
        hs = direction * h
        K[0] = f
        for s in range(1, 7):
            dy = np.tensordot(A[s], K[:s], axes=(0, 0))
            K[s] = fun(t + C[s] * hs, y + hs * dy)
        nfev += 6
        y_new = y + hs * np.tensordot(B[:6], K[:6], axes=(0, 0))
        err_vec = hs * np.tensordot(E, K, axes=(0, 0))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _norm(err_vec / scale, norm)
        if not np.isfinite(err):
            err = 1e10
        fac11 = err ** EXPO if err > 0 else 0.0

        if err <= 1.0:
            fac = fac11 / facold ** BETA
            fac = max(1 / MAX_FACTOR, min(1 / MIN_FACTOR, fac / SAFETY))
            h_new = h / fac
            if reject:
                h_new = min(h_new, h)
            facold = max(err, 1e-4)
            t_new = tf if last else t + hs
            while k_out < t_eval.size and direction * (t_eval[k_out] - t_new) <= 0:
                theta = (t_eval[k_out] - t) / hs
                out[k_out] = y_new if t_eval[k_out] == t_new else _interpolate(y, K, hs, theta)
                k_out += 1
            if dense:
                segments.append((t, hs, y.copy(), K.copy()))
            t, y, f = t_new, y_new, K[6].copy()
            h = h_new
            reject = False
            n_steps += 1
        else:
            h = h / min(1 / MIN_FACTOR, fac11 / SAFETY)
            reject = True
            n_rej += 1

    while k_out < t_eval.size:
        out[k_out] = y
        k_out += 1
    return OdeResult(t_eval, out, n_steps, n_rej, nfev, segments)
