"""Independent reference computations shared by the tests."""

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

DECAY_SIGMA = 0.25


def decay_cov(rho):
    s = np.array([DECAY_SIGMA, DECAY_SIGMA])
    return np.outer(s, s) * np.array([[1.0, rho], [rho, 1.0]])


def gauss_hermite_2d(mean, cov, n=40):
    """Tensor Gauss-Hermite nodes and weights for a bivariate Gaussian."""
    x, w = hermegauss(n)
    w = w / w.sum()
    X, Y = np.meshgrid(x, x, indexing="ij")
    L = np.linalg.cholesky(cov)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1) @ L.T + np.asarray(mean)
    return pts, np.outer(w, w).ravel()
