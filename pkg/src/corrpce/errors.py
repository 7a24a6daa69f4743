"""Exception types shared across the package."""


class BasisSizeError(ValueError):
    """Requested truncation produces an unreasonably large basis."""


class MomentOrderError(ValueError):
    """A moment table does not reach the order a computation needs."""


class SingularCovarianceError(ValueError):
    """Covariance matrix is not strictly positive definite."""


class NotPSDError(ValueError):
    """A correlation matrix (after copula adjustment) is not positive semi-definite."""


class IllConditionedBasisError(ArithmeticError):
    """Gram-Schmidt produced a non-positive squared norm."""


class StiffnessError(RuntimeError):
    """Adaptive step size collapsed below the representable minimum."""

    def __init__(self, t, h):
        super().__init__(f"step size underflow at t={t:.17g} (h={h:.3g}); problem is likely stiff")
        self.t = t
        self.h = h
