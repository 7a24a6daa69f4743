"""Polynomial chaos expansions for ODEs with correlated random parameters."""

from .basis import OrthoBasis, build_basis, gram_schmidt_basis, hermite_basis, input_expansion, orthogonality_residual
from .errors import (
    BasisSizeError,
    IllConditionedBasisError,
    MomentOrderError,
    NotPSDError,
    SingularCovarianceError,
    StiffnessError,
)
from .galerkin import (
    ExpandedSolution,
    GalerkinModel,
    GalerkinTensors,
    Term,
    compile_model,
    evaluate_surrogate,
    integrate,
    solve_galerkin,
    substitute_affine_parameters,
)
from .moments import (
    AffineReparam,
    CorrelatedUniform,
    Gaussian,
    MomentTable,
    SampleSet,
    copula_uniform_sampler,
    empirical_moments,
    gaussian_moment_table,
    moment_table,
    monte_carlo_moment_table,
    reduce_comonotone_uniform,
    reduce_singular_gaussian,
    uniform_moment_table,
)
from .polyalg import Polynomial, basis_size, enumerate_basis_indices
from .stats import SobolReport, marginal_expectation_monic, mean_series, sobol_report, std_series

__version__ = "0.1.0"
