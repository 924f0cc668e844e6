"""Nonparametric learning of radial kernels in operators.

Given sampled pairs ``(u_k, f_k)`` related by an operator that is linear
in an unknown radial kernel, this package estimates the kernel by
regularized least squares.  The distinguishing regularizer is the norm of
a data-adaptive reproducing-kernel space built from the regression data
itself, which confines the estimate to the directions the data actually
identifies; plain coefficient-norm and weighted-L2 penalties are provided
as baselines, all sharing L-curve strength selection.
"""

from .errors import (
    AllZeroSpectrum,
    ConfigError,
    DartrError,
    DegenerateCurve,
    DegenerateFit,
    DegenerateSupport,
    DimensionMismatch,
    DimensionOutOfRange,
    EmptyExploration,
    MissingDerivative,
    NegativeLambda,
    NoCandidates,
    NoConvergence,
    NonCommensurateGrid,
    NotPositiveDefinite,
    NumericalError,
    QuadratureNoConvergence,
    SingularBasis,
)
from .grids import (
    DiscreteMeasure,
    UniformGrid,
    l2rho_error,
    l2rho_inner,
    l2rho_norm,
    make_uniform_grid,
    radius_grid,
)
from .operators import (
    Dataset,
    FunctionDatum,
    KernelSpec,
    OperatorKind,
    eval_g,
    forward_map,
    gaussian_kernel,
    generate_dataset,
    kernel_by_tag,
    load_dataset,
    save_dataset,
    standard_u_set,
    truncated_sine_kernel,
    zero_kernel,
)
from .assembly import (
    HypothesisSpace,
    RegressionData,
    RegressionTriplet,
    assemble_regression_data,
    assemble_triplet,
    build_hypothesis_space,
    estimate_support,
    exploration_measure,
)
from .regsolve import (
    EstimatorResult,
    GenEigDecomposition,
    RegularizerKind,
    gen_eig,
    loss_value,
    rkhs_norm_matrix,
    rkhs_sqrt_factor,
    solve_regularized,
    solve_regularized_minnorm,
)
from .lcurve import LCurve, build_lcurve, curvature_parametric, lambda_range, select_lambda
from .estimator import FitOptions, FitReport, RadialKernelRegressor, fit_dataset
from .harness import (
    CellKey,
    CellResult,
    RateSummary,
    StudyArtifacts,
    StudyConfig,
    emit_report,
    fit_rate,
    run_cell,
    run_study,
    select_dimension,
)

__version__ = "0.1.0"
