"""Reduced-rank vector generalized linear models fitted by singular value thresholding."""
from .errors import DescentError, EmptyExtractionError, InputError, RuleUsageError
from .extraction import (
    CoolingSchedule,
    ExtractionResult,
    ReductionResult,
    extract_type1,
    extract_type2,
    progressive_reduce,
)
from .families import BERNOULLI, GAUSSIAN, DataSet, Family, get_family, neg_log_likelihood
from .linalg import ThinSvd, numerical_rank, ordered_basis, spectral_norm, sym_eig, thin_svd
from .solvers import (
    CoefficientEstimate,
    FitOptions,
    PathEntry,
    RidgeFit,
    SolutionPath,
    constrained_fit,
    fit_path,
    fixed_point_residual,
    objective,
    penalized_fit,
    ridge_glm_fit,
    rrr_closed_form,
)
from .thresholding import (
    ThresholdRule,
    apply_matrix,
    apply_scalar,
    berhu,
    hard,
    hard_ridge,
    parse_rule,
    penalty_matrix,
    penalty_scalar,
    quantile,
    ridge,
    soft,
)
from .tuning import PcvReport, bic_correction, lambda_grid, make_folds, pcv

__version__ = "0.1.0"
