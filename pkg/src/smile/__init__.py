"""Structure identification, refitting and simultaneous bands for additive partially linear models."""

__version__ = "0.1.0"

from .basis import BasisBlock, KnotVector, bspline_basis, constant_basis, place_knots, rule_of_thumb_knots
from .data import Dataset, center, load_csv, make_rng, write_csv
from .errors import InputError, NumericalError, SmileError
from .inference import (
    RefitFit,
    SbllCurve,
    coef_covariance,
    oracle_sbll,
    pseudo_responses,
    refit,
    sbll_band,
    sbll_curve,
    scb_multiplier,
    tau_n,
    write_curve_csv,
)
from .kernel import KernelSpec, epanechnikov, kernel_constants, local_linear, rot_bandwidth
from .selection import (
    FittedModel,
    ModelStructure,
    SelectionConfig,
    TuningReport,
    bic,
    classify,
    ebic,
    fit_variant,
    smile_select,
)
from .solver import (
    BACKEND,
    CoefTriple,
    GroupedDesign,
    GroupWeights,
    PenaltySpec,
    adaptive_weights,
    fit_penalized,
    group_soft_threshold,
    kkt_residual,
    lambda_path,
)

__all__ = [
    "__version__",
    "BasisBlock",
    "KnotVector",
    "bspline_basis",
    "constant_basis",
    "place_knots",
    "rule_of_thumb_knots",
    "Dataset",
    "center",
    "load_csv",
    "make_rng",
    "write_csv",
    "InputError",
    "NumericalError",
    "SmileError",
    "RefitFit",
    "SbllCurve",
    "coef_covariance",
    "oracle_sbll",
    "pseudo_responses",
    "refit",
    "sbll_band",
    "sbll_curve",
    "scb_multiplier",
    "tau_n",
    "write_curve_csv",
    "KernelSpec",
    "epanechnikov",
    "kernel_constants",
    "local_linear",
    "rot_bandwidth",
    "FittedModel",
    "ModelStructure",
    "SelectionConfig",
    "TuningReport",
    "bic",
    "classify",
    "ebic",
    "fit_variant",
    "smile_select",
    "BACKEND",
    "CoefTriple",
    "GroupedDesign",
    "GroupWeights",
    "PenaltySpec",
    "adaptive_weights",
    "fit_penalized",
    "group_soft_threshold",
    "kkt_residual",
    "lambda_path",
]
