"""Sieve NPIV estimation with a data-driven sieve dimension and
multiplier-bootstrap uniform confidence bands."""

__version__ = "0.1.0"

from .basis import (
    BasisSpec,
    InstrumentSpec,
    SupportTransform,
    TRADE_CLAMP,
    apply_transform,
    design_matrix,
    dimension_grid,
    eval_basis,
    eval_basis_deriv,
    instrument_dim,
    make_spec,
)
from .estimator import NpivFit, Sample, VarianceField, evaluate, fit, shat, variance_field
from .bootstrap import (
    BootstrapQuantiles,
    MultiplierPlan,
    draw_multipliers,
    quantile,
    sup_t_contrast,
    sup_t_single,
)
from .adaptive import AdaptiveSelection, j_hat_max_npiv, j_hat_max_regression, select
from .ucb import (
    BandResult,
    band_deriv,
    band_h,
    band_robustness,
    band_undersmoothed,
    excludes_constant,
)
from .extensions import (
    AdditiveSpec,
    FixedEffectsPlan,
    PartiallyLinearSpec,
    fit_additive,
    fit_partially_linear,
    partial_out_fixed_effects,
    select_additive,
    select_partially_linear,
)
from .simgen import Design, McReport, TradeCalibration, a_sweep, generate, get_design, run_mc

__all__ = [
    "AdaptiveSelection",
    "AdditiveSpec",
    "BandResult",
    "BasisSpec",
    "BootstrapQuantiles",
    "Design",
    "FixedEffectsPlan",
    "InstrumentSpec",
    "McReport",
    "MultiplierPlan",
    "NpivFit",
    "PartiallyLinearSpec",
    "Sample",
    "SupportTransform",
    "TRADE_CLAMP",
    "TradeCalibration",
    "VarianceField",
    "a_sweep",
    "apply_transform",
    "band_deriv",
    "band_h",
    "band_robustness",
    "band_undersmoothed",
    "design_matrix",
    "dimension_grid",
    "draw_multipliers",
    "eval_basis",
    "eval_basis_deriv",
    "evaluate",
    "excludes_constant",
    "fit",
    "fit_additive",
    "fit_partially_linear",
    "generate",
    "get_design",
    "instrument_dim",
    "j_hat_max_npiv",
    "j_hat_max_regression",
    "make_spec",
    "partial_out_fixed_effects",
    "quantile",
    "run_mc",
    "select",
    "select_additive",
    "select_partially_linear",
    "shat",
    "sup_t_contrast",
    "sup_t_single",
    "variance_field",
    "__version__",
]
