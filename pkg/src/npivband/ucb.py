"""Uniform confidence bands for the structural function and its derivatives.

Data-driven bands center at the adaptively selected fit and use the halfwidth
(z* + A_hat theta*) sigma_tilde(x), where z* is the bootstrap quantile of the
sup-t process over the grid and the conservative index set. The robustness
variant widens the inflation term to max{theta*, J^{(|a|-p)/d} / sigma(x)} to
allow for bias-dominating regimes. Undersmoothed bands use a deterministic J
and the plain quantile z*_{1-alpha,J} with no inflation term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimator as est
from .adaptive import AdaptiveSelection
from .bootstrap import MultiplierPlan, quantile, sup_t_single
from .errors import ConfigurationError, InvalidSmoothnessError, UnsupportedDerivativeError
from .estimator import VarianceField

BAND_KINDS = ("h_band", "deriv_band", "undersmoothed", "robustness")


@dataclass(frozen=True, eq=False)
class BandResult:
    """A symmetric uniform band: center(x) +/- halfwidth(x) on a grid."""

    grid: np.ndarray
    center: np.ndarray
    halfwidth: np.ndarray
    kind: str
    level: float
    deriv: tuple[int, ...]
    j_used: int
    z_star: float
    theta_star: float | None = None
    a_hat: float | None = None
    p_lower: float | None = None
    z_draws: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in BAND_KINDS:
            raise ConfigurationError(f"unknown band kind {self.kind!r}")
        if not np.all(self.halfwidth > 0.0):
            raise ConfigurationError("band halfwidth must be strictly positive")

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.halfwidth

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.halfwidth

    @property
    def width(self) -> np.ndarray:
        return 2.0 * self.halfwidth


def excludes_constant(band: BandResult) -> bool:
    """True when no horizontal line fits inside the band.

    The check is the scalar comparison: the largest value of the lower
    envelope exceeds the smallest value of the upper envelope.
    """
    return bool(np.max(band.lower) > np.min(band.upper))


def _deriv_tuple(a, dim: int) -> tuple[int, ...]:
    if np.isscalar(a):
        if dim == 1:
            return (int(a),)
        if int(a) == 0:
            return (0,) * dim
        raise UnsupportedDerivativeError("multi-index required for a multivariate band")
    multi = tuple(int(v) for v in a)
    if len(multi) != dim:
        raise UnsupportedDerivativeError(f"multi-index must have {dim} entries")
    return multi


def _selection_field(selection: AdaptiveSelection, multi: tuple[int, ...]) -> VarianceField:
    """Variance field at derivative order ``multi`` over J_minus and J_tilde."""
    base = selection.varfield
    needed = tuple(sorted(set(selection.j_minus_set) | {selection.j_tilde}))
    if base.deriv == multi and set(needed) <= set(base.j_values):
        return base
    backend = selection.backend
    pts = selection.grid
    return VarianceField(
        grid=pts,
        deriv=multi,
        j_values=needed,
        influence={j: backend.influence(j, pts, multi) for j in needed},
        u_hat={j: backend.residuals(j) for j in needed},
        y=backend.y,
    )


def _assemble(
    field: VarianceField,
    center: np.ndarray,
    multiplier,
    kind: str,
    level: float,
    multi: tuple[int, ...],
    j_used: int,
    z_star: float,
    theta_star: float | None = None,
    a_hat: float | None = None,
    p_lower: float | None = None,
    z_draws: np.ndarray | None = None,
) -> BandResult:
    return BandResult(
        grid=field.grid,
        center=center,
        halfwidth=np.asarray(multiplier) * field.sigma[j_used],
        kind=kind,
        level=level,
        deriv=multi,
        j_used=j_used,
        z_star=z_star,
        theta_star=theta_star,
        a_hat=a_hat,
        p_lower=p_lower,
        z_draws=z_draws,
    )


def band_deriv(
    selection: AdaptiveSelection,
    fits=None,
    varfield: VarianceField | None = None,
    plan: MultiplierPlan | None = None,
    alpha: float = 0.05,
    a=1,
    a_fixed: float | None = None,
    n_workers: int = 1,
) -> BandResult:
    """Data-driven uniform confidence band for d^a h (a = 0 gives the h band)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    plan = plan or MultiplierPlan()
    multi = _deriv_tuple(a, selection.backend.grid_dim)
    if varfield is not None and varfield.deriv == multi and (
        set(selection.j_minus_set) | {selection.j_tilde}
    ) <= set(varfield.j_values):
        field = varfield
    else:
        field = _selection_field(selection, multi)
    z_draws = sup_t_single(field, plan, selection.j_minus_set, n_workers=n_workers)
    z_star = quantile(z_draws, 1.0 - alpha)
    a_hat = selection.a_hat if a_fixed is None else float(a_fixed)
    center = selection.backend.center(selection.j_tilde, field.grid, multi)
    multiplier = z_star + a_hat * selection.theta_star
    kind = "h_band" if all(v == 0 for v in multi) else "deriv_band"
    return _assemble(
        field, center, multiplier, kind, 1.0 - alpha, multi, selection.j_tilde,
        z_star, theta_star=selection.theta_star, a_hat=a_hat, z_draws=z_draws,
    )


def band_h(
    selection: AdaptiveSelection,
    fits=None,
    varfield: VarianceField | None = None,
    plan: MultiplierPlan | None = None,
    alpha: float = 0.05,
    a_fixed: float | None = None,
    n_workers: int = 1,
) -> BandResult:
    """Data-driven uniform confidence band for the structural function."""
    return band_deriv(selection, fits, varfield, plan, alpha, a=0, a_fixed=a_fixed, n_workers=n_workers)


def default_p_lower(dim: int, deriv_order: int) -> float:
    """Smoothness lower bound used by the robustness band when none is given."""
    return max(dim / 2.0 + 0.1, deriv_order + 0.1)


def band_robustness(
    selection: AdaptiveSelection,
    fits=None,
    varfield: VarianceField | None = None,
    plan: MultiplierPlan | None = None,
    alpha: float = 0.05,
    a=0,
    p_lower: float | None = None,
    n_workers: int = 1,
) -> BandResult:
    """Robustness-check band with a bias allowance of order J^{(|a|-p)/d}."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    plan = plan or MultiplierPlan()
    multi = _deriv_tuple(a, selection.backend.grid_dim)
    order = sum(multi)
    dim = selection.backend.grid_dim
    if p_lower is None:
        p_lower = default_p_lower(dim, order)
    if p_lower <= order:
        raise InvalidSmoothnessError(
            f"robustness band needs p_lower > |a| (got p_lower={p_lower}, |a|={order})"
        )
    field = _selection_field(selection, multi)
    z_draws = sup_t_single(field, plan, selection.j_minus_set, n_workers=n_workers)
    z_star = quantile(z_draws, 1.0 - alpha)
    sigma = field.sigma[selection.j_tilde]
    bias_term = selection.j_tilde ** ((order - p_lower) / dim) / sigma
    inflation = np.maximum(selection.theta_star, bias_term)
    center = selection.backend.center(selection.j_tilde, field.grid, multi)
    multiplier = z_star + selection.a_hat * inflation
    return _assemble(
        field, center, multiplier, "robustness", 1.0 - alpha, multi,
        selection.j_tilde, z_star, theta_star=selection.theta_star,
        a_hat=selection.a_hat, p_lower=float(p_lower), z_draws=z_draws,
    )


def band_undersmoothed(
    fit: est.NpivFit,
    varfield: VarianceField | None = None,
    plan: MultiplierPlan | None = None,
    alpha: float = 0.05,
    a=0,
    grid=None,
    n_workers: int = 1,
) -> BandResult:
    """Deterministic-J band with halfwidth z*_{1-alpha,J} sigma_J(x)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    plan = plan or MultiplierPlan()
    multi = _deriv_tuple(a, fit.x_basis.dim)
    if varfield is not None and fit.j in varfield.j_values and varfield.deriv == multi:
        field = varfield
    else:
        pts = grid if grid is not None else (varfield.grid if varfield is not None else None)
        if pts is None:
            raise ConfigurationError("band_undersmoothed needs a grid or a variance field")
        field = est.variance_field({fit.j: fit}, pts, multi)
    z_draws = sup_t_single(field, plan, (fit.j,), n_workers=n_workers)
    z_star = quantile(z_draws, 1.0 - alpha)
    center = est.evaluate(fit, field.grid, multi)
    return _assemble(
        field, center, z_star, "undersmoothed", 1.0 - alpha, multi, fit.j,
        z_star, z_draws=z_draws,
    )
