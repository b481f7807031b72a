"""Data-driven choice of sieve dimension (bootstrap-calibrated Lepski rule).

The selection runs in three steps. First the upper truncation point J_hat_max
is the smallest grid dimension where J sqrt(log J) / s_hat_J crosses
10 sqrt(n) (with 1 / s_hat_J replaced by upsilon_n = max{1, (0.1 log n)^4}
for regression). Second, the threshold theta* is the (1 - alpha_hat) quantile
of the bootstrap sup-t contrast statistic over the index set, with
alpha_hat = min{0.5, sqrt(log J_hat_max / J_hat_max)}. Third, J_hat is the
smallest dimension whose contrasts against all larger dimensions stay below
1.1 theta*, and the selected dimension is J_tilde = min(J_hat, J_hat_n) for
NPIV or J_tilde = J_hat for regression.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import basis as bs
from . import estimator as est
from .bootstrap import MultiplierPlan, quantile, sup_t_contrast
from .errors import ConfigurationError, InsufficientSampleError
from .estimator import VarianceField

LEPSKI_FACTOR = 1.1
_RATE_CONSTANT = 10.0
_INDEX_SET_LOWER = 0.1


def upsilon(n: int) -> float:
    """Regression replacement for 1/s_hat: max{1, (0.1 log n)^4}."""
    return max(1.0, (0.1 * math.log(n)) ** 4)


def _j_log_rate(j: int) -> float:
    return j * math.sqrt(max(math.log(j), 0.0))


def default_grid(dim: int, points_per_axis: int = 100) -> np.ndarray:
    """Equally spaced evaluation grid on [0, 1]^dim, C-ordered."""
    axis = np.linspace(0.0, 1.0, points_per_axis)
    if dim == 1:
        return axis.reshape(-1, 1)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class AdaptiveSelection:
    """Everything the dimension-selection rule produces, plus fit byproducts."""

    j_hat_max: int
    index_set: tuple[int, ...]
    alpha_hat: float
    theta_star: float
    j_hat: int
    j_hat_n: int
    j_tilde: int
    j_minus_set: tuple[int, ...]
    a_hat: float
    mode: str
    grid: np.ndarray
    fits: dict
    varfield: VarianceField
    s_hat_by_j: dict
    backend: object
    theta_draws: np.ndarray | None = None
    lepski_factor: float = LEPSKI_FACTOR
    flags: tuple[str, ...] = ()


class _EstimatorBackend:
    """Fit cache and influence provider for the standard NPIV/regression model."""

    def __init__(self, sample: est.Sample, x_spec: bs.BasisSpec, ispec: bs.InstrumentSpec | None):
        self.sample = sample
        self.x_spec = x_spec
        self.ispec = ispec
        self.grid_dim = sample.dim
        self.n = sample.n
        self.y = sample.y
        self._fits: dict[int, est.NpivFit] = {}

    def candidate_dims(self) -> list[int]:
        out: list[int] = []
        level = 0
        while True:
            j = (2**level + self.x_spec.order - 1) ** self.x_spec.dim
            if j > self.n:
                break
            if self.ispec is not None and bs.instrument_dim(self.ispec, j) > self.n:
                break
            out.append(j)
            level += 1
        if not out:
            raise InsufficientSampleError(
                f"no admissible dimension J has K(J) <= n (n={self.n})"
            )
        return out

    def next_dim(self, j: int) -> int:
        level = bs.resolution_for_dimension(self.x_spec, j)
        return (2 ** (level + 1) + self.x_spec.order - 1) ** self.x_spec.dim

    def fit(self, j: int) -> est.NpivFit:
        if j not in self._fits:
            self._fits[j] = est.fit(self.sample, self.x_spec, self.ispec, j)
        return self._fits[j]

    def shat(self, j: int) -> float:
        return self.fit(j).s_hat

    def residuals(self, j: int) -> np.ndarray:
        return self.fit(j).u_hat

    def influence(self, j: int, pts: np.ndarray, deriv=0) -> np.ndarray:
        return est.influence_rows(self.fit(j), pts, deriv)

    def center(self, j: int, pts: np.ndarray, deriv=0) -> np.ndarray:
        return est.evaluate(self.fit(j), pts, deriv)


def _bracket_min(cands, lhs_fn, target, beyond_fn, next_dim_fn, flags) -> int:
    """Smallest J on the grid with lhs(J) <= target < lhs(J+)."""
    if lhs_fn(cands[0]) > target:
        flags.append("jmax_left_inequality_violated")
        warnings.warn(
            "smallest admissible dimension already violates the truncation rule; "
            "using it as J_hat_max",
            RuntimeWarning,
            stacklevel=3,
        )
        return cands[0]
    last_ok = cands[0]
    for i, j in enumerate(cands):
        if lhs_fn(j) > target:
            continue
        last_ok = j
        if i + 1 < len(cands):
            rhs = lhs_fn(cands[i + 1])
        else:
            rhs = beyond_fn(next_dim_fn(j))
        if rhs > target:
            return j
    flags.append("jmax_capped_by_sample")
    warnings.warn(
        "truncation rule did not bracket within the feasible grid; capping J_hat_max",
        RuntimeWarning,
        stacklevel=3,
    )
    return last_ok


def _j_hat_max_npiv(backend, flags) -> int:
    target = _RATE_CONSTANT * math.sqrt(backend.n)
    cands = backend.candidate_dims()
    # Beyond the feasible grid s_hat cannot be computed, but s_hat <= 1 gives a
    # lower bound J sqrt(log J) that often settles the bracket anyway.
    return _bracket_min(
        cands,
        lambda j: _j_log_rate(j) / max(backend.shat(j), np.finfo(float).tiny),
        target,
        _j_log_rate,
        backend.next_dim,
        flags,
    )


def _j_hat_max_regression(n: int, spec: bs.BasisSpec, flags) -> int:
    if n < 2:
        raise ConfigurationError("regression truncation rule needs n >= 2")
    ups = upsilon(n)
    target = _RATE_CONSTANT * math.sqrt(n)
    cands = bs.dimension_grid(spec, n)

    def lhs(j: int) -> float:
        return _j_log_rate(j) * ups

    def next_dim(j: int) -> int:
        level = bs.resolution_for_dimension(spec, j)
        return (2 ** (level + 1) + spec.order - 1) ** spec.dim

    return _bracket_min(cands, lhs, target, lhs, next_dim, flags)


def j_hat_max_npiv(sample: est.Sample, x_spec: bs.BasisSpec, ispec: bs.InstrumentSpec) -> int:
    """Upper truncation point of the index set for NPIV."""
    flags: list[str] = []
    return _j_hat_max_npiv(_EstimatorBackend(sample, x_spec, ispec), flags)


def j_hat_max_regression(n: int, spec: bs.BasisSpec) -> int:
    """Upper truncation point for series regression (no first-stage fits)."""
    flags: list[str] = []
    return _j_hat_max_regression(n, spec, flags)


def run_selection(
    backend,
    plan: MultiplierPlan,
    mode: str,
    grid,
    x_spec: bs.BasisSpec,
    n_workers: int = 1,
) -> AdaptiveSelection:
    """Generic Lepski selection over a fit backend; used by all model variants."""
    if mode not in ("npiv", "regression"):
        raise ConfigurationError(f"unknown selection mode {mode!r}")
    flags: list[str] = []
    if mode == "npiv":
        j_hat_max = _j_hat_max_npiv(backend, flags)
    else:
        j_hat_max = _j_hat_max_regression(backend.n, x_spec, flags)

    cands = backend.candidate_dims()
    if j_hat_max > cands[-1]:
        j_hat_max = cands[-1]
        flags.append("jmax_capped_by_backend")
    lower = _INDEX_SET_LOWER * math.log(j_hat_max) ** 2 if j_hat_max > 1 else 0.0
    index_set = tuple(j for j in cands if lower <= j <= j_hat_max)
    if not index_set:
        index_set = (cands[-1],)
    if j_hat_max >= 2:
        alpha_hat = min(0.5, math.sqrt(math.log(j_hat_max) / j_hat_max))
    else:
        alpha_hat = 0.5
        flags.append("alpha_hat_clamped")

    pts = bs.as_points(grid if grid is not None else default_grid(backend.grid_dim), backend.grid_dim)
    fits = {j: backend.fit(j) for j in index_set}
    varfield = VarianceField(
        grid=pts,
        deriv=(0,) * backend.grid_dim,
        j_values=index_set,
        influence={j: backend.influence(j, pts, 0) for j in index_set},
        u_hat={j: backend.residuals(j) for j in index_set},
        y=backend.y,
    )

    pairs = [(a, b) for i, a in enumerate(index_set) for b in index_set[i + 1 :]]
    theta_draws = None
    if pairs:
        theta_draws = sup_t_contrast(varfield, plan, pairs, n_workers=n_workers)
        theta_star = quantile(theta_draws, 1.0 - alpha_hat)
    else:
        # Singleton index set: the contrast sup is vacuous; keep the UCB
        # inflation defined via the standard normal quantile.
        theta_star = float(ndtri(1.0 - alpha_hat))
        flags.append("singleton_index_set")

    j_hat = index_set[-1]
    for j in index_set:
        larger = [j2 for j2 in index_set if j2 > j]
        if not larger:
            j_hat = j
            break
        stat = max(varfield.contrast_stat(j, j2) for j2 in larger)
        if stat <= LEPSKI_FACTOR * theta_star:
            j_hat = j
            break

    below = [j for j in index_set if j < j_hat_max]
    if below:
        j_hat_n = max(below)
    else:
        j_hat_n = j_hat_max
        flags.append("j_hat_n_degenerate")

    j_tilde = j_hat if mode == "regression" else min(j_hat, j_hat_n)

    if j_tilde == j_hat:
        j_minus = tuple(j for j in index_set if j < j_hat_n)
        if not j_minus:
            j_minus = index_set
            flags.append("j_minus_fallback_full_set")
    else:
        j_minus = index_set

    a_hat = math.log(math.log(j_tilde)) if j_tilde > 1 else float("-inf")
    if not a_hat > 0.0:
        a_hat = 0.0
        flags.append("a_hat_clamped_at_zero")

    return AdaptiveSelection(
        j_hat_max=j_hat_max,
        index_set=index_set,
        alpha_hat=alpha_hat,
        theta_star=theta_star,
        j_hat=j_hat,
        j_hat_n=j_hat_n,
        j_tilde=j_tilde,
        j_minus_set=j_minus,
        a_hat=a_hat,
        mode=mode,
        grid=pts,
        fits=fits,
        varfield=varfield,
        s_hat_by_j={j: backend.shat(j) for j in index_set},
        backend=backend,
        theta_draws=theta_draws,
        flags=tuple(flags),
    )


def select(
    sample: est.Sample,
    x_spec: bs.BasisSpec,
    ispec: bs.InstrumentSpec | None = None,
    plan: MultiplierPlan | None = None,
    mode: str = "npiv",
    grid=None,
    n_workers: int = 1,
) -> AdaptiveSelection:
    """Select the sieve dimension for the standard NPIV or regression model."""
    if mode == "npiv" and ispec is None:
        raise ConfigurationError("npiv mode needs an InstrumentSpec; use mode='regression' otherwise")
    backend = _EstimatorBackend(sample, x_spec, ispec if mode == "npiv" else None)
    return run_selection(backend, plan or MultiplierPlan(), mode, grid, x_spec, n_workers)
