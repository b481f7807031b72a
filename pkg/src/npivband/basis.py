"""Dyadic B-spline sieve bases on the unit cube.

A basis is a clamped (open knot vector) B-spline family of order ``r`` at
resolution level ``l``, with the 2^l - 1 interior knots placed either at the
dyadic points 2^-l, ..., 1 - 2^-l or at empirical quantiles of a data column.
The univariate dimension is 2^l + r - 1; multivariate bases are tensor
products with C ordering (last axis fastest), so the admissible dimensions
form the grid {(2^l + r - 1)^d : l = 0, 1, ...}.

Evaluation uses the Cox-de Boor recursion. Values at interior knots are
right-limits; values at x = 1 are left-limits, which makes every evaluation
well defined on the closed cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    ConfigurationError,
    DegenerateColumnError,
    DomainError,
    InvalidDimensionError,
    UnsupportedDerivativeError,
)

KNOT_RULES = ("uniform_dyadic", "empirical_quantile")

TRANSFORM_KINDS = ("affine", "empirical_cdf", "custom_clamp")


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisSpec:
    """A concrete B-spline basis: order, resolution, dimension, knots."""

    order: int
    resolution: int
    dim: int = 1
    knot_rule: str = "uniform_dyadic"
    interior_knots: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ConfigurationError("spline order must be >= 1")
        if self.resolution < 0:
            raise ConfigurationError("resolution level must be >= 0")
        if self.dim < 1:
            raise ConfigurationError("dimension must be >= 1")
        if self.knot_rule not in KNOT_RULES:
            raise ConfigurationError(f"unknown knot rule {self.knot_rule!r}")
        n_interior = 2**self.resolution - 1
        if self.interior_knots is None:
            # Dyadic default; quantile knots must be supplied (see quantile_knots).
            knots = tuple(i / 2**self.resolution for i in range(1, n_interior + 1))
            object.__setattr__(self, "interior_knots", tuple(knots for _ in range(self.dim)))
        else:
            axes = tuple(tuple(float(v) for v in axis) for axis in self.interior_knots)
            if len(axes) != self.dim:
                raise ConfigurationError("interior_knots must supply one tuple per axis")
            for axis in axes:
                if len(axis) != n_interior:
                    raise ConfigurationError(
                        f"resolution {self.resolution} requires {n_interior} interior knots per axis"
                    )
                if any(not 0.0 < v < 1.0 for v in axis):
                    raise ConfigurationError("interior knots must lie strictly inside (0, 1)")
                if any(b <= a for a, b in zip(axis, axis[1:])):
                    raise ConfigurationError("interior knots must be strictly increasing")
            object.__setattr__(self, "interior_knots", axes)

    @property
    def dim_per_axis(self) -> int:
        return 2**self.resolution + self.order - 1

    @property
    def n_funcs(self) -> int:
        return self.dim_per_axis**self.dim

    def knots(self, axis: int = 0) -> np.ndarray:
        """Full clamped knot vector for one axis."""
        inner = np.asarray(self.interior_knots[axis], dtype=np.float64)
        return np.concatenate([np.zeros(self.order), inner, np.ones(self.order)])


def quantile_knots(column: np.ndarray, resolution: int) -> tuple[float, ...]:
    """Interior knots at the empirical quantiles i/2^l, i = 1, ..., 2^l - 1."""
    col = np.asarray(column, dtype=np.float64).ravel()
    if col.size == 0:
        raise ConfigurationError("cannot place quantile knots on an empty column")
    n_interior = 2**resolution - 1
    if n_interior == 0:
        return ()
    probs = np.arange(1, n_interior + 1) / 2**resolution
    knots = np.quantile(col, probs)
    if np.any(knots <= 0.0) or np.any(knots >= 1.0) or np.any(np.diff(knots) <= 0.0):
        raise DegenerateColumnError(
            "empirical quantile knots are not strictly increasing inside (0, 1); "
            "the column is too discrete for this resolution"
        )
    return tuple(float(v) for v in knots)


def make_spec(
    order: int,
    resolution: int,
    dim: int = 1,
    knot_rule: str = "uniform_dyadic",
    data: np.ndarray | None = None,
) -> BasisSpec:
    """Build a BasisSpec, computing quantile knots from ``data`` when needed."""
    if knot_rule == "empirical_quantile":
        if data is None:
            raise ConfigurationError("empirical_quantile knots require data")
        pts = as_points(data, dim)
        axes = tuple(quantile_knots(pts[:, i], resolution) for i in range(dim))
        return BasisSpec(order, resolution, dim, knot_rule, axes)
    return BasisSpec(order, resolution, dim, knot_rule)


# ---------------------------------------------------------------------------
# Dimension grid and the J -> K(J) map
# ---------------------------------------------------------------------------


def dimension_grid(spec: BasisSpec, j_cap: int) -> list[int]:
    """Admissible sieve dimensions {(2^l + r - 1)^d} up to ``j_cap``."""
    out: list[int] = []
    level = 0
    while (2**level + spec.order - 1) ** spec.dim <= j_cap:
        out.append((2**level + spec.order - 1) ** spec.dim)
        level += 1
    if not out:
        raise InvalidDimensionError(
            f"j_cap={j_cap} is below the smallest admissible dimension "
            f"{spec.order ** spec.dim}"
        )
    return out


def resolution_for_dimension(spec: BasisSpec, j: int) -> int:
    """Resolution level l with (2^l + r - 1)^d == j, or raise."""
    per_axis = round(j ** (1.0 / spec.dim))
    if per_axis**spec.dim != j:
        raise InvalidDimensionError(f"J={j} is not an admissible dimension for d={spec.dim}")
    pow2 = per_axis - spec.order + 1
    if pow2 < 1 or pow2 & (pow2 - 1):
        raise InvalidDimensionError(f"J={j} is not of the form (2^l + {spec.order} - 1)^{spec.dim}")
    return pow2.bit_length() - 1


def spec_for_dimension(spec: BasisSpec, j: int, data: np.ndarray | None = None) -> BasisSpec:
    """Re-resolve a spec template at sieve dimension ``j``."""
    level = resolution_for_dimension(spec, j)
    return make_spec(spec.order, level, spec.dim, spec.knot_rule, data=data)


@dataclass(frozen=True)
class InstrumentSpec:
    """Instrument-side basis family, one order higher than the regressor basis.

    The resolution for the instrument basis at sieve dimension J with
    regressor resolution l is ``l_w = ceil((l + q) d / d_w)``, which pins the
    instrument dimension ``K(J) = (2^{l_w} + r_w - 1)^{d_w}`` with
    ``r_w = r + 1``.
    """

    x_spec: BasisSpec
    q: int = 2
    dim_w: int = 1
    knot_rule: str = "uniform_dyadic"

    def __post_init__(self) -> None:
        if self.q < 0:
            raise ConfigurationError("resolution offset q must be >= 0")
        if self.dim_w < 1:
            raise ConfigurationError("instrument dimension must be >= 1")
        if self.knot_rule not in KNOT_RULES:
            raise ConfigurationError(f"unknown knot rule {self.knot_rule!r}")

    @property
    def order(self) -> int:
        return self.x_spec.order + 1

    def resolution_for(self, j: int) -> int:
        level = resolution_for_dimension(self.x_spec, j)
        num = (level + self.q) * self.x_spec.dim
        return -(-num // self.dim_w)


def instrument_dim(ispec: InstrumentSpec, j: int) -> int:
    """The instrument dimension K(J); always at least J."""
    level_w = ispec.resolution_for(j)
    k = (2**level_w + ispec.order - 1) ** ispec.dim_w
    if k < j:
        raise InvalidDimensionError(
            f"K(J)={k} < J={j}; increase the resolution offset q to restore K >= J"
        )
    return k


def instrument_spec_for(ispec: InstrumentSpec, j: int, w_data: np.ndarray | None = None) -> BasisSpec:
    """Concrete instrument basis at sieve dimension ``j``."""
    level_w = ispec.resolution_for(j)
    return make_spec(ispec.order, level_w, ispec.dim_w, ispec.knot_rule, data=w_data)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def as_points(x, dim: int) -> np.ndarray:
    """Normalize points to an (n, dim) float array inside [0, 1]^dim."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        if dim != 1:
            raise DomainError(f"scalar point given for a {dim}-dimensional basis")
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # A flat vector is n points in 1-d, or a single point in d dimensions.
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"points must have {dim} coordinates")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError("evaluation points must lie in the unit cube [0, 1]^d")
    if not np.all(np.isfinite(arr)):
        raise DomainError("evaluation points must be finite")
    return arr


def _spans(knots: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    # Right-continuous span lookup, clamped to the last nonempty span so that
    # x = 1 evaluates as a left-limit.
    idx = np.searchsorted(knots, x, side="right") - 1
    return np.clip(idx, order - 1, knots.size - order - 1)


def _basis_1d(knots: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    """Cox-de Boor evaluation of all basis functions at 1-d points."""
    n_pts = x.size
    n_funcs = knots.size - order
    spans = _spans(knots, order, x)
    vals = np.zeros((n_pts, order))
    vals[:, 0] = 1.0
    left = np.zeros((n_pts, order))
    right = np.zeros((n_pts, order))
    for j in range(1, order):
        left[:, j] = x - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - x
        saved = np.zeros(n_pts)
        for k in range(j):
            denom = right[:, k + 1] + left[:, j - k]
            temp = np.where(denom != 0.0, vals[:, k] / np.where(denom == 0.0, 1.0, denom), 0.0)
            vals[:, k] = saved + right[:, k + 1] * temp
            saved = left[:, j - k] * temp
        vals[:, j] = saved
    out = np.zeros((n_pts, n_funcs))
    cols = spans[:, None] - (order - 1) + np.arange(order)[None, :]
    out[np.arange(n_pts)[:, None], cols] = vals
    return out


def _deriv_matrix(knots: np.ndarray, order: int) -> np.ndarray:
    # Coefficient map for differentiation: d/dx sum_j c_j B_{j,r} =
    # sum_i (Dc)_i B_{i,r-1} on the trimmed knot vector knots[1:-1].
    n_funcs = knots.size - order
    d = np.zeros((n_funcs - 1, n_funcs))
    for i in range(n_funcs - 1):
        gap = knots[i + order] - knots[i + 1]
        if gap > 0.0:
            d[i, i] = -(order - 1) / gap
            d[i, i + 1] = (order - 1) / gap
    return d


def _basis_deriv_1d(knots: np.ndarray, order: int, x: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return _basis_1d(knots, order, x)
    d = _deriv_matrix(knots, order)
    lower = _basis_deriv_1d(knots[1:-1], order - 1, x, k - 1)
    return lower @ d


def _normalize_deriv(spec: BasisSpec, deriv) -> tuple[int, ...]:
    if deriv is None:
        return (0,) * spec.dim
    if np.isscalar(deriv):
        if spec.dim != 1:
            if int(deriv) == 0:
                return (0,) * spec.dim
            raise UnsupportedDerivativeError("multi-index required for a multivariate basis")
        multi = (int(deriv),)
    else:
        multi = tuple(int(v) for v in deriv)
        if len(multi) != spec.dim:
            raise UnsupportedDerivativeError(f"multi-index must have {spec.dim} entries")
    for a_i in multi:
        if a_i < 0:
            raise UnsupportedDerivativeError("derivative orders must be nonnegative")
        if a_i > spec.order - 2:
            raise UnsupportedDerivativeError(
                f"derivative order {a_i} exceeds the C^{spec.order - 2} smoothness of an "
                f"order-{spec.order} spline"
            )
    return multi


def design_matrix(spec: BasisSpec, x, deriv=None) -> np.ndarray:
    """Evaluate the (possibly differentiated) basis at points; shape (n, J)."""
    pts = as_points(x, spec.dim)
    multi = _normalize_deriv(spec, deriv)
    out = _basis_deriv_1d(spec.knots(0), spec.order, pts[:, 0], multi[0])
    for axis in range(1, spec.dim):
        mat = _basis_deriv_1d(spec.knots(axis), spec.order, pts[:, axis], multi[axis])
        out = (out[:, :, None] * mat[:, None, :]).reshape(pts.shape[0], -1)
    return out


def eval_basis(spec: BasisSpec, x) -> np.ndarray:
    """Basis vector psi^J(x) at a single point."""
    return design_matrix(spec, x)[0]


def eval_basis_deriv(spec: BasisSpec, x, deriv) -> np.ndarray:
    """Differentiated basis vector at a single point."""
    return design_matrix(spec, x, deriv)[0]


def basis_integrals(spec: BasisSpec) -> np.ndarray:
    """Exact integrals of each univariate basis function over [0, 1].

    For a clamped order-r basis, int B_{j,r} = (t_{j+r} - t_j) / r.
    """
    if spec.dim != 1:
        raise ConfigurationError("analytic integrals are provided for univariate bases")
    knots = spec.knots(0)
    r = spec.order
    n_funcs = knots.size - r
    return (knots[r : r + n_funcs] - knots[:n_funcs]) / r


# ---------------------------------------------------------------------------
# Support transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportTransform:
    """Maps a raw data column monotonically into [0, 1]."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    shift: float = 1.0
    scale: float = 10.0

    def __post_init__(self) -> None:
        if self.kind not in TRANSFORM_KINDS:
            raise ConfigurationError(f"unknown transform kind {self.kind!r}")
        if self.kind == "affine" and not self.lo < self.hi:
            raise ConfigurationError("affine transform requires lo < hi")
        if self.kind == "custom_clamp" and self.scale <= 0.0:
            raise ConfigurationError("custom_clamp requires a positive scale")


#: The trade-application rule x = max{0, x/10 + 1}, truncating values below -10.
TRADE_CLAMP = SupportTransform("custom_clamp", shift=1.0, scale=10.0)


def apply_transform(transform: SupportTransform, column) -> np.ndarray:
    """Apply a support transform to one column; output lies in [0, 1]."""
    col = np.asarray(column, dtype=np.float64).ravel()
    if col.size == 0:
        raise ConfigurationError("cannot transform an empty column")
    if not np.all(np.isfinite(col)):
        raise DegenerateColumnError("column contains non-finite values")
    if transform.kind == "affine":
        return np.clip((col - transform.lo) / (transform.hi - transform.lo), 0.0, 1.0)
    if transform.kind == "custom_clamp":
        return np.clip(col / transform.scale + transform.shift, 0.0, 1.0)
    # empirical_cdf: rank / n with midranks for ties
    if col.max() == col.min():
        raise DegenerateColumnError("empirical CDF of a constant column is degenerate")
    return rankdata(col, method="average") / col.size
