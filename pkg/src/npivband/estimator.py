"""Sieve TSLS fits, pointwise evaluation, and sieve variance fields.

The fit at dimension J regresses Y on the basis psi^J(X) by two-stage least
squares using b^{K(J)}(W) as instruments. With M_J = (Psi' P_K Psi)^- Psi' P_K
this gives coefficients c_hat = M_J Y, residuals u_hat, and the reduced-rank
singular value s_hat of the orthogonalized cross matrix, which proxies the
inverse measure of ill-posedness. When no instrument spec is given the fit is
plain series least squares (M_J = (Psi'Psi)^- Psi'), the exogenous special
case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import basis as bs
from ._linalg import inv_sqrt_psd, pinv_psd
from .errors import DegenerateVarianceError, InsufficientSampleError

#: sigma(x) below this fraction of the field's largest sigma is degenerate.
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations (Y, X, W) with X and W already mapped into unit cubes."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64).ravel()
        x = _as_matrix(self.x)
        w = _as_matrix(self.w)
        if y.size == 0:
            raise ValueError("sample is empty")
        if x.shape[0] != y.size or w.shape[0] != y.size:
            raise ValueError("y, x, w must have the same number of rows")
        for name, arr in (("y", y), ("x", x), ("w", w)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains NaN or Inf")
        for name, arr in (("x", x), ("w", w)):
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"{name} must lie in the unit cube; apply a support transform")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def dim_w(self) -> int:
        return self.w.shape[1]


def _as_matrix(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError("data arrays must be 1- or 2-dimensional")
    return arr


@dataclass(frozen=True, eq=False)
class NpivFit:
    """One TSLS sieve fit at dimension J."""

    j: int
    k: int
    x_basis: bs.BasisSpec
    psi: np.ndarray
    bmat: np.ndarray
    m: np.ndarray
    c_hat: np.ndarray
    u_hat: np.ndarray
    s_hat: float
    flags: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.u_hat.size


def tsls_influence(psi: np.ndarray, bmat: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    """The J x n matrix M = (Psi' P_K Psi)^- Psi' P_K, never forming P_K."""
    n, j = psi.shape
    k = bmat.shape[1]
    gram_b = bmat.T @ bmat
    cross = bmat.T @ psi
    gb_inv, rank_b = pinv_psd(gram_b, max(n, k))
    proj = gb_inv @ cross
    a = cross.T @ proj
    a_inv, rank_a = pinv_psd(a, max(n, j))
    m = (a_inv @ proj.T) @ bmat.T
    flags = []
    if rank_b < k:
        flags.append("instrument_gram_rank_deficient")
    if rank_a < j:
        flags.append("design_rank_deficient")
    return m, tuple(flags)


def singular_value_min(psi: np.ndarray, bmat: np.ndarray) -> tuple[float, tuple[str, ...]]:
    """Smallest singular value of (B'B)^{-1/2} (B'Psi) (Psi'Psi)^{-1/2}.

    With rank-deficient Grams the value is computed on the reduced rank space
    and flagged.
    """
    n, j = psi.shape
    k = bmat.shape[1]
    rb, rank_b = inv_sqrt_psd(bmat.T @ bmat, max(n, k))
    rp, rank_p = inv_sqrt_psd(psi.T @ psi, max(n, j))
    c = rb @ (bmat.T @ psi) @ rp
    sv = np.linalg.svd(c, compute_uv=False)
    rank = min(rank_b, rank_p, sv.size)
    flags: tuple[str, ...] = ()
    if rank_b < k or rank_p < j:
        flags = ("shat_reduced_rank",)
    if rank == 0:
        return 0.0, flags
    return float(min(sv[rank - 1], 1.0)), flags


def fit(sample: Sample, x_spec: bs.BasisSpec, ispec: bs.InstrumentSpec | None, j: int) -> NpivFit:
    """TSLS sieve fit at dimension ``j``; series regression when ispec is None."""
    if j > sample.n:
        raise InsufficientSampleError(f"J={j} exceeds the sample size n={sample.n}")
    x_basis = bs.spec_for_dimension(x_spec, j, data=sample.x)
    psi = bs.design_matrix(x_basis, sample.x)
    flags: list[str] = []
    if ispec is None:
        k = j
        bmat = psi
        g_inv, rank = pinv_psd(psi.T @ psi, max(sample.n, j))
        if rank < j:
            flags.append("design_rank_deficient")
        m = g_inv @ psi.T
    else:
        k = bs.instrument_dim(ispec, j)
        if k > sample.n:
            raise InsufficientSampleError(f"K(J)={k} exceeds the sample size n={sample.n}")
        w_basis = bs.instrument_spec_for(ispec, j, w_data=sample.w)
        bmat = bs.design_matrix(w_basis, sample.w)
        m, tsls_flags = tsls_influence(psi, bmat)
        flags.extend(tsls_flags)
    c_hat = m @ sample.y
    u_hat = sample.y - psi @ c_hat
    s_hat, s_flags = singular_value_min(psi, bmat)
    flags.extend(s_flags)
    return NpivFit(
        j=j, k=k, x_basis=x_basis, psi=psi, bmat=bmat, m=m,
        c_hat=c_hat, u_hat=u_hat, s_hat=s_hat, flags=tuple(flags),
    )


def evaluate(fit_: NpivFit, x_grid, deriv=0) -> np.ndarray:
    """Point or derivative estimates (d^a h_J)(x) on a grid."""
    design = bs.design_matrix(fit_.x_basis, x_grid, deriv)
    return design @ fit_.c_hat


def shat(fit_: NpivFit) -> float:
    """The singular-value proxy for inverse ill-posedness, in [0, 1]."""
    return fit_.s_hat


def influence_rows(fit_: NpivFit, grid, deriv=0) -> np.ndarray:
    """Rows (d^a psi^J(x))' M_J for x on the grid; shape (g, n)."""
    design = bs.design_matrix(fit_.x_basis, grid, deriv)
    return design @ fit_.m


@dataclass(eq=False)
class VarianceField:
    """Sieve variance machinery for several fits on one evaluation grid.

    Holds the influence rows T_J(x)' = (d^a psi^J(x))' M_J, the score rows
    S_J = T_J * u_hat (so D_J(x) = S_J @ 1 and D*_J(x) = S_J @ omega), the
    pointwise standard deviations sigma_J(x), and lazily cached cross terms
    sigma~_{J,J2}(x) and contrast standard deviations sigma_{J,J2}(x).
    """

    grid: np.ndarray
    deriv: tuple[int, ...]
    j_values: tuple[int, ...]
    influence: dict[int, np.ndarray]
    u_hat: dict[int, np.ndarray]
    y: np.ndarray | None = None
    scores: dict[int, np.ndarray] = field(init=False)
    sigma: dict[int, np.ndarray] = field(init=False)
    _sigma2: dict[int, np.ndarray] = field(init=False)
    _cross: dict[tuple[int, int], np.ndarray] = field(init=False, default_factory=dict)
    _fitted: dict[int, np.ndarray] = field(init=False, default_factory=dict)

    def __post_init__(self) -> None:
        self.j_values = tuple(sorted(self.j_values))
        self.scores = {}
        self.sigma = {}
        self._sigma2 = {}
        for j in self.j_values:
            scores = self.influence[j] * self.u_hat[j][None, :]
            self.scores[j] = scores
            self._sigma2[j] = np.einsum("gi,gi->g", scores, scores)
            self.sigma[j] = np.sqrt(self._sigma2[j])
        max_sigma = max((float(s.max()) for s in self.sigma.values()), default=0.0)
        if max_sigma == 0.0:
            raise DegenerateVarianceError(
                "all residuals are exactly zero; sieve variance and bands are undefined"
            )
        for j in self.j_values:
            if float(self.sigma[j].min()) < VARIANCE_FLOOR * float(self.sigma[j].max()):
                raise DegenerateVarianceError(
                    f"sigma_J collapses on the grid for J={j}; variance is degenerate"
                )

    @property
    def n(self) -> int:
        return next(iter(self.u_hat.values())).size

    def sigma2(self, j: int) -> np.ndarray:
        return self._sigma2[j]

    def fitted(self, j: int) -> np.ndarray:
        """The estimate (d^a h_J)(x) = T_J(x) y on the grid."""
        if self.y is None:
            raise ValueError("variance field was built without the outcome vector")
        if j not in self._fitted:
            self._fitted[j] = self.influence[j] @ self.y
        return self._fitted[j]

    def cross(self, j: int, j2: int) -> np.ndarray:
        """sigma~_{J,J2}(x) = psi' M_J diag(u_J u_J2) M_J2' psi."""
        if j == j2:
            return self._sigma2[j]
        key = (j, j2) if j <= j2 else (j2, j)
        if key not in self._cross:
            self._cross[key] = np.einsum("gi,gi->g", self.scores[key[0]], self.scores[key[1]])
        return self._cross[key]

    def contrast_sd(self, j: int, j2: int) -> np.ndarray:
        """sigma_{J,J2}(x) = sqrt(sigma_J^2 + sigma_J2^2 - 2 sigma~_{J,J2})."""
        var = self.sigma2(j) + self.sigma2(j2) - 2.0 * self.cross(j, j2)
        return np.sqrt(np.maximum(var, 0.0))

    def _contrast_valid(self, j: int, j2: int) -> np.ndarray:
        # The contrast sd equals the l2 norm of the score-difference row, so a
        # sub-floor sd certifies a degenerate numerator and the point is dropped.
        sd = self.contrast_sd(j, j2)
        scale = max(float(self.sigma[j].max()), float(self.sigma[j2].max()))
        return sd > VARIANCE_FLOOR * scale

    def scaled_contrast_rows(self, j: int, j2: int) -> np.ndarray:
        """Rows (S_J - S_J2) / sigma_{J,J2} at valid grid points; shape (m, n)."""
        valid = self._contrast_valid(j, j2)
        if not valid.any():
            return np.empty((0, self.n))
        diff = self.scores[j][valid] - self.scores[j2][valid]
        return diff / self.contrast_sd(j, j2)[valid, None]

    def contrast_stat(self, j: int, j2: int) -> float:
        """sup over valid x of |h_J(x) - h_J2(x)| / sigma_{J,J2}(x).

        The fit difference is the estimator contrast whose sampling noise the
        bootstrap contrast process calibrates (the residual projection
        psi' M_J u_hat is identically zero by the TSLS normal equations).
        """
        valid = self._contrast_valid(j, j2)
        if not valid.any():
            return 0.0
        num = np.abs(self.fitted(j) - self.fitted(j2))[valid]
        return float((num / self.contrast_sd(j, j2)[valid]).max())


def variance_field(fits, grid, deriv=0) -> VarianceField:
    """Build a VarianceField for a mapping {J: NpivFit} on an x-grid."""
    fits = dict(fits)
    if not fits:
        raise ValueError("variance_field needs at least one fit")
    some = next(iter(fits.values()))
    pts = bs.as_points(grid, some.x_basis.dim)
    if pts.shape[0] == 0:
        raise ValueError("evaluation grid is empty")
    y = _check_shared_sample(fits)
    multi = bs._normalize_deriv(some.x_basis, deriv)
    influence = {j: influence_rows(f, pts, multi) for j, f in fits.items()}
    residuals = {j: f.u_hat for j, f in fits.items()}
    return VarianceField(
        grid=pts, deriv=multi, j_values=tuple(fits), influence=influence, u_hat=residuals, y=y
    )


def _check_shared_sample(fits: dict[int, NpivFit]) -> np.ndarray:
    items = list(fits.values())
    n = items[0].n
    if any(f.n != n for f in items):
        raise ValueError("all fits must come from the same sample")
    y0 = items[0].u_hat + items[0].psi @ items[0].c_hat
    scale = float(np.abs(y0).max()) + 1.0
    for f in items[1:]:
        y = f.u_hat + f.psi @ f.c_hat
        if np.abs(y - y0).max() > 1e-8 * scale:
            raise ValueError("fits disagree on the outcome vector; samples differ")
    return y0
