"""Multiplier bootstrap: reproducible draws, sup-t statistics, quantiles.

Each bootstrap draw b perturbs the residual scores with an i.i.d. standard
normal vector drawn from an independent substream keyed by (base_seed, b), so
the draw is identical regardless of execution order or worker count. The
dominant cost per draw is a single matrix-vector product against precomputed
scaled score rows; draws are processed in fixed-size blocks so results are
bit-identical for any number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidDimensionError
from .estimator import VarianceField

_BLOCK = 64


@dataclass(frozen=True)
class MultiplierPlan:
    """Number of multiplier draws and the seed of the substream family."""

    n_draws: int = 1000
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_draws < 1:
            raise ConfigurationError("need at least one bootstrap draw")
        if self.base_seed < 0:
            raise ConfigurationError("base_seed must be a nonnegative integer")


def draw_multipliers(plan: MultiplierPlan, b: int, n: int) -> np.ndarray:
    """The n-vector of N(0,1) multipliers for draw ``b``; deterministic."""
    if not 0 <= b < plan.n_draws:
        raise ConfigurationError(f"draw index {b} outside [0, {plan.n_draws})")
    seq = np.random.SeedSequence(entropy=(int(plan.base_seed), int(b)))
    return np.random.default_rng(seq).standard_normal(int(n))


def _multiplier_block(plan: MultiplierPlan, start: int, stop: int, n: int) -> np.ndarray:
    out = np.empty((n, stop - start))
    for i, b in enumerate(range(start, stop)):
        out[:, i] = draw_multipliers(plan, b, n)
    return out


def _sup_over_draws(rows: np.ndarray, plan: MultiplierPlan, n: int, n_workers: int = 1) -> np.ndarray:
    """Per-draw sup |rows @ omega_b|, blocked for thread-count invariance."""
    sups = np.zeros(plan.n_draws)
    if rows.shape[0] == 0:
        return sups
    blocks = [(s, min(s + _BLOCK, plan.n_draws)) for s in range(0, plan.n_draws, _BLOCK)]

    def one(block: tuple[int, int]) -> tuple[int, int, np.ndarray]:
        start, stop = block
        w = _multiplier_block(plan, start, stop, n)
        return start, stop, np.abs(rows @ w).max(axis=0)

    if n_workers <= 1:
        for block in blocks:
            start, stop, vals = one(block)
            sups[start:stop] = vals
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for start, stop, vals in pool.map(one, blocks):
                sups[start:stop] = vals
    return sups


def sup_t_single(
    varfield: VarianceField,
    plan: MultiplierPlan,
    j_set=None,
    n_workers: int = 1,
) -> np.ndarray:
    """Per-draw sup over (x, J) of |D*_J(x) / sigma_J(x)|."""
    js = tuple(j_set) if j_set is not None else varfield.j_values
    if not js:
        raise ConfigurationError("sup_t_single needs a nonempty J set")
    missing = [j for j in js if j not in varfield.j_values]
    if missing:
        raise InvalidDimensionError(f"J values {missing} are not in the variance field")
    rows = np.vstack([varfield.scores[j] / varfield.sigma[j][:, None] for j in js])
    return _sup_over_draws(rows, plan, varfield.n, n_workers)


def sup_t_contrast(
    varfield: VarianceField,
    plan: MultiplierPlan,
    pairs=None,
    n_workers: int = 1,
) -> np.ndarray:
    """Per-draw sup over (x, J, J2), J2 > J, of |(D*_J - D*_J2)(x) / sigma_{J,J2}(x)|.

    The multipliers are held fixed across the whole supremum within one draw.
    Grid points where the contrast sd is degenerate (which certifies a
    degenerate numerator) are excluded.
    """
    if pairs is None:
        js = varfield.j_values
        pairs = [(a, b) for i, a in enumerate(js) for b in js[i + 1 :]]
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("sup_t_contrast needs a nonempty pair set")
    for j, j2 in pairs:
        if j2 <= j:
            raise InvalidDimensionError(f"contrast pairs require J2 > J, got ({j}, {j2})")
    blocks = [varfield.scaled_contrast_rows(j, j2) for j, j2 in pairs]
    rows = np.vstack([b for b in blocks if b.shape[0] > 0] or [np.empty((0, varfield.n))])
    return _sup_over_draws(rows, plan, varfield.n, n_workers)


def quantile(draw_sups, level: float) -> float:
    """Empirical quantile: smallest value with >= level fraction at or below it.

    This is the ceiling order statistic x_(ceil(level * B)).
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError("quantile level must lie in (0, 1)")
    draws = np.sort(np.asarray(draw_sups, dtype=np.float64).ravel())
    if draws.size == 0:
        raise ConfigurationError("quantile of an empty draw set")
    k = int(np.ceil(level * draws.size))
    k = min(max(k, 1), draws.size)
    return float(draws[k - 1])


@dataclass(frozen=True, eq=False)
class BootstrapQuantiles:
    """Audit record of the bootstrap quantiles used in one run."""

    theta_star: float
    z_star: float
    z_star_deriv: float | None = None
    theta_draws: np.ndarray | None = None
    z_draws: np.ndarray | None = None
    z_deriv_draws: np.ndarray | None = None
