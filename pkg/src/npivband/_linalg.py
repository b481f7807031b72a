"""Generalized inverses of Gram matrices with a fixed relative cutoff.

All pseudo-inverses in the package use the same rule: eigenvalues (or
singular values) at or below ``sigma_max * n_ambient * eps`` are treated as
zero, where ``n_ambient`` is the largest dimension involved in forming the
matrix (typically ``max(n, K)``).
"""

from __future__ import annotations

import numpy as np

_EPS = float(np.finfo(np.float64).eps)


def spectral_cutoff(values: np.ndarray, n_ambient: int) -> float:
    vmax = float(np.max(values, initial=0.0))
    return vmax * n_ambient * _EPS


def pinv_psd(a: np.ndarray, n_ambient: int) -> tuple[np.ndarray, int]:
    """Pseudo-inverse of a symmetric PSD matrix.

    Returns the inverse restricted to the numerically nonzero eigenspace and
    the retained rank.
    """
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    tol = spectral_cutoff(np.maximum(w, 0.0), n_ambient)
    keep = w > tol
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        return np.zeros_like(a), 0
    vk = v[:, keep]
    return (vk / w[keep]) @ vk.T, rank


def inv_sqrt_psd(a: np.ndarray, n_ambient: int) -> tuple[np.ndarray, int]:
    """Pseudo inverse square root ``A^{-1/2}`` of a symmetric PSD matrix."""
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    tol = spectral_cutoff(np.maximum(w, 0.0), n_ambient)
    keep = w > tol
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        return np.zeros_like(a), 0
    vk = v[:, keep]
    return (vk / np.sqrt(w[keep])) @ vk.T, rank
