"""Outlier rejection by a pointwise mean +/- k*std band and Savitzky-Golay smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .spectra import SpectraSet

__all__ = [
    "DecisionSurface",
    "SGConfig",
    "fit_surface",
    "reject_outliers",
    "reject_outliers_grouped",
    "sg_coefficients",
    "smooth",
    "smooth_matrix",
    "preprocess",
]

DEFAULT_OUTLIER_K = 3.0
DEFAULT_SG_WINDOW = 91
DEFAULT_SG_ORDER = 3


@dataclass(frozen=True)
class DecisionSurface:
    mean: np.ndarray
    std: np.ndarray
    k: float = DEFAULT_OUTLIER_K

    @property
    def lower(self):
        return self.mean - self.k * self.std

    @property
    def upper(self):
        return self.mean + self.k * self.std


@dataclass(frozen=True)
class SGConfig:
    """Savitzky-Golay window (odd number of points) and polynomial order.

    ``edge`` selects how the ends of a spectrum are handled: ``"mirror"``
    reflects the spectrum about its end points before filtering,
    ``"interp"`` evaluates the polynomial fitted to the first/last window.
    """

    window: int = DEFAULT_SG_WINDOW
    poly_order: int = DEFAULT_SG_ORDER
    edge: str = "mirror"

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"SG window must be an odd positive integer, got {self.window}")
        if int(self.poly_order) != self.poly_order or self.poly_order < 0:
            raise ValueError(f"SG poly_order must be a non-negative integer, got {self.poly_order}")
        if self.poly_order >= self.window:
            raise ValueError(
                f"SG poly_order ({self.poly_order}) must be smaller than window ({self.window})"
            )
        if self.edge not in ("mirror", "interp"):
            raise ValueError(f"unknown SG edge mode {self.edge!r}")


def fit_surface(s: SpectraSet, k: float = DEFAULT_OUTLIER_K) -> DecisionSurface:
    """Columnwise mean and sample standard deviation (ddof=1) of ``s``."""
    if s.n < 2:
        raise ValueError(f"decision surface needs at least 2 spectra, got {s.n}")
    if k < 0:
        raise ValueError("k must be non-negative")
    X = s.matrix
    return DecisionSurface(X.mean(axis=0), X.std(axis=0, ddof=1), float(k))


def reject_outliers(s: SpectraSet, surf: DecisionSurface) -> tuple[SpectraSet, np.ndarray]:
    """Drop spectra with at least one point strictly outside the surface band.

    Points lying exactly on the band edge count as inside.  Returns the
    filtered set and the indices (into ``s``) of the removed rows.
    """
    if surf.mean.shape != (s.p,):
        raise ValueError(f"surface has {surf.mean.size} points, spectra have {s.p}")
    dev = np.abs(s.matrix - surf.mean)
    with np.errstate(invalid="ignore"):
        # k=inf with std=0 gives nan and therefore never rejects
        outside = dev > surf.k * surf.std
    rejected = np.flatnonzero(outside.any(axis=1))
    keep = np.setdiff1d(np.arange(s.n), rejected)
    return s.subset(keep), rejected


def reject_outliers_grouped(
    s: SpectraSet, k: float = DEFAULT_OUTLIER_K, pooled: bool = False
) -> tuple[SpectraSet, np.ndarray]:
    """Outlier rejection with one surface per label (default) or one pooled surface."""
    if pooled:
        return reject_outliers(s, fit_surface(s, k))
    keep_mask = np.ones(s.n, dtype=bool)
    for lab in (1, 0):
        idx = np.flatnonzero(s.labels == lab)
        if idx.size == 0:
            continue
        group = s.subset(idx)
        _, rej = reject_outliers(group, fit_surface(group, k))
        keep_mask[idx[rej]] = False
    return s.subset(np.flatnonzero(keep_mask)), np.flatnonzero(~keep_mask)


def _sg_fit_matrix(window: int, order: int, positions: np.ndarray) -> np.ndarray:
    """Rows give the least-squares weights evaluating the fit at ``positions``."""
    half = window // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    # scaled offsets keep the Vandermonde matrix well conditioned for wide windows
    scale = max(half, 1)
    A = np.vander(t / scale, order + 1, increasing=True)
    pinv = np.linalg.pinv(A)  # (order+1, window)
    E = np.vander(np.asarray(positions, dtype=np.float64) / scale, order + 1, increasing=True)
    return E @ pinv


def sg_coefficients(cfg: SGConfig) -> np.ndarray:
    """Smoothing weights for the centre of the window (symmetric, sum to 1)."""
    return _sg_fit_matrix(cfg.window, cfg.poly_order, np.array([0.0]))[0]


def smooth_matrix(X: np.ndarray, cfg: SGConfig) -> np.ndarray:
    """Apply the filter along the last axis of a 1-D or 2-D array."""
    X = np.asarray(X, dtype=np.float64)
    one_d = X.ndim == 1
    X2 = np.atleast_2d(X)
    p = X2.shape[1]
    w = cfg.window
    if p < w:
        raise ValueError(f"spectrum length {p} is shorter than the SG window {w}")
    half = w // 2
    coeffs = sg_coefficients(cfg)
    if cfg.edge == "mirror":
        padded = np.pad(X2, ((0, 0), (half, half)), mode="reflect") if half else X2
        out = sliding_window_view(padded, w, axis=1) @ coeffs
    else:
        out = np.empty_like(X2)
        out[:, half : p - half] = sliding_window_view(X2, w, axis=1) @ coeffs
        if half:
            edge_w = _sg_fit_matrix(w, cfg.poly_order, np.arange(-half, 0))
            out[:, :half] = X2[:, :w] @ edge_w.T
            out[:, p - half :] = X2[:, p - w :] @ edge_w[::-1, ::-1].T
    return out[0] if one_d else out


def smooth(s: SpectraSet, cfg: SGConfig) -> SpectraSet:
    return s.with_matrix(smooth_matrix(s.matrix, cfg))


def preprocess(
    s: SpectraSet,
    sg: SGConfig | None = SGConfig(),
    outlier_k: float | None = DEFAULT_OUTLIER_K,
    pooled_surface: bool = False,
) -> tuple[SpectraSet, np.ndarray]:
    """Outlier rejection followed by smoothing; either step may be disabled with None.

    Returns the processed set and the indices of rejected rows of ``s``.
    """
    rejected = np.array([], dtype=np.int64)
    if outlier_k is not None:
        s, rejected = reject_outliers_grouped(s, outlier_k, pooled=pooled_surface)
    if sg is not None and s.n:
        s = smooth(s, sg)
    return s, rejected
