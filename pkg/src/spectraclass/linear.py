"""Penalized logistic regression, PCA and the four non-neural classifiers.

Classifiers (all binary, label 1 = first sample):

* ``LRA``  logistic regression on the global mean intensity of each spectrum
* ``L2D``  squared l2 distance to the two class-mean spectra, weighted by tau
* ``LRP``  logistic regression on average-pooled sub-bands
* ``PCALR`` logistic regression on the leading principal components, with a
  tuned probability threshold lambda
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .evaluation import make_folds
from .spectra import SpectraSet, WavenumberAxis, HW_RANGE, LW_RANGE

__all__ = [
    "ConvergenceWarning",
    "LogisticModel",
    "logistic_loss_grad",
    "fit_logistic",
    "classify_with_threshold",
    "lra_features",
    "L2DModel",
    "fit_l2d",
    "l2d_distances",
    "l2d_score",
    "l2d_classify",
    "PoolingSpec",
    "default_pooling",
    "pool_features",
    "PCABasis",
    "fit_pca",
    "project",
    "reconstruct",
    "grid_search",
    "LRA",
    "L2D",
    "LRP",
    "PCALR",
]

TUNING_GRID = np.arange(101) / 100.0


class ConvergenceWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# logistic regression


@dataclass(frozen=True)
class LogisticModel:
    beta0: float
    beta: np.ndarray
    shrinkage: float = 1.0
    converged: bool = True
    n_iter: int = 0
    grad_norm: float = 0.0

    def decision_function(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return self.beta0 + Z @ self.beta

    def score(self, Z) -> np.ndarray:
        """Pr(W = 1 | z)."""
        return expit(self.decision_function(Z))

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta": self.beta.tolist(),
            "shrinkage": self.shrinkage,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "grad_norm": self.grad_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(
            float(d["beta0"]),
            np.asarray(d["beta"], dtype=np.float64),
            float(d["shrinkage"]),
            bool(d.get("converged", True)),
            int(d.get("n_iter", 0)),
            float(d.get("grad_norm", 0.0)),
        )


def logistic_loss_grad(theta, Z, y, shrinkage=1.0):
    """Objective and gradient of the penalized logistic fit.

    ``theta = [beta0, beta_1, ..., beta_m]``.  The objective is the mean
    binary cross-entropy plus ``shrinkage * ||beta||^2 / (2N)``; the
    intercept is not penalized.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = Z.shape[0]
    eta = theta[0] + Z @ theta[1:]
    loss = np.mean(np.logaddexp(0.0, eta) - y * eta) + shrinkage * theta[1:] @ theta[1:] / (2 * n)
    r = expit(eta) - y
    grad = np.empty_like(theta)
    grad[0] = r.mean()
    grad[1:] = Z.T @ r / n + shrinkage * theta[1:] / n
    return loss, grad


def _hessian(theta, Z, shrinkage):
    n, m = Z.shape
    A = np.hstack([np.ones((n, 1)), Z])
    p = expit(theta[0] + Z @ theta[1:])
    H = (A * (p * (1 - p))[:, None]).T @ A / n
    H[np.arange(1, m + 1), np.arange(1, m + 1)] += shrinkage / n
    return H


def fit_logistic(features, labels, shrinkage: float = 1.0, tol: float = 1e-6,
                 max_iter: int = 10_000) -> LogisticModel:
    """Fit the L2-penalized logistic model by damped Newton iterations.

    Parameters
    ----------
    features : (N, m) array
    labels : (N,) array of {0, 1}
    shrinkage : float
        Penalty weight; the penalty is ``shrinkage * ||beta||^2 / (2N)``.
    tol : float
        Stop once the gradient 2-norm falls below ``tol``.
    max_iter : int
        Iteration cap; hitting it emits a :class:`ConvergenceWarning`.

    Returns
    -------
    LogisticModel
    """
    Z = np.asarray(features, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    y = np.asarray(labels, dtype=np.float64)
    if Z.shape[0] != y.size:
        raise ValueError("features and labels disagree on N")
    if Z.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if not np.all(np.isfinite(Z)):
        raise ValueError("features contain non-finite values")
    if np.unique(y).size < 2:
        raise ValueError("labels contain a single class; logistic fit needs both")
    if shrinkage < 0:
        raise ValueError("shrinkage must be non-negative")

    theta = np.zeros(Z.shape[1] + 1)
    ybar = y.mean()
    theta[0] = np.log(ybar / (1 - ybar))
    loss, grad = logistic_loss_grad(theta, Z, y, shrinkage)
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm >= tol and it < max_iter:
        it += 1
        H = _hessian(theta, Z, shrinkage)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        slope = grad @ step
        if not np.isfinite(slope) or slope >= 0:
            step, slope = -grad, -(grad @ grad)
        t = 1.0
        while True:
            cand = theta + t * step
            new_loss, new_grad = logistic_loss_grad(cand, Z, y, shrinkage)
            if new_loss <= loss + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if new_loss > loss:
            # no decrease possible at machine precision
            break
        theta, loss, grad = cand, new_loss, new_grad
        gnorm = float(np.linalg.norm(grad))
    converged = gnorm < tol
    if not converged:
        warnings.warn(
            f"logistic fit stopped after {it} iterations with gradient norm {gnorm:.3g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return LogisticModel(float(theta[0]), theta[1:].copy(), float(shrinkage), converged, it, gnorm)


def classify_with_threshold(model: LogisticModel, z, lam: float):
    """1 where Pr(W=1|z) >= lam, else 0."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {lam}")
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    out = (model.score(np.atleast_2d(z)) >= lam).astype(np.int64)
    return int(out[0]) if single else out


def grid_search(accuracy: np.ndarray, grid: np.ndarray = TUNING_GRID) -> float:
    """Pick the grid value with the highest accuracy; ties go to the value nearest 0.5,
    then to the smaller value."""
    accuracy = np.asarray(accuracy)
    best = np.flatnonzero(accuracy == accuracy.max())
    # integer percent keeps the distance comparison exact
    pct = np.rint(grid[best] * 100).astype(int)
    order = np.lexsort((pct, np.abs(pct - 50)))
    return float(grid[best[order[0]]])


def _inner_folds(y: np.ndarray, k: int, seed):
    k = min(k, int(np.bincount(y, minlength=2).min()))
    if k < 2:
        return None
    return make_folds(y.size, k, seed, labels=y).assignments


# --------------------------------------------------------------------------
# features


def lra_features(s: SpectraSet) -> np.ndarray:
    """Mean intensity of every spectrum, shape (N, 1)."""
    return s.matrix.mean(axis=1, keepdims=True)


@dataclass(frozen=True)
class PoolingSpec:
    """Interior cut points (cm^-1) splitting a region into contiguous sub-bands.

    A point with wavenumber ``w`` belongs to the first sub-band whose upper
    cut exceeds ``w``; the last sub-band is closed at the region end.
    """

    cuts: tuple = ()

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"pooling cuts must be strictly increasing: {cuts}")
        object.__setattr__(self, "cuts", cuts)

    def assign(self, wavenumbers: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.cuts), wavenumbers, side="right")

    def labels(self, wavenumbers: np.ndarray) -> list[str]:
        edges = [wavenumbers[0], *self.cuts, wavenumbers[-1]]
        return [f"{edges[j]:g}-{edges[j + 1]:g}" for j in range(len(edges) - 1)]

    @property
    def n_features(self) -> int:
        return len(self.cuts) + 1


LW_POOLING = PoolingSpec((230.0, 330.0, 480.0))
HW_POOLING = PoolingSpec((2700.0, 3200.0))


def default_pooling(axis) -> PoolingSpec:
    """LW or HW default cuts, chosen by which window contains the axis."""
    w = axis.values if isinstance(axis, WavenumberAxis) else np.asarray(axis)
    if w[0] >= LW_RANGE[0] - 1 and w[-1] <= LW_RANGE[1] + 1:
        return LW_POOLING
    if w[0] >= HW_RANGE[0] - 1 and w[-1] <= HW_RANGE[1] + 1:
        return HW_POOLING
    raise ValueError(
        f"no default pooling for axis [{w[0]}, {w[-1]}]; pass explicit cut points"
    )


def pool_features(s: SpectraSet, spec: PoolingSpec) -> np.ndarray:
    """Mean intensity over each sub-band, shape (N, n_features)."""
    groups = spec.assign(s.wavenumbers)
    feats = []
    for j in range(spec.n_features):
        cols = np.flatnonzero(groups == j)
        if cols.size == 0:
            raise ValueError(
                f"pooling sub-band {j} ({spec.labels(s.wavenumbers)[j]}) holds no grid points"
            )
        feats.append(s.matrix[:, cols].mean(axis=1))
    return np.column_stack(feats)


# --------------------------------------------------------------------------
# l2 distance classifier


@dataclass(frozen=True)
class L2DModel:
    h1: np.ndarray
    h2: np.ndarray
    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def fit_l2d(train: SpectraSet) -> tuple[np.ndarray, np.ndarray]:
    """Mean spectrum of the label-1 rows and of the label-0 rows."""
    X, y = train.matrix, train.labels
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("L2D needs spectra of both samples in the training set")
    return X[y == 1].mean(axis=0), X[y == 0].mean(axis=0)


def l2d_distances(X, h1, h2):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != h1.size:
        raise ValueError(f"spectrum length {X.shape[-1]} does not match model ({h1.size})")
    return ((X - h1) ** 2).sum(axis=-1), ((X - h2) ** 2).sum(axis=-1)


def l2d_score(x, model: L2DModel):
    """(1 - tau) d2 - tau d1; non-negative exactly when the spectrum is assigned label 1."""
    d1, d2 = l2d_distances(x, model.h1, model.h2)
    return (1 - model.tau) * d2 - model.tau * d1


def l2d_classify(x, model: L2DModel):
    d1, d2 = l2d_distances(x, model.h1, model.h2)
    out = model.tau * d1 <= (1 - model.tau) * d2
    return int(out) if np.ndim(out) == 0 else out.astype(np.int64)


# --------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PCABasis:
    """Leading eigenvectors of Y^T Y for the column-centred data Y.

    ``eigenvalues`` are those of Y^T Y (not divided by N-1); ``total`` is
    the sum over all p eigenvalues, i.e. the centred sum of squares.
    """

    column_means: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    total: float
    n_samples: int

    @property
    def m(self) -> int:
        return self.components.shape[1]

    @property
    def variance_proportion(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros(self.m)
        return self.eigenvalues / self.total

    @property
    def std(self) -> np.ndarray:
        """Standard deviation of each principal component (ddof=1)."""
        return np.sqrt(self.eigenvalues / max(self.n_samples - 1, 1))

    def summary(self) -> dict:
        prop = self.variance_proportion
        return {
            "std": self.std.tolist(),
            "proportion": prop.tolist(),
            "cumulative": np.cumsum(prop).tolist(),
        }


def _eig_desc(Y):
    G = Y.T @ Y
    w, V = np.linalg.eigh(G)
    w, V = w[::-1], V[:, ::-1]
    tol = max(G.shape) * np.finfo(float).eps * max(w[0], 0.0)
    w = np.where(w > tol, w, 0.0)
    return w, V


def fit_pca(s: SpectraSet | np.ndarray, m: int = 5) -> PCABasis:
    """Principal directions of the column-centred spectra.

    Each loading vector is sign-normalised so that its entry of largest
    magnitude is positive.

    Raises
    ------
    ValueError
        If ``m`` exceeds the numerical rank of the centred data.
    """
    X = s.matrix if isinstance(s, SpectraSet) else np.asarray(s, dtype=np.float64)
    n, p = X.shape
    if m < 1 or n <= m:
        raise ValueError(f"PCA needs N > m >= 1 (N={n}, m={m})")
    mu = X.mean(axis=0)
    Y = X - mu
    w, V = _eig_desc(Y)
    rank = int(np.count_nonzero(w))
    if m > rank:
        raise ValueError(f"requested {m} components but the centred data has rank {rank}")
    comps = V[:, :m].copy()
    lead = np.abs(comps).argmax(axis=0)
    signs = np.sign(comps[lead, np.arange(m)])
    comps *= signs
    return PCABasis(mu, comps, w[:m].copy(), float(w.sum()), n)


def project(s: SpectraSet | np.ndarray, basis: PCABasis) -> np.ndarray:
    X = s.matrix if isinstance(s, SpectraSet) else np.asarray(s, dtype=np.float64)
    if X.shape[-1] != basis.column_means.size:
        raise ValueError(
            f"spectrum length {X.shape[-1]} does not match PCA basis ({basis.column_means.size})"
        )
    return (X - basis.column_means) @ basis.components


def reconstruct(Z: np.ndarray, basis: PCABasis) -> np.ndarray:
    return Z @ basis.components.T + basis.column_means


# --------------------------------------------------------------------------
# classifiers usable by cross_validate


@dataclass(frozen=True)
class LRAModel:
    logistic: LogisticModel
    kind = "lra"

    def score(self, s: SpectraSet) -> np.ndarray:
        return self.logistic.score(lra_features(s))

    def predict(self, s: SpectraSet) -> np.ndarray:
        return (self.score(s) >= 0.5).astype(np.int64)

    def to_dict(self):
        return {"logistic": self.logistic.to_dict()}


@dataclass(frozen=True)
class LRA:
    shrinkage: float = 1.0
    name = "lra"

    def fit(self, train: SpectraSet, seed=None) -> LRAModel:
        return LRAModel(fit_logistic(lra_features(train), train.labels, self.shrinkage))


@dataclass(frozen=True)
class L2DFitted:
    model: L2DModel
    kind = "l2d"

    def score(self, s: SpectraSet) -> np.ndarray:
        return l2d_score(s.matrix, self.model)

    def predict(self, s: SpectraSet) -> np.ndarray:
        return l2d_classify(s.matrix, self.model)

    def to_dict(self):
        return {"h1": self.model.h1.tolist(), "h2": self.model.h2.tolist(), "tau": self.model.tau}


@dataclass(frozen=True)
class L2D:
    """tau tuned on the training data by inner k-fold accuracy over a 0.01 grid."""

    inner_folds: int = 10
    tau: float | None = None
    name = "l2d"

    def tune(self, train: SpectraSet, seed=None) -> float:
        y = train.labels
        folds = _inner_folds(y, self.inner_folds, seed)
        if folds is None:
            return 0.5
        acc = np.zeros_like(TUNING_GRID)
        for f in range(folds.max() + 1):
            tr, va = folds != f, folds == f
            h1, h2 = fit_l2d(train.subset(np.flatnonzero(tr)))
            d1, d2 = l2d_distances(train.matrix[va], h1, h2)
            pred = TUNING_GRID[:, None] * d1 <= (1 - TUNING_GRID[:, None]) * d2
            acc += (pred == (y[va] == 1)).mean(axis=1)
        return grid_search(acc / (folds.max() + 1))

    def fit(self, train: SpectraSet, seed=None) -> L2DFitted:
        tau = self.tau if self.tau is not None else self.tune(train, seed)
        h1, h2 = fit_l2d(train)
        return L2DFitted(L2DModel(h1, h2, tau))


@dataclass(frozen=True)
class LRPModel:
    pooling: PoolingSpec
    logistic: LogisticModel
    kind = "lrp"

    def features(self, s: SpectraSet) -> np.ndarray:
        return pool_features(s, self.pooling)

    def score(self, s: SpectraSet) -> np.ndarray:
        return self.logistic.score(self.features(s))

    def predict(self, s: SpectraSet) -> np.ndarray:
        return (self.score(s) >= 0.5).astype(np.int64)

    def to_dict(self):
        return {"cuts": list(self.pooling.cuts), "logistic": self.logistic.to_dict()}


@dataclass(frozen=True)
class LRP:
    pooling: PoolingSpec | None = None
    shrinkage: float = 1.0
    name = "lrp"

    def fit(self, train: SpectraSet, seed=None) -> LRPModel:
        spec = self.pooling if self.pooling is not None else default_pooling(train.axis)
        return LRPModel(spec, fit_logistic(pool_features(train, spec), train.labels, self.shrinkage))


@dataclass(frozen=True)
class PCAModel:
    basis: PCABasis
    logistic: LogisticModel
    lam: float = 0.5
    kind = "pca"

    def score(self, s: SpectraSet) -> np.ndarray:
        return self.logistic.score(project(s, self.basis))

    def predict(self, s: SpectraSet) -> np.ndarray:
        return classify_with_threshold(self.logistic, np.atleast_2d(project(s, self.basis)), self.lam)

    def to_dict(self):
        b = self.basis
        return {
            "column_means": b.column_means.tolist(),
            "components": b.components.tolist(),
            "eigenvalues": b.eigenvalues.tolist(),
            "total": b.total,
            "n_samples": b.n_samples,
            "logistic": self.logistic.to_dict(),
            "lambda": self.lam,
        }


@dataclass(frozen=True)
class PCALR:
    """Logistic regression on the first ``m`` principal components.

    The decision threshold lambda is tuned on the training data by inner
    k-fold accuracy; it does not affect the ROC score.
    """

    m: int = 5
    shrinkage: float = 1.0
    inner_folds: int = 10
    lam: float | None = None
    name = "pca"

    def _fit_once(self, train: SpectraSet):
        basis = fit_pca(train, self.m)
        return basis, fit_logistic(project(train, basis), train.labels, self.shrinkage)

    def tune(self, train: SpectraSet, seed=None) -> float:
        y = train.labels
        folds = _inner_folds(y, self.inner_folds, seed)
        if folds is None:
            return 0.5
        acc = np.zeros_like(TUNING_GRID)
        for f in range(folds.max() + 1):
            tr, va = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
            basis, lr = self._fit_once(train.subset(tr))
            prob = lr.score(project(train.matrix[va], basis))
            pred = prob[None, :] >= TUNING_GRID[:, None]
            acc += (pred == (y[va] == 1)).mean(axis=1)
        return grid_search(acc / (folds.max() + 1))

    def fit(self, train: SpectraSet, seed=None) -> PCAModel:
        lam = self.lam if self.lam is not None else self.tune(train, seed)
        basis, lr = self._fit_once(train)
        return PCAModel(basis, lr, lam)
