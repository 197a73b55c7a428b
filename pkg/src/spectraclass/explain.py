"""Permutation importance for pooled-band logistic models and saliency maps for the CNN."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .cnn import CNNModel, input_gradient
from .evaluation import roc_auc
from .spectra import SpectraSet, WavenumberAxis

__all__ = [
    "ImportanceReport",
    "permutation_importance",
    "combine_importance",
    "joint_permutation_aucs",
    "SaliencyMap",
    "ecdf_values",
    "saliency_from_gradients",
    "saliency_map",
    "gnuplot_script",
]

Z95 = 1.959963984540054


@dataclass
class ImportanceReport:
    """Per-feature AUC drops under column permutation.

    ``drops`` has shape (F, n_perm): baseline AUC minus the AUC after each
    permutation of that column.  ``half_width`` is the normal-approximation
    95% half-width of the mean drop, 1.96 s / sqrt(n).
    """

    labels: list
    baseline_auc: float
    drops: np.ndarray

    @property
    def n_permutations(self) -> int:
        return self.drops.shape[1]

    @property
    def importance(self) -> np.ndarray:
        return self.drops.mean(axis=1)

    @property
    def spread(self) -> np.ndarray:
        return self.drops.std(axis=1, ddof=1)

    @property
    def half_width(self) -> np.ndarray:
        return Z95 * self.spread / np.sqrt(self.n_permutations)

    def top(self) -> str:
        return self.labels[int(np.argmax(self.importance))]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("feature,importance,half_width,n_permutations\n")
            for lab, imp, hw in zip(self.labels, self.importance, self.half_width):
                fh.write(f"{lab},{float(imp)!r},{float(hw)!r},{self.n_permutations}\n")

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "baseline_auc": self.baseline_auc,
            "n_permutations": self.n_permutations,
            "importance": self.importance.tolist(),
            "half_width": self.half_width.tolist(),
        }


def permutation_importance(model, features, labels, n_perm: int = 30, seed=0,
                           names=None) -> ImportanceReport:
    """Importance of each feature column as the mean AUC lost when it is shuffled.

    Parameters
    ----------
    model : object with ``decision_function(features)``
        Typically a fitted :class:`~spectraclass.linear.LogisticModel`.
    features : (N, F) array
    labels : (N,) array of 0/1
    n_perm : int
        Shuffles per column.
    seed : int or SeedSequence
    names : list of str, optional
        Column labels (default ``f0``, ``f1``, ...).
    """
    Z = np.array(features, dtype=np.float64, ndmin=2)
    if Z.shape[1] == 0:
        raise ValueError("no features to permute")
    if n_perm < 2:
        raise ValueError("n_perm must be >= 2")
    labels = np.asarray(labels)
    names = list(names) if names is not None else [f"f{j}" for j in range(Z.shape[1])]
    if len(names) != Z.shape[1]:
        raise ValueError("one name per feature column is required")
    base, _ = roc_auc(model.decision_function(Z), labels)
    rng = np.random.default_rng(seed)
    drops = np.empty((Z.shape[1], n_perm))
    for j in range(Z.shape[1]):
        Zp = Z.copy()
        for r in range(n_perm):
            Zp[:, j] = Z[rng.permutation(Z.shape[0]), j]
            drops[j, r] = base - roc_auc(model.decision_function(Zp), labels)[0]
    return ImportanceReport(names, base, drops)


def combine_importance(reports) -> ImportanceReport:
    """Pool the permutation drops of several reports (e.g. one per test fold)."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to combine")
    labels = reports[0].labels
    if any(r.labels != labels for r in reports):
        raise ValueError("reports describe different features")
    base = float(np.mean([r.baseline_auc for r in reports]))
    return ImportanceReport(labels, base, np.hstack([r.drops for r in reports]))


def joint_permutation_aucs(model, features, labels, n_perm: int = 30, seed=0) -> np.ndarray:
    """AUCs after shuffling all columns together (the label-free null)."""
    Z = np.array(features, dtype=np.float64, ndmin=2)
    rng = np.random.default_rng(seed)
    return np.array([roc_auc(model.decision_function(Z[rng.permutation(Z.shape[0])]), labels)[0]
                     for _ in range(n_perm)])


# --------------------------------------------------------------------------
# saliency


def ecdf_values(values: np.ndarray) -> np.ndarray:
    """Right-continuous empirical CDF of ``values`` at the values themselves.

    Ties get their average rank, so the result is rank / M with M the count.
    """
    v = np.asarray(values, dtype=np.float64)
    return rankdata(v, axis=None).reshape(v.shape) / v.size


@dataclass
class SaliencyMap:
    """Mean ECDF-mapped score derivative per wavenumber with a 95% band."""

    axis: WavenumberAxis
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_spectra: int
    ecdf: str = "pooled"

    def band_contrast(self, lo: float, hi: float) -> tuple[float, float]:
        """Mean saliency inside [lo, hi] and outside it."""
        w = self.axis.values
        inside = (w >= lo) & (w <= hi)
        if not inside.any() or inside.all():
            raise ValueError(f"band [{lo}, {hi}] must split the axis")
        return float(self.mean[inside].mean()), float(self.mean[~inside].mean())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("wavenumber,mean,lower,upper\n")
            for row in zip(self.axis.values, self.mean, self.lower, self.upper):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    def to_dict(self) -> dict:
        return {"n_spectra": self.n_spectra, "ecdf": self.ecdf, "p": int(self.mean.size),
                "wavenumber_range": [float(self.axis.values[0]), float(self.axis.values[-1])]}


def saliency_from_gradients(grads: np.ndarray, axis, ecdf: str = "pooled") -> SaliencyMap:
    """Summarise (N, p) score derivatives as a saliency map.

    ``ecdf="pooled"`` maps every derivative through the ECDF of all N*p
    values; ``"per_wavenumber"`` uses the ECDF of each column separately.
    The band is mean +/- 1.96 std / sqrt(N), clipped to [0, 1].
    """
    G = np.array(grads, dtype=np.float64, ndmin=2)
    axis = axis if isinstance(axis, WavenumberAxis) else WavenumberAxis(axis)
    if G.shape[1] != axis.values.size:
        raise ValueError("gradient length differs from the axis length")
    if ecdf == "pooled":
        E = ecdf_values(G)
    elif ecdf == "per_wavenumber":
        E = rankdata(G, axis=0) / G.shape[0]
    else:
        raise ValueError(f"ecdf must be 'pooled' or 'per_wavenumber', got {ecdf!r}")
    n = G.shape[0]
    mean = E.mean(axis=0)
    half = Z95 * E.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return SaliencyMap(axis, mean, np.clip(mean - half, 0, 1), np.clip(mean + half, 0, 1), n, ecdf)


def saliency_map(model: CNNModel, test: SpectraSet, ecdf: str = "pooled") -> SaliencyMap:
    """Vanilla-gradient saliency of ``model`` on the spectra of ``test``."""
    if test.n == 0:
        raise ValueError("empty test set")
    return saliency_from_gradients(input_gradient(model, test.matrix), test.axis, ecdf)


def gnuplot_script(csv_name: str, kind: str = "saliency") -> str:
    """Plot commands for a CSV written by ``to_csv``."""
    if kind == "saliency":
        return (
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set xlabel 'Raman shift (cm^-1)'\nset ylabel 'saliency'\nset yrange [0:1]\n"
            f"plot '{csv_name}' using 1:3:4 with filledcurves title '95% band', "
            f"'' using 1:2 with lines title 'mean'\n"
        )
    if kind == "importance":
        return (
            "set datafile separator ','\n"
            "set style data histogram\nset style histogram errorbars\nset style fill solid 0.5\n"
            "set ylabel 'importance (AUC drop)'\n"
            f"plot '{csv_name}' using 2:3:xtic(1) notitle\n"
        )
    raise ValueError(f"unknown plot kind {kind!r}")


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
