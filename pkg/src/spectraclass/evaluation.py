"""Fold plans, ROC curves and AUC, k-fold cross-validation and AUC tables."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np
from scipy.stats import rankdata

from .spectra import SpectraSet

__all__ = [
    "FoldPlan",
    "make_folds",
    "roc_curve",
    "roc_auc",
    "trapezoid_auc",
    "EvalReport",
    "cross_validate",
    "SummaryTable",
    "summary_table",
    "format_auc",
    "METHOD_ORDER",
]

METHOD_ORDER = ("lra", "l2d", "lrp", "pca", "cnn")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: object = None

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def make_folds(n: int, k: int = 10, seed=0, labels=None) -> FoldPlan:
    """Shuffle indices with ``seed`` and deal them round-robin into ``k`` folds.

    With ``labels`` the deal is done class by class (label 1 first), the
    round-robin counter carrying over between classes, so that fold sizes
    and per-class counts both differ by at most one.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} observations into {k} folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    if labels is None:
        groups = [np.arange(n)]
    else:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError("labels length must equal n")
        groups = [np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)]
        groups.append(np.flatnonzero((labels != 1) & (labels != 0)))
    start = 0
    for idx in groups:
        perm = rng.permutation(idx)
        assignments[perm] = (start + np.arange(perm.size)) % k
        start = (start + perm.size) % k
    return FoldPlan(k, assignments, seed)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(0 if seed is None else seed)


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    if not np.all(pos | (labels == 0)):
        raise ValueError("labels must be 0 or 1")
    if pos.all() or not pos.any():
        raise ValueError("ROC needs both classes among the labels")
    return scores, pos


def roc_curve(scores, labels) -> np.ndarray:
    """Threshold-swept ROC as an (M, 2) array of (FPR, TPR).

    Thresholds run over the distinct scores from high to low; tied scores
    move the curve diagonally.  The curve starts at (0, 0) and ends at (1, 1).
    """
    scores, pos = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(p)[last_of_run]
    fp = np.cumsum(~p)[last_of_run]
    tpr = np.r_[0, tp] / pos.sum()
    fpr = np.r_[0, fp] / (~pos).sum()
    return np.column_stack([fpr, tpr])


def trapezoid_auc(roc: np.ndarray) -> float:
    """Trapezoidal area under an ROC curve given as (FPR, TPR) points."""
    fpr, tpr = roc[:, 0], roc[:, 1]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2)


def roc_auc(scores, labels) -> tuple[float, np.ndarray]:
    """Area under the ROC curve and the curve itself.

    The area is the Mann-Whitney statistic: the fraction of (positive,
    negative) pairs where the positive scores higher, ties counting 1/2.
    """
    scores, pos = _check_binary(scores, labels)
    n1, n0 = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(scores)  # average ranks for ties
    # twice the U statistic is an integer
    twice_u = int(round(2 * ranks[pos].sum())) - n1 * (n1 + 1)
    auc = twice_u / (2 * n1 * n0)
    return auc, roc_curve(scores, pos.astype(int))


@dataclass
class EvalReport:
    method: str
    region: str
    per_fold_auc: np.ndarray
    roc_points: list
    per_fold_accuracy: np.ndarray | None = None
    sample_names: tuple = ("first", "second")
    fold_params: list = field(default_factory=list)
    seed: object = None

    @property
    def k(self) -> int:
        return len(self.per_fold_auc)

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.per_fold_auc))

    @property
    def sem(self) -> float:
        if self.k < 2:
            return 0.0
        return float(np.std(self.per_fold_auc, ddof=1) / np.sqrt(self.k))

    @property
    def comparison(self) -> str:
        return f"{self.sample_names[0]} vs. {self.sample_names[1]}"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "region": self.region,
            "comparison": self.comparison,
            "sample_names": list(self.sample_names),
            "k": self.k,
            "seed": self.seed,
            "per_fold_auc": [float(a) for a in self.per_fold_auc],
            "mean_auc": self.mean_auc,
            "sem": self.sem,
            "per_fold_accuracy": None
            if self.per_fold_accuracy is None
            else [float(a) for a in self.per_fold_accuracy],
            "fold_params": self.fold_params,
            "roc_points": [np.asarray(r).tolist() for r in self.roc_points],
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def roc_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("fold,fpr,tpr\n")
            for f, pts in enumerate(self.roc_points):
                for fpr, tpr in pts:
                    fh.write(f"{f},{float(fpr)!r},{float(tpr)!r}\n")


def _fold_params(model) -> dict:
    out = {}
    for attr in ("lam", "tau"):
        if hasattr(model, attr):
            out[attr] = float(getattr(model, attr))
    inner = getattr(model, "model", None)
    if inner is not None and hasattr(inner, "tau"):
        out["tau"] = float(inner.tau)
    trace = getattr(model, "trace", None)
    if trace:
        out["epochs"] = len(trace)
    return out


def _run_fold(method, data: SpectraSet, assignments: np.ndarray, fold: int, seed):
    tr, te = np.flatnonzero(assignments != fold), np.flatnonzero(assignments == fold)
    for part, idx in (("test", te), ("training", tr)):
        present = np.unique(data.labels[idx])
        if present.size < 2:
            raise ValueError(f"fold {fold}: {part} part lacks one class (labels {present.tolist()})")
    model = method.fit(data.subset(tr), seed=seed)
    test = data.subset(te)
    scores = model.score(test)
    auc, roc = roc_auc(scores, test.labels)
    acc = float(np.mean(model.predict(test) == test.labels))
    return auc, roc, acc, _fold_params(model)


def cross_validate(method, data: SpectraSet, plan: FoldPlan, region: str = "",
                   seed=None, n_jobs: int = 1) -> EvalReport:
    """k-fold cross-validated ROC-AUC of ``method`` on ``data``.

    ``method`` is any object with ``fit(train, seed) -> model`` where the
    model offers ``score(SpectraSet)`` and ``predict(SpectraSet)``.  Each
    fold receives its own child seed of ``seed`` (default: the plan's seed),
    so results do not depend on ``n_jobs``.
    """
    if plan.assignments.shape != (data.n,):
        raise ValueError(f"fold plan covers {plan.assignments.size} rows, data has {data.n}")
    root = seed if seed is not None else plan.seed
    fold_seeds = _seed_sequence(root).spawn(plan.k)
    args = [(method, data, plan.assignments, f, fold_seeds[f]) for f in range(plan.k)]
    if n_jobs == 1:
        results = [_run_fold(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_fold, *zip(*args)))
    aucs, rocs, accs, params = zip(*results)
    return EvalReport(
        method=getattr(method, "name", type(method).__name__),
        region=region,
        per_fold_auc=np.array(aucs),
        roc_points=list(rocs),
        per_fold_accuracy=np.array(accs),
        sample_names=data.sample_names,
        fold_params=list(params),
        seed=root if isinstance(root, (int, np.integer)) else None,
    )


def format_auc(value: float) -> str:
    """Two decimals, round-half-even on the shortest decimal repr ("0.995" -> "1.00")."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


@dataclass
class SummaryTable:
    rows: list
    columns: list
    cells: dict  # (row, column) -> mean AUC

    def value(self, row, column) -> float:
        return self.cells[(row, column)]

    def _grid(self):
        header = [""] + [c.upper() for c in self.columns]
        body = [
            [r] + [format_auc(self.cells[(r, c)]) if (r, c) in self.cells else "" for c in self.columns]
            for r in self.rows
        ]
        return header, body

    def to_csv(self) -> str:
        header, body = self._grid()
        header[0] = "comparison"
        return "\n".join(",".join(line) for line in [header, *body]) + "\n"

    def to_text(self) -> str:
        header, body = self._grid()
        widths = [max(len(line[j]) for line in [header, *body]) for j in range(len(header))]
        fmt = lambda line: " | ".join(
            cell.ljust(w) if j == 0 else cell.rjust(w) for j, (cell, w) in enumerate(zip(line, widths))
        )
        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt(header), rule, *map(fmt, body)]) + "\n"


def summary_table(reports) -> SummaryTable:
    """Mean AUC per (comparison, region) row and method column."""
    rows, methods, cells = [], set(), {}
    for rep in reports:
        row = f"{rep.comparison} {rep.region}".strip()
        if row not in rows:
            rows.append(row)
        methods.add(rep.method)
        cells[(row, rep.method)] = rep.mean_auc
    known = [m for m in METHOD_ORDER if m in methods]
    columns = known + sorted(methods - set(known))
    return SummaryTable(rows, columns, cells)
