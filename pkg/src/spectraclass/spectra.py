"""Spectra containers, wavenumber regions and CSV input/output.

A spectra CSV file holds the wavenumber axis on its first row and one
spectrum per subsequent row, comma separated.  Labels are not stored in the
file; they are attached when loading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "IngestionError",
    "WavenumberAxis",
    "SpectraSet",
    "RegionSpec",
    "REGIONS",
    "reference_axis",
    "load_spectra",
    "save_spectra",
    "merge",
    "extract_region",
    "split_by_label",
]

LW_RANGE = (125.25, 549.27)
HW_RANGE = (2303.16, 3399.83)
LW_POINTS = 221
HW_POINTS = 570


class IngestionError(ValueError):
    """Raised when a spectra file cannot be turned into a valid SpectraSet."""


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class WavenumberAxis:
    """Strictly increasing Raman shift grid in cm^-1."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("wavenumber axis needs at least 2 points")
        if not np.all(np.isfinite(v)):
            raise ValueError("wavenumber axis contains non-finite values")
        bad = np.flatnonzero(np.diff(v) <= 0)
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"wavenumber axis is not strictly increasing at column {i + 1} "
                f"({float(v[i])!r} -> {float(v[i + 1])!r})"
            )
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, WavenumberAxis):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class SpectraSet:
    """N x p intensity matrix on a shared axis with binary labels.

    Label 1 marks spectra of the first sample, label 0 the second.
    Arrays are copied and made read-only on construction.
    """

    axis: WavenumberAxis
    matrix: np.ndarray
    labels: np.ndarray
    sample_names: tuple[str, str] = ("first", "second")

    def __post_init__(self):
        if not isinstance(self.axis, WavenumberAxis):
            object.__setattr__(self, "axis", WavenumberAxis(self.axis))
        X = _frozen(self.matrix)
        if X.ndim == 1:
            X = _frozen(X.reshape(1, -1) if X.size else X.reshape(0, len(self.axis)))
        if X.ndim != 2 or X.shape[1] != len(self.axis):
            raise ValueError(
                f"matrix shape {X.shape} does not match axis length {len(self.axis)}"
            )
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise ValueError(f"non-finite intensity at row {r}, column {c}")
        y = np.asarray(self.labels)
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels length {y.shape} does not match N={X.shape[0]}")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "matrix", X)
        object.__setattr__(self, "labels", _frozen(y, dtype=np.int64))
        object.__setattr__(self, "sample_names", tuple(self.sample_names))
        if len(self.sample_names) != 2:
            raise ValueError("sample_names must hold exactly two names")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.axis.values

    def subset(self, rows) -> "SpectraSet":
        rows = np.asarray(rows)
        return SpectraSet(self.axis, self.matrix[rows], self.labels[rows], self.sample_names)

    def with_matrix(self, matrix) -> "SpectraSet":
        return SpectraSet(self.axis, matrix, self.labels, self.sample_names)


@dataclass(frozen=True)
class RegionSpec:
    """Named wavenumber window; both bounds are inclusive."""

    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"region {self.name!r}: lo={self.lo} must be < hi={self.hi}")

    def mask(self, wavenumbers: np.ndarray) -> np.ndarray:
        return (wavenumbers >= self.lo) & (wavenumbers <= self.hi)


REGIONS = {
    "LW": RegionSpec("LW", *LW_RANGE),
    "HW": RegionSpec("HW", *HW_RANGE),
}


def reference_axis() -> WavenumberAxis:
    """Uniform-step stand-in for the instrument grid.

    The LW and HW windows are sampled with the same step (about
    1.9274 cm^-1) so that they hold 221 and 570 points.  The two grids are
    joined by a continuation of the LW grid, giving 1700 points in total.
    """
    lw = np.linspace(*LW_RANGE, LW_POINTS)
    hw = np.linspace(*HW_RANGE, HW_POINTS)
    step = lw[1] - lw[0]
    n_mid = int(np.floor((HW_RANGE[0] - LW_RANGE[1]) / step - 0.5))
    mid = LW_RANGE[1] + step * np.arange(1, n_mid + 1)
    values = np.round(np.concatenate([lw, mid, hw]), 2)
    return WavenumberAxis(values)


def merge(a: SpectraSet, b: SpectraSet) -> SpectraSet:
    """Stack the first sample ``a`` (label 1) on top of the second ``b`` (label 0)."""
    if a.axis != b.axis:
        raise ValueError("cannot merge spectra sets with different wavenumber axes")
    if a.n and not np.all(a.labels == 1):
        raise ValueError("first set must carry label 1 only")
    if b.n and not np.all(b.labels == 0):
        raise ValueError("second set must carry label 0 only")
    return SpectraSet(
        a.axis,
        np.vstack([a.matrix, b.matrix]),
        np.concatenate([a.labels, b.labels]),
        (a.sample_names[0], b.sample_names[0]),
    )


def split_by_label(s: SpectraSet) -> tuple[SpectraSet, SpectraSet]:
    """Inverse of :func:`merge`: returns (label-1 rows, label-0 rows)."""
    return s.subset(np.flatnonzero(s.labels == 1)), s.subset(np.flatnonzero(s.labels == 0))


def extract_region(s: SpectraSet, region: RegionSpec) -> SpectraSet:
    cols = np.flatnonzero(region.mask(s.wavenumbers))
    if cols.size == 0:
        raise ValueError(
            f"region {region.name!r} [{region.lo}, {region.hi}] selects no points of the "
            f"axis [{s.wavenumbers[0]}, {s.wavenumbers[-1]}]"
        )
    if cols.size == 1:
        raise ValueError(f"region {region.name!r} selects a single point; need at least 2")
    return SpectraSet(
        WavenumberAxis(s.wavenumbers[cols]), s.matrix[:, cols], s.labels, s.sample_names
    )


def _parse_row(line: str, lineno: int, path) -> list[float]:
    out = []
    for col, tok in enumerate(line.split(","), start=1):
        try:
            out.append(float(tok))
        except ValueError:
            raise IngestionError(
                f"{path}: row {lineno}, column {col}: cannot parse {tok.strip()!r} as a number"
            ) from None
    return out


def load_spectra(path, label: int, name: str | None = None) -> SpectraSet:
    """Read a spectra CSV file and label every row with ``label``.

    Parameters
    ----------
    path : str or Path
        CSV file; first row is the wavenumber axis.
    label : {0, 1}
        Label attached to all spectra of the file.
    name : str, optional
        Display name of the sample, defaults to the file stem.

    Raises
    ------
    IngestionError
        On unparsable values, ragged rows, a non-increasing axis or
        non-finite intensities.  Row numbers are 1-based file lines.
    """
    path = Path(path)
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise IngestionError(f"{path}: empty file")
    axis_vals = _parse_row(lines[0], 1, path)
    try:
        axis = WavenumberAxis(axis_vals)
    except ValueError as exc:
        raise IngestionError(f"{path}: row 1 (axis): {exc}") from None
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        vals = _parse_row(line, i, path)
        if len(vals) != len(axis):
            raise IngestionError(
                f"{path}: row {i} has {len(vals)} values, axis has {len(axis)} (ragged row)"
            )
        rows.append(vals)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(axis))
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise IngestionError(f"{path}: row {r + 2}, column {c}: non-finite value {X[r, c]!r}")
    name = name if name is not None else path.stem
    return SpectraSet(axis, X, np.full(len(rows), label), (name, name))


def save_spectra(path, s: SpectraSet, rows=None) -> None:
    """Write ``s`` (optionally only ``rows``) in the spectra CSV format.

    Values are written with the shortest repr that round-trips, so loading
    the file back gives bit-identical arrays.
    """
    X = s.matrix if rows is None else s.matrix[np.asarray(rows)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(repr(float(v)) for v in s.wavenumbers) + "\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
