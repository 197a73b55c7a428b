"""Synthetic Raman-like spectra with controllable class differences.

Each spectrum is::

    scale * (baseline + sum_k amp_k * (1 + jitter_k * e_k) * shape_k(w)) + noise

with ``scale ~ 1 + scale_jitter * N(0, 1)``, ``e_k ~ N(0, 1)`` and i.i.d.
Gaussian noise.  The multiplicative scale dominates the pointwise variance,
as in measured SERS maps where the first principal component is mostly an
intensity factor.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .spectra import REGIONS, SpectraSet, WavenumberAxis, reference_axis

__all__ = [
    "PeakSpec",
    "ClassRecipe",
    "peak_profile",
    "expected_spectrum",
    "generate",
    "preset",
    "PRESETS",
    "PRESET_NAMES",
]

_FWHM_TO_SIGMA = 1.0 / np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class PeakSpec:
    """One band; ``width`` is the half width at half maximum in cm^-1.

    ``jitter`` overrides the recipe's relative amplitude jitter for this band.
    """

    center: float
    width: float
    amplitude: float
    shape: str = "lorentzian"
    jitter: float | None = None

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("peak width must be positive")
        if self.amplitude < 0:
            raise ValueError("peak amplitude must be non-negative")
        if self.shape not in ("lorentzian", "gaussian"):
            raise ValueError(f"unknown peak shape {self.shape!r}")


@dataclass(frozen=True)
class ClassRecipe:
    peaks: tuple = ()
    baseline: float = 1.0
    noise_sigma: float = 0.005
    amplitude_jitter: float = 0.02
    scale_jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "peaks", tuple(self.peaks))
        if self.noise_sigma < 0 or self.amplitude_jitter < 0 or self.scale_jitter < 0:
            raise ValueError("noise and jitter levels must be non-negative")

    def with_amplitude(self, center: float, amplitude: float) -> "ClassRecipe":
        """Copy with the amplitude of the band at ``center`` replaced."""
        peaks = [replace(p, amplitude=amplitude) if p.center == center else p for p in self.peaks]
        if all(p.center != center for p in self.peaks):
            raise KeyError(f"no band at {center}")
        return replace(self, peaks=tuple(peaks))


def peak_profile(peak: PeakSpec, w: np.ndarray) -> np.ndarray:
    """Unit-height line shape evaluated on wavenumbers ``w``."""
    x = (np.asarray(w, dtype=np.float64) - peak.center) / peak.width
    if peak.shape == "lorentzian":
        return 1.0 / (1.0 + x * x)
    return np.exp(-0.5 * (x / _FWHM_TO_SIGMA) ** 2)


def _axis_values(axis):
    if axis is None:
        axis = reference_axis()
    return axis if isinstance(axis, WavenumberAxis) else WavenumberAxis(axis)


def expected_spectrum(recipe: ClassRecipe, axis=None) -> np.ndarray:
    """Noise-free, jitter-free spectrum (also the mean of generated spectra)."""
    w = _axis_values(axis).values
    out = np.full(w.size, recipe.baseline, dtype=np.float64)
    for p in recipe.peaks:
        out += p.amplitude * peak_profile(p, w)
    return out


def _sample(recipe: ClassRecipe, w: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    scale = 1.0 + recipe.scale_jitter * rng.standard_normal(n)
    X = np.full((n, w.size), recipe.baseline, dtype=np.float64)
    if recipe.peaks:
        jit = np.array([recipe.amplitude_jitter if p.jitter is None else p.jitter
                        for p in recipe.peaks])
        amps = np.array([p.amplitude for p in recipe.peaks])
        draws = amps * (1.0 + jit * rng.standard_normal((n, len(recipe.peaks))))
        shapes = np.stack([peak_profile(p, w) for p in recipe.peaks])
        X += draws @ shapes
    X *= scale[:, None]
    X += recipe.noise_sigma * rng.standard_normal(X.shape)
    return X


def generate(recipe1: ClassRecipe, recipe2: ClassRecipe, n_per_class: int, axis=None,
             seed=0, names=("first", "second")) -> SpectraSet:
    """Draw ``n_per_class`` spectra per recipe; rows of ``recipe1`` come first with label 1."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    ax = _axis_values(axis)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    r1, r2 = (np.random.default_rng(s) for s in ss.spawn(2))
    X = np.vstack([_sample(recipe1, ax.values, n_per_class, r1),
                   _sample(recipe2, ax.values, n_per_class, r2)])
    y = np.r_[np.ones(n_per_class, dtype=np.int64), np.zeros(n_per_class, dtype=np.int64)]
    return SpectraSet(ax, X, y, tuple(names))


# --------------------------------------------------------------------------
# presets

SCALE_JITTER = 0.03
GAIN = 10.0  # counts per unit of the line shapes below

BASE_PEAKS = (
    # decaying low-wavenumber background with strongly varying intensity
    PeakSpec(125.0, 60.0, 3.0 * GAIN, "lorentzian", jitter=0.3),
    PeakSpec(234.0, 25.0, 1.5 * GAIN),                      # Ag-N stretching
    PeakSpec(280.0, 50.0, 0.8 * GAIN, "gaussian"),
    PeakSpec(514.0, 12.0, 1.2 * GAIN, "gaussian"),          # Si from the nanowires
    PeakSpec(730.0, 15.0, 0.6 * GAIN),
    PeakSpec(1090.0, 20.0, 0.5 * GAIN),
    PeakSpec(2934.0, 45.0, 3.0 * GAIN, "gaussian"),         # CH2/CH3 stretching
    PeakSpec(3300.0, 60.0, 0.5 * GAIN, "gaussian"),         # shoulder above 3200
)

BASE = ClassRecipe(BASE_PEAKS, baseline=1.0 * GAIN, noise_sigma=0.005 * GAIN,
                   amplitude_jitter=0.02, scale_jitter=SCALE_JITTER)

PRESETS = ("null", "colon_like", "melanoma_like", "subtype_like")

PRESET_NAMES = {
    "null": ("null_a", "null_b"),
    "colon_like": ("colon_hi_methyl", "colon_lo_methyl"),
    "melanoma_like": ("melanoma_a", "melanoma_b"),
    "subtype_like": ("subtype_a", "subtype_b"),
}


def _zero_sum_pair(recipe: ClassRecipe, up: float, down: float, delta: float) -> ClassRecipe:
    """Raise band ``up`` by ``delta`` and lower band ``down`` so that the LW mean is unchanged."""
    w = reference_axis().values
    w = w[REGIONS["LW"].mask(w)]
    pu = next(p for p in recipe.peaks if p.center == up)
    pd = next(p for p in recipe.peaks if p.center == down)
    ratio = peak_profile(pu, w).sum() / peak_profile(pd, w).sum()
    return recipe.with_amplitude(up, pu.amplitude + delta).with_amplitude(
        down, pd.amplitude - delta * ratio
    )


def _with_jitter(recipe: ClassRecipe, center: float, jitter: float) -> ClassRecipe:
    peaks = tuple(replace(p, jitter=jitter) if p.center == center else p for p in recipe.peaks)
    return replace(recipe, peaks=peaks)


def preset(name: str) -> tuple[ClassRecipe, ClassRecipe]:
    """Recipe pairs (first sample, second sample).

    Intensities are on a counts-like scale (baseline 10).

    ``null``
        identical recipes.
    ``colon_like``
        the first sample has a 50% stronger 2934 cm^-1 CH band; the recipes
        differ only inside 2700-3200 cm^-1.
    ``melanoma_like``
        the first sample has a stronger 514 cm^-1 Si band and a stronger
        3300 cm^-1 shoulder.
    ``subtype_like``
        LW: the 514 band grows by 25% while the 280 band shrinks by the same
        LW area (no change of the LW mean); the 280 band also varies by 50%
        from spectrum to spectrum in both samples.  HW: as ``colon_like``.
    """
    if name == "null":
        return BASE, BASE
    if name == "colon_like":
        return BASE.with_amplitude(2934.0, 4.5 * GAIN), BASE
    if name == "melanoma_like":
        first = BASE.with_amplitude(514.0, 1.5 * GAIN).with_amplitude(3300.0, 0.8 * GAIN)
        return first, BASE
    if name == "subtype_like":
        base = _with_jitter(BASE, 280.0, 0.5)
        first = _zero_sum_pair(base, 514.0, 280.0, 0.3 * GAIN).with_amplitude(2934.0, 4.5 * GAIN)
        return first, base
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
