from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectraclass.linear import lra_features
from spectraclass.spectra import REGIONS, extract_region, reference_axis
from spectraclass.synth import (
    BASE,
    PRESETS,
    ClassRecipe,
    PeakSpec,
    expected_spectrum,
    generate,
    peak_profile,
    preset,
)


def quiet(recipe):
    """The same bands with every source of randomness switched off."""
    peaks = tuple(replace(p, jitter=None) for p in recipe.peaks)
    return ClassRecipe(peaks, recipe.baseline, 0.0, 0.0, 0.0)


class TestRecipes:
    def test_peak_validation(self):
        with pytest.raises(ValueError):
            PeakSpec(500.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            PeakSpec(500.0, 5.0, -1.0)
        with pytest.raises(ValueError):
            PeakSpec(500.0, 5.0, 1.0, "voigt")
        with pytest.raises(ValueError):
            ClassRecipe(noise_sigma=-1.0)

    def test_profiles_half_height_at_width(self):
        for shape in ("lorentzian", "gaussian"):
            p = PeakSpec(1000.0, 20.0, 1.0, shape)
            assert peak_profile(p, [1000.0])[0] == 1.0
            assert peak_profile(p, [1020.0])[0] == pytest.approx(0.5, abs=1e-12)

    def test_expected_spectrum_formula(self):
        peaks = (PeakSpec(300.0, 10.0, 2.0), PeakSpec(2900.0, 30.0, 5.0, "gaussian"))
        r = ClassRecipe(peaks, baseline=1.5)
        w = reference_axis().values
        manual = 1.5 + 2.0 / (1 + ((w - 300) / 10) ** 2) \
            + 5.0 * np.exp(-np.log(2) * ((w - 2900) / 30) ** 2)
        assert np.allclose(expected_spectrum(r), manual, rtol=1e-12)

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            preset("lymphoma_like")

    def test_missing_band(self):
        with pytest.raises(KeyError):
            BASE.with_amplitude(999.0, 1.0)


class TestGenerate:
    def test_noise_free_rows_identical(self):
        s = generate(quiet(BASE), quiet(BASE.with_amplitude(2934.0, 1.0)), 4, seed=1)
        assert np.all(s.matrix[:4] == s.matrix[0]) and np.all(s.matrix[4:] == s.matrix[4])
        assert np.allclose(s.matrix[0], expected_spectrum(BASE))

    def test_labels_and_shape(self):
        s = generate(BASE, BASE, 3, seed=0)
        assert s.labels.tolist() == [1, 1, 1, 0, 0, 0] and s.p == 1700

    def test_bad_n(self):
        with pytest.raises(ValueError):
            generate(BASE, BASE, 0)

    def test_mean_approaches_expected(self):
        s = generate(BASE, BASE, 2000, seed=2)
        rel = np.abs(s.matrix[:2000].mean(0) - expected_spectrum(BASE)) / expected_spectrum(BASE)
        assert rel.max() < 0.01


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(PRESETS))
def test_generation_deterministic(seed, name):
    a, b = preset(name)
    s1, s2 = generate(a, b, 3, seed=seed), generate(a, b, 3, seed=seed)
    assert np.array_equal(s1.matrix, s2.matrix)


class TestPresets:
    def diff(self, name):
        a, b = preset(name)
        return reference_axis().values, expected_spectrum(a) - expected_spectrum(b)

    def test_null_identical(self):
        a, b = preset("null")
        assert a == b

    def test_colon_differs_only_in_ch_band(self):
        w, d = self.diff("colon_like")
        inside = (w >= 2700) & (w <= 3200)
        assert np.abs(d[~inside]).max() < 1e-6 * np.abs(d).max()
        assert np.abs(d[inside]).max() > 1.0

    def test_melanoma_lw_difference_in_si_band(self):
        w, d = self.diff("melanoma_like")
        lw = REGIONS["LW"].mask(w)
        band = lw & (w >= 480) & (w <= 548)
        assert np.abs(d[band]).sum() > 0.9 * np.abs(d[lw]).sum()

    def test_subtype_lw_mean_unchanged(self):
        a, b = preset("subtype_like")
        s = generate(quiet(a), quiet(b), 1, seed=0)
        lw = extract_region(s, REGIONS["LW"])
        f = lra_features(lw)[:, 0]
        assert f[0] == pytest.approx(f[1], rel=1e-12)
        assert np.abs(np.diff(lw.matrix, axis=0)).max() > 1.0
