"""Principal components of a synthetic LW region.

Measured SERS maps vary mostly in overall intensity, so the first
component carries most of the variance.  The synthetic generator mimics
this with a multiplicative scale factor per spectrum.
"""

import numpy as np

from spectraclass.linear import fit_pca, project, reconstruct
from spectraclass.preprocess import preprocess
from spectraclass.spectra import REGIONS, extract_region
from spectraclass.synth import generate, preset

first, second = preset("melanoma_like")
clean, _ = preprocess(generate(first, second, 200, seed=1))
lw = extract_region(clean, REGIONS["LW"])

basis = fit_pca(lw, m=5)
summary = basis.summary()
print("component  std        proportion  cumulative")
for i in range(basis.m):
    print(f"PC{i + 1:<8} {summary['std'][i]:<10.4g} {summary['proportion'][i]:<11.4f} "
          f"{summary['cumulative'][i]:.4f}")

# how much of each spectrum survives a 5-component reconstruction
back = reconstruct(project(lw.matrix, basis), basis)
rel = np.linalg.norm(back - lw.matrix, axis=1) / np.linalg.norm(lw.matrix, axis=1)
print(f"\nmedian relative reconstruction error: {np.median(rel):.2e}")
