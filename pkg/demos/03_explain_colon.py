"""Where does the signal sit?  Importance scores and a CNN saliency map.

On the colon-like preset the samples differ only in the CH stretching band
around 2934 cm^-1.  The pooled-band logistic model should rank the
2700-3200 sub-band first, and the CNN saliency should peak inside it.

Takes about half a minute (one CNN training run).
"""

import numpy as np

from spectraclass.cnn import CNN
from spectraclass.explain import permutation_importance, saliency_map
from spectraclass.linear import LRP
from spectraclass.preprocess import preprocess
from spectraclass.spectra import REGIONS, extract_region
from spectraclass.synth import generate, preset

first, second = preset("colon_like")
clean, _ = preprocess(generate(first, second, 200, seed=0))
hw = extract_region(clean, REGIONS["HW"])

# hold out a quarter of each sample for the explanations
rng = np.random.default_rng(0)
test_idx = np.sort(np.concatenate([
    rng.permutation(np.flatnonzero(hw.labels == lab))[: int(np.sum(hw.labels == lab)) // 4]
    for lab in (1, 0)
]))
train = hw.subset(np.setdiff1d(np.arange(hw.n), test_idx))
test = hw.subset(test_idx)

lrp = LRP().fit(train)
rep = permutation_importance(lrp.logistic, lrp.features(test), test.labels, n_perm=30, seed=0,
                             names=lrp.pooling.labels(test.wavenumbers))
print("sub-band          importance  95% half-width")
for lab, imp, hw_ in zip(rep.labels, rep.importance, rep.half_width):
    print(f"{lab:<17} {imp:>10.3f}  {hw_:.3f}")

cnn = CNN().fit(train, seed=0)
sal = saliency_map(cnn, test)
inside, outside = sal.band_contrast(2700, 3200)
peak = test.wavenumbers[np.argmax(sal.mean)]
print(f"\nCNN trained for {len(cnn.trace)} epochs")
print(f"mean saliency inside 2700-3200: {inside:.3f}, outside: {outside:.3f}")
print(f"most salient wavenumber: {peak:.1f} cm^-1")
