"""Binary classification of Raman spectra with linear models and a 1-D CNN.

Modules
-------
spectra      wavenumber axis, spectra sets, CSV ingestion, spectral regions
preprocess   outlier rejection and Savitzky-Golay smoothing
linear       logistic regression and the LRA, L2D, LRP and PCA classifiers
cnn          numpy 1-D convolutional network with ADAM training
evaluation   fold plans, ROC-AUC, cross-validation and summary tables
explain      permutation importance and saliency maps
synth        synthetic spectra with controllable class differences
cli          command-line entry point
"""

__version__ = "0.1.0"
