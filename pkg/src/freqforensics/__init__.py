"""Frequency-domain forensics toolkit for generated-image analysis.

Submodules:
    preprocess   image decoding, grayscale, cropping, resizing, median high-pass
    transforms   DFT/DCT spectra, reduced spectra, accumulators, spectral error
    perturb      blur / crop / JPEG / noise robustness battery
    classifier   pixel- and frequency-feature logistic regression
    metrics      ROC, AUROC, Pd@FAR, fakeness percentiles
    featurespace Gaussian-kernel MMD with the median heuristic
    diffusion    noise schedules, forward sampling, loss weights
    manifest     dataset manifests, deterministic splits, spectrum cache
    serialize    binary matrix format, CSV writers, heatmap PNGs
    cli          the freqforensics command
"""

__version__ = "0.1.0"

from .transforms import (  # noqa: F401
    ReducedSpectrum,
    Spectrum2D,
    SpectrumAccumulator,
    SpectrumKind,
    dct2,
    dft2,
    log_scale,
    reduce_spectrum,
    spectral_error,
)
