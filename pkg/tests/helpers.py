"""Synthetic corpora shared by unit, CLI, and acceptance tests."""

import numpy as np


def radial_amplitude(shape, exponent=1.0):
    """1/(1+f)^exponent amplitude profile on the centered frequency grid."""
    h, w = shape
    k = np.arange(h) - h // 2
    l = np.arange(w) - w // 2
    radius = np.sqrt(k[:, None] ** 2 + l[None, :] ** 2)
    return 1.0 / (1.0 + radius) ** exponent


def shaped_noise_image(rng, shape=(64, 64), exponent=1.0, attenuate_above=None,
                       attenuation=0.0, value_range=(0.0, 1.0)):
    """Noise with a 1/f-shaped spectrum, optionally attenuated at high radius.

    attenuate_above is a fraction of the Nyquist radius; coefficient
    amplitudes beyond it are scaled by (1 - attenuation). The result is
    min-max normalized into value_range.
    """
    h, w = shape
    amplitude = radial_amplitude(shape, exponent)
    if attenuate_above is not None:
        k = np.arange(h) - h // 2
        l = np.arange(w) - w // 2
        radius = np.sqrt(k[:, None] ** 2 + l[None, :] ** 2)
        nyquist = np.sqrt((h / 2) ** 2 + (w / 2) ** 2)
        amplitude = amplitude * np.where(
            radius > attenuate_above * nyquist, 1.0 - attenuation, 1.0
        )
    white = np.fft.fft2(rng.standard_normal(shape))
    shaped = np.fft.ifft2(np.fft.ifftshift(amplitude) * white).real
    lo, hi = shaped.min(), shaped.max()
    unit = (shaped - lo) / (hi - lo)
    return unit * (value_range[1] - value_range[0]) + value_range[0]
