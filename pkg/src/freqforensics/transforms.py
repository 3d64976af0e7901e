"""Frequency transforms and spectral statistics.

Conventions, used consistently by every downstream module:

* The 2D DFT is the plain unnormalized forward transform
  X[k, l] = sum_{x, y} I[x, y] exp(-2*pi*i*x*k/H) exp(-2*pi*i*y*l/W),
  stored zero-frequency-centered, i.e. DC sits at (H // 2, W // 2).
* The 2D DCT is the type-II cosine sum
  C[k, l] = sum_{x, y} I[x, y] cos(pi/H * (x + 1/2) * k) cos(pi/W * (y + 1/2) * l)
  with no normalization factor; low frequencies at the upper-left corner.
* Power spectra are squared magnitudes of the DFT coefficients.
* The reduced spectrum is the azimuthal average of a power spectrum over the
  normalized radius r = sqrt((k^2 + l^2) / ((H^2 + W^2) / 4)) in [0, 1],
  where (k, l) are centered frequency offsets.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft

from .errors import DimensionError, ParameterError, SpectrumKindError, StateError, ZeroBinError

logger = logging.getLogger(__name__)

# Shared epsilon for log-scaled spectra and log features.
EPS_LOG = 1e-12


class SpectrumKind(str, Enum):
    DFT_MAGNITUDE = "dft_magnitude"
    DFT_POWER = "dft_power"
    DCT_ABS = "dct_abs"
    LOG_SCALED = "log_scaled"


@dataclass(frozen=True)
class Spectrum2D:
    """A 2D spectral grid with a tag recording what its values mean."""

    values: np.ndarray
    kind: SpectrumKind

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"spectrum must be 2D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("spectrum contains non-finite values")
        if self.kind != SpectrumKind.LOG_SCALED and np.any(values < 0):
            raise ParameterError(f"{self.kind.value} spectrum must be nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


REDUCED_NORMALIZATION = (
    "r=sqrt((k^2+l^2)/((H^2+W^2)/4)); bin=floor(r*(N_r-1)+1/2); value=mean power, unnormalized DFT"
)


@dataclass(frozen=True)
class ReducedSpectrum:
    """Azimuthally averaged power spectrum over normalized radius.

    ``bins[0]`` is the DC bin; ``bins[-1]`` corresponds to the largest radius
    (r = 1, the corner frequency). ``empty_bins`` lists radial bins that
    received no coefficients; their value is fixed at 0, never interpolated.
    """

    bins: np.ndarray
    normalization: str = REDUCED_NORMALIZATION
    empty_bins: tuple[int, ...] = ()

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        if bins.ndim != 1 or bins.size == 0:
            raise DimensionError("reduced spectrum must be a nonempty 1D array")
        if not np.all(np.isfinite(bins)):
            raise ParameterError("reduced spectrum contains non-finite values")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "empty_bins", tuple(int(b) for b in self.empty_bins))

    @property
    def n_bins(self) -> int:
        return self.bins.size


def dft2(img: np.ndarray, output_kind: SpectrumKind = SpectrumKind.DFT_POWER) -> Spectrum2D:
    """Compute the centered magnitude or power spectrum of a 2D image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected 2D image, got shape {img.shape}")
    output_kind = SpectrumKind(output_kind)
    if output_kind not in (SpectrumKind.DFT_MAGNITUDE, SpectrumKind.DFT_POWER):
        raise SpectrumKindError(f"dft2 produces dft_magnitude or dft_power, not {output_kind.value}")
    coefs = np.fft.fftshift(np.fft.fft2(img))
    mag = np.abs(coefs)
    values = mag if output_kind == SpectrumKind.DFT_MAGNITUDE else mag**2
    return Spectrum2D(values, output_kind)


def dct2(img: np.ndarray) -> Spectrum2D:
    """Compute absolute type-II DCT coefficients (plain cosine sum, unnormalized).

    scipy's unnormalized DCT-II carries a factor of 2 per axis relative to the
    plain cosine sum, hence the division by 4.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected 2D image, got shape {img.shape}")
    coefs = scipy.fft.dctn(img, type=2, norm=None) / 4.0
    return Spectrum2D(np.abs(coefs), SpectrumKind.DCT_ABS)


def log_scale(spec: Spectrum2D, eps: float = EPS_LOG) -> Spectrum2D:
    """Return ln(values + eps) with kind ``log_scaled``."""
    if spec.kind == SpectrumKind.LOG_SCALED:
        raise SpectrumKindError("spectrum is already log-scaled")
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    return Spectrum2D(np.log(spec.values + eps), SpectrumKind.LOG_SCALED)


def radial_bin_count(height: int, width: int) -> int:
    """Number of radial bins used for (height x width) power spectra."""
    return int(np.floor(np.hypot(height / 2.0, width / 2.0))) + 1


def radial_bin_index(height: int, width: int) -> np.ndarray:
    """Radial bin index of every cell of a centered (height x width) spectrum.

    Bin = floor(r * (N_r - 1) + 0.5) (round half up) with r the normalized
    radius; r = 1 at the spectrum corner, so the last bin holds the corner
    coefficients.
    """
    n_bins = radial_bin_count(height, width)
    k = np.arange(height) - height // 2
    l = np.arange(width) - width // 2
    r = np.sqrt((k[:, None] ** 2 + l[None, :] ** 2) / ((height**2 + width**2) / 4.0))
    return np.floor(r * (n_bins - 1) + 0.5).astype(np.intp)


def reduce_spectrum(spec: Spectrum2D) -> ReducedSpectrum:
    """Azimuthally average a centered power spectrum into radial bins.

    Each bin holds the mean of the power values mapped to it; bins that
    receive no coefficients are set to 0 and reported in ``empty_bins``.
    """
    if spec.kind != SpectrumKind.DFT_POWER:
        raise SpectrumKindError(f"reduce_spectrum needs a dft_power spectrum, got {spec.kind.value}")
    h, w = spec.values.shape
    n_bins = radial_bin_count(h, w)
    bin_index = radial_bin_index(h, w).ravel()
    sums = np.bincount(bin_index, weights=spec.values.ravel(), minlength=n_bins)
    counts = np.bincount(bin_index, minlength=n_bins)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        logger.warning("reduced spectrum has %d empty bins: %s", empty.size, empty.tolist())
    bins = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
    return ReducedSpectrum(bins, empty_bins=tuple(empty.tolist()))


@dataclass
class SpectrumAccumulator:
    """Streaming sum / sum-of-squares accumulator for same-shaped spectra.

    Accumulators merge commutatively and associatively, so corpora can be
    mapped in parallel and reduced in any grouping; reducing in a fixed order
    additionally gives bit-identical floating-point results.
    """

    count: int = 0
    sum: np.ndarray | None = None
    sum_sq: np.ndarray | None = None
    kind: SpectrumKind | None = None
    shape: tuple[int, int] | None = None

    def add(self, spec: Spectrum2D) -> "SpectrumAccumulator":
        if self.count == 0:
            self.kind = spec.kind
            self.shape = spec.values.shape
            self.sum = np.zeros(self.shape)
            self.sum_sq = np.zeros(self.shape)
        else:
            self._check_compatible(spec.values.shape, spec.kind)
        self.sum += spec.values
        self.sum_sq += spec.values**2
        self.count += 1
        return self

    def merge(self, other: "SpectrumAccumulator") -> "SpectrumAccumulator":
        """Return a new accumulator combining self and other."""
        if other.count == 0:
            return self.copy()
        if self.count == 0:
            return other.copy()
        self._check_compatible(other.shape, other.kind)
        merged = SpectrumAccumulator(
            count=self.count + other.count,
            sum=self.sum + other.sum,
            sum_sq=self.sum_sq + other.sum_sq,
            kind=self.kind,
            shape=self.shape,
        )
        return merged

    def finalize_mean(self) -> Spectrum2D:
        if self.count == 0:
            raise StateError("cannot finalize an empty accumulator")
        return Spectrum2D(self.sum / self.count, self.kind)

    def copy(self) -> "SpectrumAccumulator":
        return SpectrumAccumulator(
            count=self.count,
            sum=None if self.sum is None else self.sum.copy(),
            sum_sq=None if self.sum_sq is None else self.sum_sq.copy(),
            kind=self.kind,
            shape=self.shape,
        )

    def _check_compatible(self, shape, kind):
        if shape != self.shape:
            raise DimensionError(f"accumulator holds {self.shape} spectra, got {shape}")
        if kind != self.kind:
            raise SpectrumKindError(f"accumulator holds {self.kind.value} spectra, got {kind.value}")


def accumulate(acc: SpectrumAccumulator, spec: Spectrum2D) -> SpectrumAccumulator:
    """Add one spectrum to the accumulator (mutates and returns it)."""
    return acc.add(spec)


def merge(a: SpectrumAccumulator, b: SpectrumAccumulator) -> SpectrumAccumulator:
    return a.merge(b)


def finalize_mean(acc: SpectrumAccumulator) -> Spectrum2D:
    return acc.finalize_mean()


def spectral_error(fake: ReducedSpectrum, real: ReducedSpectrum) -> np.ndarray:
    """Relative spectral density error: fake / real - 1, bin-wise.

    Raises ZeroBinError listing every bin where the reference spectrum is
    zero; errors are never silently dropped or interpolated.
    """
    if fake.n_bins != real.n_bins:
        raise DimensionError(f"bin counts differ: fake {fake.n_bins} vs real {real.n_bins}")
    zero = np.flatnonzero(real.bins == 0)
    if zero.size:
        raise ZeroBinError(
            f"reference spectrum is zero in bins {zero.tolist()}", bins=zero.tolist()
        )
    return fake.bins / real.bins - 1.0


def clip_for_display(err: np.ndarray, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Clamp an error array for display without altering the stored values."""
    return np.clip(np.asarray(err, dtype=np.float64), lo, hi)
