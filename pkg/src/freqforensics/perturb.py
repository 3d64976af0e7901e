"""Robustness perturbations: Gaussian blur, crop+upsample, JPEG, Gaussian noise.

All perturbations act on grayscale images in [0, 1] and keep them there.
Noise variances are specified on the 0-255 pixel scale (where a uniform
5..20 range is meaningful) and converted internally. Randomness comes from
explicit per-image substreams keyed by (seed, image index), so corpus runs
are reproducible regardless of parallelism.
"""

import io
import json
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import CodecError, DimensionError, ParameterError
from .preprocess import resize_bilinear
from .seeding import substream

# Order in which the pipeline considers perturbations.
PIPELINE_ORDER = ("blur", "crop", "jpeg", "noise")


@dataclass(frozen=True)
class PerturbConfig:
    blur_kernels: tuple[int, ...] = (3, 5, 7, 9)
    crop_factor_range: tuple[float, float] = (5.0, 20.0)
    jpeg_quality_range: tuple[int, int] = (10, 75)
    noise_variance_range: tuple[float, float] = (5.0, 20.0)  # 0-255 pixel scale
    apply_probability: float = 1.0
    seed: int = 0

    def __post_init__(self):
        kernels = tuple(sorted(int(k) for k in self.blur_kernels))
        if not kernels or any(k < 3 or k % 2 == 0 for k in kernels):
            raise ParameterError(f"blur kernels must be odd and >= 3, got {kernels}")
        object.__setattr__(self, "blur_kernels", kernels)
        for name, (lo, hi) in (
            ("crop_factor_range", self.crop_factor_range),
            ("jpeg_quality_range", self.jpeg_quality_range),
            ("noise_variance_range", self.noise_variance_range),
        ):
            if lo > hi:
                raise ParameterError(f"{name} is empty: [{lo}, {hi}]")
        if not 0.0 <= self.apply_probability <= 1.0:
            raise ParameterError(f"apply_probability must be in [0, 1], got {self.apply_probability}")


def gaussian_kernel_1d(size: int) -> np.ndarray:
    """Normalized 1D Gaussian taps with sigma = 0.3*((size-1)/2 - 1) + 0.8."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {size}")
    sigma = 0.3 * ((size - 1) / 2.0 - 1.0) + 0.8
    x = np.arange(size) - (size - 1) / 2.0
    taps = np.exp(-(x**2) / (2.0 * sigma**2))
    return taps / taps.sum()


def gaussian_blur(img: np.ndarray, kernel: int) -> np.ndarray:
    """Separable Gaussian blur with edge-replicated borders."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected 2D image, got shape {img.shape}")
    taps = gaussian_kernel_1d(kernel)
    radius = kernel // 2
    padded = np.pad(img, ((radius, radius), (0, 0)), mode="edge")
    rows = sum(taps[i] * padded[i : i + img.shape[0], :] for i in range(kernel))
    padded = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
    return sum(taps[i] * padded[:, i : i + img.shape[1]] for i in range(kernel))


def crop_upsample(img: np.ndarray, factor_percent: float, offset_rng: np.random.Generator):
    """Remove factor_percent of each dimension at a random offset, then
    bilinearly resize back to the original size.

    Returns (image, params) where params records the drawn window and offsets.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if not 0.0 <= factor_percent < 100.0:
        raise ParameterError(f"crop factor must be in [0, 100), got {factor_percent}")
    win_h = int(h * (100.0 - factor_percent) / 100.0)
    win_w = int(w * (100.0 - factor_percent) / 100.0)
    if win_h < 1 or win_w < 1:
        raise ParameterError(f"crop factor {factor_percent} leaves no pixels ({win_h}x{win_w})")
    top = int(offset_rng.integers(0, h - win_h + 1))
    left = int(offset_rng.integers(0, w - win_w + 1))
    window = img[top : top + win_h, left : left + win_w]
    out = window if (win_h, win_w) == (h, w) else resize_bilinear(window, w, h)
    return out, {"window_h": win_h, "window_w": win_w, "top": top, "left": left}


def jpeg_cycle(img: np.ndarray, quality: int) -> np.ndarray:
    """Round-trip a [0, 1] grayscale image through baseline JPEG."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected 2D image, got shape {img.shape}")
    if not 1 <= quality <= 100:
        raise ParameterError(f"JPEG quality must be in [1, 100], got {quality}")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    try:
        Image.fromarray(data, mode="L").save(buf, format="JPEG", quality=int(quality))
        buf.seek(0)
        with Image.open(buf) as decoded:
            out = np.asarray(decoded.convert("L"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise CodecError(f"JPEG round-trip failed: {exc}") from exc
    return out


def add_gaussian_noise(img: np.ndarray, variance_255: float, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, variance) noise (variance on the 0-255 scale) and clamp to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if variance_255 <= 0:
        raise ParameterError(f"noise variance must be positive, got {variance_255}")
    sigma = float(np.sqrt(variance_255)) / 255.0
    return np.clip(img + rng.standard_normal(img.shape) * sigma, 0.0, 1.0)


def apply_pipeline(img: np.ndarray, cfg: PerturbConfig, image_index: int = 0):
    """Apply the blur -> crop -> jpeg -> noise battery to one image.

    Each perturbation fires independently with cfg.apply_probability;
    parameters are drawn from the configured ranges on the substream keyed by
    (cfg.seed, image_index). Returns (image, records) where records is one
    dict per applied perturbation.
    """
    rng = substream(cfg.seed, image_index)
    out = np.asarray(img, dtype=np.float64)
    records: list[dict] = []
    for name in PIPELINE_ORDER:
        if rng.random() >= cfg.apply_probability:
            continue
        if name == "blur":
            kernel = int(cfg.blur_kernels[rng.integers(0, len(cfg.blur_kernels))])
            out = gaussian_blur(out, kernel)
            records.append({"perturbation": "blur", "kernel": kernel})
        elif name == "crop":
            lo, hi = cfg.crop_factor_range
            factor = float(rng.uniform(lo, hi))
            out, params = crop_upsample(out, factor, rng)
            records.append({"perturbation": "crop", "factor": factor, **params})
        elif name == "jpeg":
            lo, hi = cfg.jpeg_quality_range
            quality = int(rng.integers(lo, hi + 1))
            out = jpeg_cycle(out, quality)
            records.append({"perturbation": "jpeg", "quality": quality})
        elif name == "noise":
            lo, hi = cfg.noise_variance_range
            variance = float(rng.uniform(lo, hi))
            out = add_gaussian_noise(out, variance, rng)
            records.append({"perturbation": "noise", "variance": variance})
    return out, records


def records_to_jsonl(image_id: str, records: list[dict]) -> list[str]:
    """One JSON line per applied perturbation: {image_id, perturbation, params...}."""
    return [json.dumps({"image_id": image_id, **record}, sort_keys=True) for record in records]
