"""Image loading and spatial preprocessing.

Images are plain numpy arrays: grayscale images are 2D float64 arrays of
shape (H, W), RGB images are (H, W, 3). Decoded pixel values live in [0, 1]
(an 8-bit value v maps to v/255 exactly); high-pass residuals may be
negative.
"""

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import median_filter

from .errors import CodecError, DimensionError, FormatError, ParameterError
from .serialize import atomic_write_bytes

# BT.601 luma weights; the common forensics convention.
GRAY_WEIGHTS_BT601 = (0.299, 0.587, 0.114)

_SUPPORTED_FORMATS = {"PNG", "JPEG"}


def load_image(path) -> np.ndarray:
    """Decode a PNG or baseline JPEG file into an (H, W, 3) array in [0, 1].

    Palette and grayscale files are expanded to RGB; an alpha channel is
    dropped. 16-bit images are rejected (out of scope).
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format not in _SUPPORTED_FORMATS:
                raise FormatError(f"{path}: unsupported format {img.format!r} (need PNG or JPEG)")
            if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise FormatError(f"{path}: {img.mode} images are not supported (8-bit only)")
            rgb = img.convert("RGB")
            data = np.asarray(rgb, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a recognized image file") from exc
    except OSError as exc:
        raise CodecError(f"{path}: failed to read image: {exc}") from exc
    return data


def save_gray_png(img: np.ndarray, path) -> None:
    """Write a [0, 1] grayscale image as an 8-bit PNG (values rounded).

    The file appears atomically (encode to memory, write-then-rename).
    """
    data = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    buf = io.BytesIO()
    Image.fromarray(np.round(data * 255.0).astype(np.uint8), mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def to_grayscale(img: np.ndarray, weights=GRAY_WEIGHTS_BT601) -> np.ndarray:
    """Convert an (H, W, 3) image to grayscale with the given luma weights.

    Weights must sum to 1. The sum is evaluated in anchored form
    B + w_r*(R - B) + w_g*(G - B), which is algebraically the weighted sum
    but exact on achromatic pixels (R = G = B maps to that value bit-for-bit
    even though the float weights don't sum to exactly 1).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) array, got shape {img.shape}")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,):
        raise ParameterError("weights must have exactly three entries")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ParameterError(f"grayscale weights must sum to 1, got {w.sum()!r}")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    return b + w[0] * (r - b) + w[1] * (g - b)


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    """Crop the central size x size window; offset = floor((dim - size) / 2)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if size > min(h, w):
        raise DimensionError(f"crop size {size} exceeds image dimensions {h}x{w}")
    top = (h - size) // 2
    left = (w - size) // 2
    return img[top : top + size, left : left + size].copy()


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Resize a 2D image with bilinear interpolation.

    Source coordinates are half-pixel centered:
    src = (dst + 0.5) * (old / new) - 0.5, clamped to the valid range.
    The output is clamped to [min, max] of the input, so interpolation can
    never escape the input's value range.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected 2D image, got shape {img.shape}")
    if new_w < 1 or new_h < 1:
        raise ParameterError("target dimensions must be >= 1")
    h, w = img.shape

    def axis_coords(new_n: int, old_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(new_n) + 0.5) * (old_n / new_n) - 0.5
        src = np.clip(src, 0.0, old_n - 1.0)
        lo = np.floor(src).astype(np.intp)
        lo = np.minimum(lo, old_n - 1)
        hi = np.minimum(lo + 1, old_n - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis_coords(new_h, h)
    x0, x1, fx = axis_coords(new_w, w)
    fy = fy[:, None]
    fx = fx[None, :]
    top = img[y0][:, x0] * (1.0 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1.0 - fx) + img[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return np.clip(out, img.min(), img.max())


def median_highpass(img: np.ndarray, kernel: int = 3) -> np.ndarray:
    """Subtract a median-filtered version of the image (edge-replicated borders).

    This is the high-pass residual computed before spectrum visualization;
    the result is generally signed.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected 2D image, got shape {img.shape}")
    if kernel < 3 or kernel % 2 == 0:
        raise ParameterError(f"median kernel must be odd and >= 3, got {kernel}")
    return img - median_filter(img, size=kernel, mode="nearest")
