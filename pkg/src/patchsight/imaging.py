"""Image decoding/encoding and the geometric/photometric primitives.

Images are plain numpy arrays of shape (H, W, C) with C in {1, 3}, dtype
float64, values in [0, 1], row-major and channel-interleaved. All functions
here are pure and thread-safe.
"""

import io

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionMismatchError, UnsupportedFormatError

# Every training/inference image is resized to this size before feature
# extraction so the patch grid geometry is fixed.
CANONICAL_SIZE = 256

# PNG modes we accept; everything is normalized to RGB at decode.
_DECODABLE_MODES = {"L", "LA", "P", "RGB", "RGBA"}


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (H, W, C) float-in-[0,1] contract and return the array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DimensionMismatchError(
            f"expected (H, W, 1) or (H, W, 3) image, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values outside [0, 1]")
    return arr


def is_canonical(img: np.ndarray) -> bool:
    return img.shape == (CANONICAL_SIZE, CANONICAL_SIZE, 3)


def decode_png(data: bytes) -> np.ndarray:
    """Decode an 8-bit PNG (grayscale or RGB) to a (H, W, 3) float array.

    Grayscale is replicated to 3 channels; alpha is dropped, not
    premultiplied. Pixel value v maps to v / 255.
    """
    bio = io.BytesIO(data)
    try:
        with Image.open(bio) as pil:
            if pil.format != "PNG":
                raise UnsupportedFormatError(
                    f"only PNG is supported, got {pil.format or 'unknown format'}"
                )
            if pil.mode not in _DECODABLE_MODES:
                raise UnsupportedFormatError(
                    f"unsupported PNG mode {pil.mode!r} (8-bit grayscale/RGB only)"
                )
            rgb = pil.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise DecodeError(f"not a decodable PNG (failed at byte offset {bio.tell()})") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"malformed PNG at byte offset {bio.tell()}: {exc}") from exc
    return arr


def encode_png(img: np.ndarray) -> bytes:
    """Encode to 8-bit PNG; value v is stored as round(v * 255) clamped to [0, 255]."""
    arr = validate_image(img)
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if quantized.shape[2] == 1:
        pil = Image.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quantized, mode="RGB")
    out = io.BytesIO()
    pil.save(out, format="PNG")
    return out.getvalue()


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    Output pixels are convex combinations of input pixels, so values stay
    inside the input's [min, max] range. Resizing to the same size returns
    an identical copy.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionMismatchError(f"expected (H, W, C) image, got shape {arr.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be >= 1, got {out_h}x{out_w}")
    in_h, in_w = arr.shape[:2]
    ys = _corner_aligned_coords(in_h, out_h)
    xs = _corner_aligned_coords(in_w, out_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = arr[y0][:, x0] * (1.0 - wx) + arr[y0][:, x1] * wx
    bot = arr[y1][:, x0] * (1.0 - wx) + arr[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy


def _corner_aligned_coords(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1:
        # Degenerate axis: sample the center.
        return np.full(1, (n_in - 1) / 2.0)
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    """Scale every value by `factor` and clamp to [0, 1]."""
    if factor <= 0:
        raise ValueError(f"brightness factor must be > 0, got {factor}")
    arr = np.asarray(img, dtype=np.float64)
    return np.clip(arr * factor, 0.0, 1.0)


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an RGB image, shape (H, W)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatchError(f"expected (H, W, 3) image, got shape {arr.shape}")
    return arr[:, :, 0] * 0.299 + arr[:, :, 1] * 0.587 + arr[:, :, 2] * 0.114
