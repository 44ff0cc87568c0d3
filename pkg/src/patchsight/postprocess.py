"""From raw score maps to image-level verdicts.

A score map is smoothed and max-reduced into one image score; thresholds
come from the training scores alone (no labeled tuning data exists in this
setting), and the confidence mapping is a bounded, sign-symmetric squash
that is exactly 50% at the threshold and approaches 100% far from it.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from . import imaging
from .errors import DimensionMismatchError, InsufficientDataError
from .imaging import CANONICAL_SIZE

# Default smoothing applied before max-reducing a score map; one grid cell
# of blur suppresses single-cell noise spikes without washing out defects.
DEFAULT_SMOOTHING_SIGMA = 1.0

_MAD_FLOOR = 1e-6


class Label(str, Enum):
    NORMAL = "Normal"
    ANOMALOUS = "Anomalous"


@dataclass(frozen=True)
class Calibration:
    threshold: float  # image scores above this are anomalous
    scale: float  # spread of the training scores (MAD, floored)
    train_score_max: float
    train_score_median: float


@dataclass(frozen=True)
class Verdict:
    label: Label
    confidence: float  # percent in [50, 100]
    image_score: float
    heatmap: np.ndarray


def _validate_map(score_map: np.ndarray) -> np.ndarray:
    arr = np.asarray(score_map, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected 2-D score map, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0:
        raise ValueError("score map must be nonnegative and finite")
    return arr


def smooth_map(score_map: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with kernel radius ceil(3*sigma) and edge replication.

    sigma 0 is the identity. The kernel is normalized, so constant maps are
    preserved exactly and no smoothed value can exceed the raw maximum.
    """
    arr = _validate_map(score_map)
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return arr.copy()
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = ndimage.convolve1d(arr, kernel, axis=0, mode="nearest")
    return ndimage.convolve1d(out, kernel, axis=1, mode="nearest")


def image_score(score_map: np.ndarray, sigma: float = DEFAULT_SMOOTHING_SIGMA) -> float:
    """One scalar per image: the maximum cell value after smoothing."""
    return float(smooth_map(score_map, sigma).max())


def calibrate(train_scores) -> Calibration:
    """Threshold and scale from the image scores of the training normals.

    The threshold is max(train_scores) * 1.1: training is normals-only, so
    the 10% headroom absorbs nuisance variation instead of a labeled tuning
    set. The scale is the median absolute deviation, floored so degenerate
    all-equal scores still yield a usable confidence slope.
    """
    scores = np.asarray(list(train_scores), dtype=np.float64)
    if scores.size < 2:
        raise InsufficientDataError(f"need >= 2 training scores, got {scores.size}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("training scores must be finite")
    median = float(np.median(scores))
    mad = float(np.median(np.abs(scores - median)))
    return Calibration(
        threshold=float(scores.max()) * 1.1,
        scale=max(mad, _MAD_FLOOR),
        train_score_max=float(scores.max()),
        train_score_median=median,
    )


def confidence_pct(score: float, cal: Calibration) -> float:
    """Percent certainty in [50, 100]; exactly 50 at the threshold."""
    z = (score - cal.threshold) / cal.scale
    return 50.0 + 50.0 * abs(z) / (1.0 + abs(z))


def verdict(
    score: float, cal: Calibration, score_map: np.ndarray, base: np.ndarray
) -> Verdict:
    """Image-level decision: anomalous iff the score exceeds the threshold."""
    label = Label.ANOMALOUS if score > cal.threshold else Label.NORMAL
    return Verdict(
        label=label,
        confidence=confidence_pct(score, cal),
        image_score=float(score),
        heatmap=render_heatmap(score_map, base, cal),
    )


def _build_colormap() -> np.ndarray:
    # Fixed 256-entry blue -> yellow -> red ramp.
    t = np.linspace(0.0, 1.0, 256)[:, None]
    blue = np.array([0.0, 0.0, 1.0])
    yellow = np.array([1.0, 1.0, 0.0])
    red = np.array([1.0, 0.0, 0.0])
    lo = blue + (yellow - blue) * np.clip(t / 0.5, 0.0, 1.0)
    hi = yellow + (red - yellow) * np.clip((t - 0.5) / 0.5, 0.0, 1.0)
    return np.where(t <= 0.5, lo, hi)


COLORMAP = _build_colormap()


def render_heatmap(score_map: np.ndarray, base: np.ndarray, cal: Calibration) -> np.ndarray:
    """Blend a threshold-normalized heat overlay onto the base image.

    Cells at or above the threshold saturate to red at 50% opacity; cells at
    zero leave the base untouched. Output stays in [0, 1].
    """
    arr = _validate_map(score_map)
    img = imaging.validate_image(base)
    if not imaging.is_canonical(img):
        raise DimensionMismatchError(
            f"heatmap base must be {CANONICAL_SIZE}x{CANONICAL_SIZE}x3, got {img.shape}"
        )
    denom = max(cal.threshold, 1e-12)
    norm = np.clip(arr / denom, 0.0, 1.0)
    up = imaging.resize_bilinear(norm[:, :, None], CANONICAL_SIZE, CANONICAL_SIZE)[:, :, 0]
    colors = COLORMAP[np.clip(np.rint(up * 255.0), 0, 255).astype(np.int64)]
    alpha = (0.5 * up)[:, :, None]
    return (1.0 - alpha) * img + alpha * colors
