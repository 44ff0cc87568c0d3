"""Deterministic procedural generator of gear-tray inspection images.

Renders a tray with a casing and a set of toothed gears, under one product
condition (the ground-truth label) and one setup condition (an environmental
perturbation that does NOT change the label). Every image is a pure function
of its SceneSpec, so datasets regenerate bit-identically.
"""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from . import imaging
from .imaging import CANONICAL_SIZE


class ProductCondition(str, Enum):
    NORMAL = "good"
    GEAR_DAMAGE = "gear_damage"
    MISSING_GEAR = "missing_gear"
    EXTRA_GEAR = "extra_gear"
    NOT_ANODISED = "not_anodised"


class SetupCondition(str, Enum):
    NO_CHANGE = "no_change"
    DARKER_ENVIRONMENT = "darker_environment"
    TRAY_NOT_ALIGNED = "tray_not_aligned"
    PARTS_TILT = "parts_tilt"


DEFECTS = (
    ProductCondition.GEAR_DAMAGE,
    ProductCondition.MISSING_GEAR,
    ProductCondition.EXTRA_GEAR,
    ProductCondition.NOT_ANODISED,
)


@dataclass(frozen=True)
class JitterSpec:
    """Per-image nuisance magnitudes; always on so no two normals are byte-equal."""

    max_shift_px: float = 2.0
    luminance_jitter: float = 0.03
    noise_sigma: float = 0.008


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    product_condition: ProductCondition = ProductCondition.NORMAL
    setup_condition: SetupCondition = SetupCondition.NO_CHANGE
    jitter: JitterSpec = field(default_factory=JitterSpec)

    @property
    def label_anomalous(self) -> bool:
        """Ground truth: only product defects are anomalies, setup changes are not."""
        return self.product_condition is not ProductCondition.NORMAL


# Perturbation magnitudes for the setup conditions. Chosen to be clearly
# visible at 256x256 without being trivial; tunable here in one place.
DARKER_FACTOR = 0.45
TRAY_SHIFT_PX = (18.0, 12.0)  # (dx, dy)
TILT_DEGREES = 15.0

_SS = 2  # supersampling factor for antialiased rasterization

# Scene palette.
_BACKGROUND = (0.46, 0.37, 0.27)
_TRAY_FILL = (0.24, 0.25, 0.27)
_TRAY_RIM = (0.33, 0.34, 0.36)
_CASING_ANODISED = (0.10, 0.11, 0.14)
_CASING_BARE_METAL = (0.74, 0.75, 0.78)
_BOLT = (0.38, 0.39, 0.42)
_HUB = (0.16, 0.16, 0.18)

_TRAY_RECT = (24.0, 24.0, 232.0, 232.0)  # x0, y0, x1, y1
_TRAY_RIM_W = 4.0
_CASING_RECT = (148.0, 56.0, 216.0, 200.0)
_CASING_CORNER_R = 10.0
_BOLTS = ((164.0, 76.0, 4.0), (200.0, 180.0, 4.0))  # (cx, cy, r)


@dataclass(frozen=True)
class GearShape:
    cx: float
    cy: float
    body_r: float
    tooth_h: float
    n_teeth: int
    hub_r: float
    rotation: float  # radians
    color: tuple

    @property
    def outer_r(self) -> float:
        return self.body_r + self.tooth_h


_MAIN_GEAR = GearShape(84.0, 96.0, 34.0, 7.0, 12, 8.0, 0.35, (0.62, 0.63, 0.66))
_SECOND_GEAR = GearShape(84.0, 180.0, 21.0, 5.5, 9, 5.5, 0.10, (0.72, 0.61, 0.35))
_THIRD_GEAR = GearShape(162.0, 40.0, 11.0, 3.5, 8, 3.0, 0.55, (0.55, 0.56, 0.60))
_EXTRA_GEAR = GearShape(40.0, 44.0, 9.0, 3.0, 7, 2.5, 0.00, (0.76, 0.66, 0.42))

# Adjacent teeth removed from the main gear under GEAR_DAMAGE.
_DAMAGED_TEETH = (0, 1)


def _derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit per-image seed from a master seed and identifying parts."""
    token = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_image_seed(master_seed: int, split: str, condition: str, index: int) -> int:
    return _derive_seed(master_seed, split, condition, index)


def _gear_mask(X, Y, gear: GearShape, extra_rotation: float, removed_teeth=()):
    dx = X - gear.cx
    dy = Y - gear.cy
    rr = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx) - gear.rotation - extra_rotation
    step = 2.0 * np.pi / gear.n_teeth
    phase = np.mod(theta / step, gear.n_teeth)
    tooth_idx = np.floor(phase).astype(np.int64)
    frac = phase - tooth_idx
    tooth_on = (frac >= 0.25) & (frac < 0.75)
    if removed_teeth:
        tooth_on &= ~np.isin(tooth_idx, np.asarray(removed_teeth))
    limit = gear.body_r + gear.tooth_h * tooth_on
    return rr <= limit


def _rect_mask(X, Y, x0, y0, x1, y1):
    return (X >= x0) & (X < x1) & (Y >= y0) & (Y < y1)


def _rounded_rect_mask(X, Y, x0, y0, x1, y1, radius):
    cx = (x0 + x1) / 2.0
    cy = (y0 + y1) / 2.0
    qx = np.maximum(np.abs(X - cx) - ((x1 - x0) / 2.0 - radius), 0.0)
    qy = np.maximum(np.abs(Y - cy) - ((y1 - y0) / 2.0 - radius), 0.0)
    return qx * qx + qy * qy <= radius * radius


def _disk_mask(X, Y, cx, cy, r):
    return np.hypot(X - cx, Y - cy) <= r


def _paint(canvas, mask, color):
    canvas[mask] = color


def _scene_gears(product: ProductCondition):
    """Gears present in the scene and the removed-teeth set for the main gear."""
    gears = [_MAIN_GEAR, _SECOND_GEAR, _THIRD_GEAR]
    if product is ProductCondition.MISSING_GEAR:
        gears.remove(_SECOND_GEAR)
    if product is ProductCondition.EXTRA_GEAR:
        gears.append(_EXTRA_GEAR)
    removed = _DAMAGED_TEETH if product is ProductCondition.GEAR_DAMAGE else ()
    return gears, removed


def render(spec: SceneSpec) -> np.ndarray:
    """Render the scene to a 256x256 RGB image; bit-identical for equal specs."""
    return render_with_mask(spec)[0]


def render_with_mask(spec: SceneSpec):
    """Render and also return the declared defect region mask (256x256 bool).

    The mask covers every pixel a product defect is allowed to change
    relative to the NORMAL render of the same spec; it is all-False for
    normal products.
    """
    rng = np.random.default_rng(spec.seed)
    jit = spec.jitter
    # Fixed draw order, independent of the conditions, so two specs sharing a
    # seed share the exact same nuisance realization.
    dx, dy = rng.uniform(-jit.max_shift_px, jit.max_shift_px, size=2)
    lum = 1.0 + rng.uniform(-jit.luminance_jitter, jit.luminance_jitter)
    noise = rng.normal(0.0, jit.noise_sigma, size=(CANONICAL_SIZE, CANONICAL_SIZE, 3))

    if spec.setup_condition is SetupCondition.TRAY_NOT_ALIGNED:
        dx += TRAY_SHIFT_PX[0]
        dy += TRAY_SHIFT_PX[1]
    extra_rot = np.deg2rad(TILT_DEGREES) if spec.setup_condition is SetupCondition.PARTS_TILT else 0.0

    n = CANONICAL_SIZE * _SS
    axis = (np.arange(n) + 0.5) / _SS
    X, Y = np.meshgrid(axis - dx, axis - dy)  # shape (n, n); shifting the
    # sampling lattice instead of every shape center translates all content.

    canvas = np.empty((n, n, 3), dtype=np.float64)
    canvas[:] = _BACKGROUND
    tx0, ty0, tx1, ty1 = _TRAY_RECT
    _paint(canvas, _rect_mask(X, Y, tx0, ty0, tx1, ty1), _TRAY_RIM)
    w = _TRAY_RIM_W
    _paint(canvas, _rect_mask(X, Y, tx0 + w, ty0 + w, tx1 - w, ty1 - w), _TRAY_FILL)

    casing_color = (
        _CASING_BARE_METAL
        if spec.product_condition is ProductCondition.NOT_ANODISED
        else _CASING_ANODISED
    )
    _paint(canvas, _rounded_rect_mask(X, Y, *_CASING_RECT, _CASING_CORNER_R), casing_color)
    for bx, by, br in _BOLTS:
        _paint(canvas, _disk_mask(X, Y, bx, by, br), _BOLT)

    gears, removed = _scene_gears(spec.product_condition)
    for gear in gears:
        rem = removed if gear is _MAIN_GEAR else ()
        _paint(canvas, _gear_mask(X, Y, gear, extra_rot, rem), gear.color)
        _paint(canvas, _disk_mask(X, Y, gear.cx, gear.cy, gear.hub_r), _HUB)

    # Box-average the supersampled lattice down to the canonical size.
    img = canvas.reshape(CANONICAL_SIZE, _SS, CANONICAL_SIZE, _SS, 3).mean(axis=(1, 3))
    img = np.clip(img * lum + noise, 0.0, 1.0)
    if spec.setup_condition is SetupCondition.DARKER_ENVIRONMENT:
        img = imaging.adjust_brightness(img, DARKER_FACTOR)

    return img, _defect_mask(spec, dx, dy, extra_rot)


def _defect_mask(spec: SceneSpec, dx: float, dy: float, extra_rot: float) -> np.ndarray:
    margin = 3.0
    axis = np.arange(CANONICAL_SIZE) + 0.5
    X, Y = np.meshgrid(axis - dx, axis - dy)
    product = spec.product_condition
    if product is ProductCondition.MISSING_GEAR:
        g = _SECOND_GEAR
        return _disk_mask(X, Y, g.cx, g.cy, g.outer_r + margin)
    if product is ProductCondition.EXTRA_GEAR:
        g = _EXTRA_GEAR
        return _disk_mask(X, Y, g.cx, g.cy, g.outer_r + margin)
    if product is ProductCondition.NOT_ANODISED:
        x0, y0, x1, y1 = _CASING_RECT
        return _rounded_rect_mask(
            X, Y, x0 - 2, y0 - 2, x1 + 2, y1 + 2, _CASING_CORNER_R + 2
        )
    if product is ProductCondition.GEAR_DAMAGE:
        g = _MAIN_GEAR
        step = 2.0 * np.pi / g.n_teeth
        rot = g.rotation + extra_rot
        theta = np.mod(np.arctan2(Y - g.cy, X - g.cx) - rot, 2.0 * np.pi)
        lo = min(_DAMAGED_TEETH) * step
        hi = (max(_DAMAGED_TEETH) + 1) * step
        in_sector = (theta >= lo - 0.08) & (theta <= hi + 0.08)
        rr = np.hypot(X - g.cx, Y - g.cy)
        return in_sector & (rr >= g.body_r - margin) & (rr <= g.outer_r + margin)
    return np.zeros((CANONICAL_SIZE, CANONICAL_SIZE), dtype=bool)


def grid_specs(
    master_seed: int,
    product: ProductCondition,
    setup: SetupCondition,
    count: int,
) -> list:
    """Specs for one cell of the product x setup condition grid."""
    return [
        SceneSpec(
            seed=_derive_seed(master_seed, "grid", product.value, setup.value, i),
            product_condition=product,
            setup_condition=setup,
        )
        for i in range(count)
    ]


def generate_dataset(
    root,
    n_train_normal: int,
    n_test_normal: int,
    n_test_per_defect: Union[int, Mapping[ProductCondition, int]],
    master_seed: int,
) -> dict:
    """Write a train/good, test/good, test/<defect> dataset tree of PNGs.

    Per-image seeds are derived from (master_seed, split, condition, index),
    so regeneration with the same arguments is byte-identical and images may
    be rendered in any order. Defect images get a ground-truth region mask
    under ground_truth/<defect>/. Returns the manifest, which is also written
    to manifest.json at the root.
    """
    if n_train_normal < 1 or n_test_normal < 1:
        raise ValueError("image counts must be >= 1")
    if isinstance(n_test_per_defect, int):
        if n_test_per_defect < 1:
            raise ValueError("image counts must be >= 1")
        defect_counts = {d: n_test_per_defect for d in DEFECTS}
    else:
        defect_counts = {d: int(c) for d, c in n_test_per_defect.items() if c > 0}

    root = Path(root)
    entries = []

    def write_png(path: Path, img: np.ndarray):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(imaging.encode_png(img))
        except OSError as exc:
            raise OSError(f"failed to write {path}: {exc}") from exc

    for i in range(n_train_normal):
        seed = derive_image_seed(master_seed, "train", "good", i)
        img = render(SceneSpec(seed=seed))
        rel = Path("train") / "good" / f"{i:03d}.png"
        write_png(root / rel, img)
        entries.append(
            {"path": str(rel), "split": "train", "condition": "good", "label": "normal"}
        )

    for i in range(n_test_normal):
        seed = derive_image_seed(master_seed, "test", "good", i)
        img = render(SceneSpec(seed=seed))
        rel = Path("test") / "good" / f"{i:03d}.png"
        write_png(root / rel, img)
        entries.append(
            {"path": str(rel), "split": "test", "condition": "good", "label": "normal"}
        )

    for defect, count in defect_counts.items():
        for i in range(count):
            seed = derive_image_seed(master_seed, "test", defect.value, i)
            img, mask = render_with_mask(
                SceneSpec(seed=seed, product_condition=defect)
            )
            rel = Path("test") / defect.value / f"{i:03d}.png"
            mask_rel = Path("ground_truth") / defect.value / f"{i:03d}_mask.png"
            write_png(root / rel, img)
            write_png(root / mask_rel, mask.astype(np.float64)[:, :, None])
            entries.append(
                {
                    "path": str(rel),
                    "split": "test",
                    "condition": defect.value,
                    "label": "anomalous",
                    "mask": str(mask_rel),
                }
            )

    entries.sort(key=lambda e: e["path"])
    manifest = {"master_seed": master_seed, "images": entries}
    try:
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    except OSError as exc:
        raise OSError(f"failed to write {root / 'manifest.json'}: {exc}") from exc
    return manifest
