"""Dataset layout, train/evaluate orchestration, the binary model container,
and the timing/memory benchmark harness.

Dataset trees follow the MVTec convention so real photo datasets drop in
unchanged:

    root/train/good/*.png      normal training images (the only ones ever read
                               during training)
    root/test/good/*.png       normal test images
    root/test/<defect>/*.png   anomalous test images, one directory per defect

Model container ("PLAD" format, all little-endian):

    magic "PLAD" | u16 version=1 | u8 algorithm_id (1=gaussian-per-cell,
    2=memory-bank) | extractor config | calibration (4 x f64) | payload
    (algorithm-specific, float32 length-prefixed arrays) | u32 CRC32 of all
    preceding bytes
"""

import json
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import features, imaging, metrics, padim, patchcore, postprocess, synthgear
from .errors import (
    CorruptModelError,
    FramingError,
    InsufficientDataError,
    MissingEmbeddingError,
    UnsupportedModelError,
)
from .features import ExtractorConfig, ExtractorKind
from .framing import ByteReader, ByteWriter
from .imaging import CANONICAL_SIZE

MODEL_MAGIC = b"PLAD"
MODEL_VERSION = 1
ALGORITHM_PADIM = 1
ALGORITHM_PATCHCORE = 2
ALGORITHM_NAMES = {ALGORITHM_PADIM: "padim", ALGORITHM_PATCHCORE: "patchcore"}

_U64_MASK = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class DatasetLayout:
    root: Path
    train_normal: tuple  # paths under train/good
    test_normal: tuple  # paths under test/good
    test_anomalous: dict  # defect name -> tuple of paths


@dataclass(frozen=True)
class PadimHyper:
    epsilon: float = padim.DEFAULT_EPSILON
    keep: Optional[int] = None  # optional channel-subset size


@dataclass(frozen=True)
class PatchcoreHyper:
    coreset_ratio: float = 0.1


@dataclass
class TrainedModel:
    algorithm_id: int
    extractor: ExtractorConfig
    calibration: postprocess.Calibration
    detector: object  # GaussianBank or MemoryBank
    train_seconds: float = 0.0  # transient; not serialized


def scan_layout(root) -> DatasetLayout:
    """Discover the dataset tree under `root`."""
    root = Path(root)

    def pngs(d: Path):
        return tuple(sorted(d.glob("*.png"))) if d.is_dir() else ()

    test_dir = root / "test"
    defects = {}
    if test_dir.is_dir():
        for sub in sorted(test_dir.iterdir()):
            if sub.is_dir() and sub.name != "good":
                defects[sub.name] = pngs(sub)
    return DatasetLayout(
        root=root,
        train_normal=pngs(root / "train" / "good"),
        test_normal=pngs(test_dir / "good"),
        test_anomalous=defects,
    )


def split_train_test(normals, n_train: int, seed: int):
    """Seeded uniform shuffle of `normals`; first n_train train, rest held out."""
    items = list(normals)
    if not 0 < n_train < len(items):
        raise ValueError(f"n_train must be in (0, {len(items)}), got {n_train}")
    perm = np.random.default_rng(seed).permutation(len(items))
    train = [items[i] for i in perm[:n_train]]
    held = [items[i] for i in perm[n_train:]]
    return train, held


def load_canonical(path) -> np.ndarray:
    """Decode a PNG and resize it to the canonical model input size."""
    img = imaging.decode_png(Path(path).read_bytes())
    if not imaging.is_canonical(img):
        img = imaging.resize_bilinear(img, CANONICAL_SIZE, CANONICAL_SIZE)
    return img


def _grids_for(paths, cfg: ExtractorConfig):
    if cfg.kind is ExtractorKind.IMPORTED_EMBEDDINGS:
        store = features.load_embedding_file(cfg.import_path)
        grids = []
        for p in paths:
            name = Path(p).name
            if name not in store:
                raise MissingEmbeddingError(
                    f"no embedding for {name!r} in {cfg.import_path}"
                )
            grids.append(store[name])
        return grids
    return [features.extract(load_canonical(p), cfg) for p in paths]


def score_map_for(model: TrainedModel, grid: np.ndarray) -> np.ndarray:
    """Raw anomaly score map of one feature grid under a trained model."""
    if model.algorithm_id == ALGORITHM_PADIM:
        bank = model.detector
        if grid.shape[-1] != bank.dim:
            grid = features.reduce_dims(grid, bank.dim, bank.reduce_seed)
        return padim.score_padim(bank, grid)
    return patchcore.score_patchcore(model.detector, grid)


def score_image(model: TrainedModel, img: np.ndarray):
    """(image score, raw score map) for one canonical image."""
    grid = features.extract(img, model.extractor)
    score_map = score_map_for(model, grid)
    return postprocess.image_score(score_map), score_map


def train(
    layout: DatasetLayout,
    algorithm: int,
    cfg: Optional[ExtractorConfig] = None,
    hyper=None,
    seed: int = 0,
) -> TrainedModel:
    """Fit a detector on train/good, then calibrate on the training scores.

    Only train/good paths are ever read; the held-out test tree does not
    influence the model or its threshold.
    """
    if algorithm not in ALGORITHM_NAMES:
        raise UnsupportedModelError(f"unknown algorithm id {algorithm}")
    if not layout.train_normal:
        raise InsufficientDataError(f"no training images under {layout.root}")
    cfg = cfg or ExtractorConfig()

    t0 = time.perf_counter()
    grids = _grids_for(layout.train_normal, cfg)
    if algorithm == ALGORITHM_PADIM:
        hyper = hyper or PadimHyper()
        if hyper.keep is not None:
            grids = [features.reduce_dims(g, hyper.keep, seed) for g in grids]
        detector = padim.fit_padim(grids, epsilon=hyper.epsilon, reduce_seed=seed)
    else:
        hyper = hyper or PatchcoreHyper()
        detector = patchcore.fit_patchcore(
            grids, coreset_ratio=hyper.coreset_ratio, seed=seed
        )

    model = TrainedModel(
        algorithm_id=algorithm,
        extractor=cfg,
        calibration=postprocess.Calibration(0.0, 1.0, 0.0, 0.0),  # placeholder
        detector=detector,
    )
    train_scores = [
        postprocess.image_score(score_map_for(model, g)) for g in grids
    ]
    model.calibration = postprocess.calibrate(train_scores)
    model.train_seconds = time.perf_counter() - t0
    return model


def _test_paths_and_labels(layout: DatasetLayout):
    paths = [(p, 0) for p in sorted(layout.test_normal)]
    for defect in sorted(layout.test_anomalous):
        paths.extend((p, 1) for p in sorted(layout.test_anomalous[defect]))
    return paths


def evaluate(model: TrainedModel, layout: DatasetLayout) -> metrics.EvalReport:
    """Score every test image and assemble the full evaluation report."""
    pairs = _test_paths_and_labels(layout)
    if not pairs:
        raise InsufficientDataError(f"no test images under {layout.root}")
    labels = [lab for _, lab in pairs]

    t0 = time.perf_counter()
    if model.extractor.kind is ExtractorKind.IMPORTED_EMBEDDINGS:
        grids = _grids_for([p for p, _ in pairs], model.extractor)
        scores = [
            postprocess.image_score(score_map_for(model, g)) for g in grids
        ]
    else:
        scores = [
            score_image(model, load_canonical(p))[0] for p, _ in pairs
        ]
    inference_seconds = time.perf_counter() - t0

    preds = [1 if s > model.calibration.threshold else 0 for s in scores]
    breakdown = metrics.f1_macro(labels, preds)
    return metrics.EvalReport(
        confusion=metrics.confusion(labels, preds),
        auroc=metrics.auroc(labels, scores),
        per_class=breakdown.per_class,
        f1_macro=breakdown.f1_macro,
        timings={
            "train_seconds": model.train_seconds,
            "inference_seconds": inference_seconds,
        },
        peak_model_bytes=len(save(model)),
    )


# --- model container -------------------------------------------------------


def save(model: TrainedModel) -> bytes:
    """Serialize to the PLAD container; identical models give identical bytes."""
    w = ByteWriter()
    w.raw(MODEL_MAGIC)
    w.u16(MODEL_VERSION)
    w.u8(model.algorithm_id)

    cfg = model.extractor
    w.u8(cfg.kind.value)
    w.u16(cfg.base_grid)
    w.u8(len(cfg.scales))
    for s in cfg.scales:
        w.u16(s)
    w.utf8(cfg.import_path or "")

    cal = model.calibration
    w.f64(cal.threshold)
    w.f64(cal.scale)
    w.f64(cal.train_score_max)
    w.f64(cal.train_score_median)

    det = model.detector
    if model.algorithm_id == ALGORITHM_PADIM:
        w.u16(det.grid_h)
        w.u16(det.grid_w)
        w.u16(det.dim)
        w.f64(det.epsilon)
        w.u64(det.reduce_seed & _U64_MASK)
        w.u32(det.n_train)
        w.f32_array(det.means)
        w.f32_array(det.chol)
    else:
        w.u16(det.dim)
        w.u64(det.n_source)
        w.f64(det.coreset_ratio)
        w.u64(det.coreset_seed & _U64_MASK)
        w.f32_array(det.vectors)
    return w.finish_with_crc()


def _parse_body(body: bytes) -> TrainedModel:
    r = ByteReader(body)
    if r.raw(4) != MODEL_MAGIC:
        raise FramingError(f"bad magic, expected {MODEL_MAGIC!r}")
    version = r.u16()
    if version != MODEL_VERSION:
        raise UnsupportedModelError(f"unknown container version {version}")
    algorithm_id = r.u8()
    if algorithm_id not in ALGORITHM_NAMES:
        raise UnsupportedModelError(f"unknown algorithm id {algorithm_id}")

    kind = ExtractorKind(r.u8())
    base_grid = r.u16()
    scales = tuple(r.u16() for _ in range(r.u8()))
    import_path = r.utf8() or None
    cfg = ExtractorConfig(
        kind=kind, base_grid=base_grid, scales=scales, import_path=import_path
    )

    cal = postprocess.Calibration(
        threshold=r.f64(),
        scale=r.f64(),
        train_score_max=r.f64(),
        train_score_median=r.f64(),
    )

    if algorithm_id == ALGORITHM_PADIM:
        gh, gw, dim = r.u16(), r.u16(), r.u16()
        epsilon = r.f64()
        reduce_seed = r.u64()
        n_train = r.u32()
        means = r.f32_array().reshape(gh, gw, dim)
        chol = r.f32_array().reshape(gh, gw, dim, dim)
        detector = padim.bank_from_cholesky(means, chol, epsilon, reduce_seed, n_train)
    else:
        dim = r.u16()
        n_source = r.u64()
        coreset_ratio = r.f64()
        coreset_seed = r.u64()
        vectors = r.f32_array().reshape(-1, dim)
        detector = patchcore.MemoryBank(
            vectors=vectors,
            coreset_ratio=coreset_ratio,
            coreset_seed=coreset_seed,
            n_source=n_source,
        )
    r.expect_end()
    return TrainedModel(
        algorithm_id=algorithm_id, extractor=cfg, calibration=cal, detector=detector
    )


def load(data: bytes) -> TrainedModel:
    """Parse a PLAD container; never returns a partial model.

    The CRC covers every preceding byte: any single flipped byte fails the
    check. Files whose own length prefixes run past the end are reported as
    truncation (framing) rather than corruption.
    """
    min_len = len(MODEL_MAGIC) + 2 + 1 + 4
    if len(data) < min_len:
        raise FramingError(f"container too short ({len(data)} bytes)")
    body, tail = data[:-4], data[-4:]
    crc_ok = zlib.crc32(body) == struct.unpack("<I", tail)[0]

    parse_error: Optional[Exception] = None
    model = None
    try:
        model = _parse_body(body)
    except (FramingError, UnsupportedModelError, ValueError) as exc:
        parse_error = exc

    if not crc_ok:
        if isinstance(parse_error, FramingError):
            raise FramingError(f"truncated or invalid container: {parse_error}")
        raise CorruptModelError("CRC32 mismatch: container bytes are corrupted")
    if parse_error is not None:
        raise parse_error
    return model


# --- benchmark harness -----------------------------------------------------


@dataclass
class BenchRecord:
    algorithm: str
    n_train: int
    train_seconds: float
    inference_seconds_total: float
    inference_seconds_per_image: float
    peak_model_bytes: int
    auroc: float
    f1_macro: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _bench_composition(size: int):
    """Split one benchmark dataset size into train/test-normal/test-anomalous.

    Normals are split 2:1 between training and testing, and the test set is
    held at 75% normal / 25% anomalous; sizes divisible by 10 come out
    exactly (20 -> 12/6/2, 50 -> 30/15/5, 80 -> 48/24/8).
    """
    n_anom = max(1, size // 10)
    n_test_normal = 3 * n_anom
    n_train = size - n_test_normal - n_anom
    if n_train < 2:
        raise ValueError(f"bench size {size} too small")
    return n_train, n_test_normal, n_anom


def _bench_defect_counts(n_anom: int) -> dict:
    counts = {}
    for i in range(n_anom):
        d = synthgear.DEFECTS[i % len(synthgear.DEFECTS)]
        counts[d] = counts.get(d, 0) + 1
    return counts


def bench(layout_sizes, algorithms, seed: int, workdir) -> list:
    """Generate, train, and evaluate at each (size, algorithm) combination."""
    workdir = Path(workdir)
    records = []
    for size in layout_sizes:
        n_train, n_test_normal, n_anom = _bench_composition(size)
        root = workdir / f"size_{size}"
        if not (root / "manifest.json").exists():
            synthgear.generate_dataset(
                root,
                n_train_normal=n_train,
                n_test_normal=n_test_normal,
                n_test_per_defect=_bench_defect_counts(n_anom),
                master_seed=synthgear.derive_image_seed(seed, "bench", "root", size),
            )
        layout = scan_layout(root)
        for algorithm in algorithms:
            model = train(layout, algorithm, seed=seed)
            report = evaluate(model, layout)
            n_test = report.confusion.total
            records.append(
                BenchRecord(
                    algorithm=ALGORITHM_NAMES[algorithm],
                    n_train=n_train,
                    train_seconds=model.train_seconds,
                    inference_seconds_total=report.timings["inference_seconds"],
                    inference_seconds_per_image=report.timings["inference_seconds"]
                    / n_test,
                    peak_model_bytes=report.peak_model_bytes,
                    auroc=report.auroc,
                    f1_macro=report.f1_macro,
                )
            )
    return records


def bench_json(records) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2)


def bench_table(records) -> str:
    """Aligned plain-text table of benchmark records."""
    headers = [
        "algorithm",
        "n_train",
        "train_s",
        "infer_s",
        "infer_s/img",
        "model_bytes",
        "auroc",
        "f1_macro",
    ]
    rows = [
        [
            r.algorithm,
            str(r.n_train),
            f"{r.train_seconds:.3f}",
            f"{r.inference_seconds_total:.3f}",
            f"{r.inference_seconds_per_image:.4f}",
            str(r.peak_model_bytes),
            f"{r.auroc:.4f}",
            f"{r.f1_macro:.4f}",
        ]
        for r in records
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)) for row in rows)
    return "\n".join(lines)
