"""Patch-based visual anomaly detection trained on normal images only.

Two detectors over the same patch-embedding front end: a per-grid-cell
Gaussian model scored by Mahalanobis distance, and a position-agnostic
coreset memory bank scored by nearest-neighbour distance. Ships with a
deterministic synthetic gear-tray dataset generator, image-level metrics
(AUROC, F1-macro), heatmap rendering, a checksummed binary model container,
and a timing/memory benchmark harness.
"""

from .errors import (
    CorruptModelError,
    DecodeError,
    DimensionMismatchError,
    FramingError,
    InsufficientDataError,
    MissingEmbeddingError,
    NumericError,
    PatchsightError,
    UndefinedMetricError,
    UnsupportedFormatError,
    UnsupportedModelError,
)
from .features import ExtractorConfig, ExtractorKind, extract, reduce_dims
from .imaging import (
    CANONICAL_SIZE,
    adjust_brightness,
    decode_png,
    encode_png,
    resize_bilinear,
)
from .metrics import ConfusionMatrix, EvalReport, auroc, confusion, f1_macro
from .padim import GaussianBank, fit_padim, score_padim
from .patchcore import MemoryBank, fit_patchcore, greedy_k_center, score_patchcore
from .pipeline import (
    ALGORITHM_PADIM,
    ALGORITHM_PATCHCORE,
    BenchRecord,
    DatasetLayout,
    PadimHyper,
    PatchcoreHyper,
    TrainedModel,
    bench,
    evaluate,
    load,
    save,
    scan_layout,
    score_image,
    split_train_test,
    train,
)
from .postprocess import (
    Calibration,
    Label,
    Verdict,
    calibrate,
    image_score,
    render_heatmap,
    smooth_map,
    verdict,
)
from .synthgear import (
    DEFECTS,
    JitterSpec,
    ProductCondition,
    SceneSpec,
    SetupCondition,
    generate_dataset,
    grid_specs,
    render,
    render_with_mask,
)

__version__ = "0.1.0"
