"""Position-agnostic memory bank of normal patch embeddings.

All training patches are pooled, a coreset is picked by greedy k-center
(farthest-point) selection, and test patches are scored by exact distance
to their single nearest bank vector. Memory therefore scales with the
coreset, not with the dataset.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, InsufficientDataError


@dataclass(frozen=True)
class MemoryBank:
    vectors: np.ndarray  # (M, dim), each row is an exact source patch vector
    coreset_ratio: float
    coreset_seed: int
    n_source: int

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def greedy_k_center(points: np.ndarray, m: int, start_index: int) -> np.ndarray:
    """Indices of m centers chosen by farthest-point greedy selection.

    Starting from `start_index`, repeatedly adds the point with maximum
    distance to its nearest already-selected center; ties break toward the
    lowest index. The covering radius of the result is within 2x of the
    optimal k-center radius.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    if not 0 <= start_index < n:
        raise ValueError(f"start_index out of range: {start_index}")

    sq_norms = np.einsum("ij,ij->i", pts, pts)
    selected = np.empty(m, dtype=np.int64)
    selected[0] = start_index
    # Squared distances to the nearest selected center so far.
    d2 = np.maximum(sq_norms - 2.0 * pts @ pts[start_index] + sq_norms[start_index], 0.0)
    for i in range(1, m):
        j = int(np.argmax(d2))
        selected[i] = j
        cand = np.maximum(sq_norms - 2.0 * pts @ pts[j] + sq_norms[j], 0.0)
        np.minimum(d2, cand, out=d2)
    return selected


def fit_patchcore(grids, coreset_ratio: float = 0.1, seed: int = 0) -> MemoryBank:
    """Pool all cells of all grids and keep a greedy k-center coreset.

    The bank holds max(1, round(coreset_ratio * n_source)) rows, every one
    an exact copy of a pooled source vector; the start point of the greedy
    selection is drawn from `seed`.
    """
    if len(grids) == 0:
        raise InsufficientDataError("need at least one training grid")
    if not 0.0 < coreset_ratio <= 1.0:
        raise ValueError(f"coreset_ratio must be in (0, 1], got {coreset_ratio}")
    dims = {np.asarray(g).shape[-1] for g in grids}
    if len(dims) != 1:
        raise DimensionMismatchError(f"training grids disagree on dim: {sorted(dims)}")
    dim = dims.pop()

    pool = np.concatenate(
        [np.asarray(g, dtype=np.float64).reshape(-1, dim) for g in grids], axis=0
    )
    n_source = pool.shape[0]
    m = max(1, int(round(coreset_ratio * n_source)))
    start = int(np.random.default_rng(seed).integers(n_source))
    idx = greedy_k_center(pool, m, start)
    return MemoryBank(
        vectors=pool[idx].copy(),
        coreset_ratio=coreset_ratio,
        coreset_seed=seed,
        n_source=n_source,
    )


def score_patchcore(bank: MemoryBank, grid: np.ndarray) -> np.ndarray:
    """Per-cell Euclidean distance to the nearest bank vector, shape (gh, gw).

    Exact linear scan; bank sizes here never justify an approximate index.
    """
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != bank.dim:
        raise DimensionMismatchError(
            f"grid dim {arr.shape} does not match bank dim {bank.dim}"
        )
    cells = arr.reshape(-1, bank.dim)
    nearest = cdist(cells, bank.vectors, metric="euclidean").min(axis=1)
    return nearest.reshape(arr.shape[0], arr.shape[1])
