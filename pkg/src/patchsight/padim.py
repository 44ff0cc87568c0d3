"""Per-position Gaussian model of normal patch embeddings.

Fits one multivariate Gaussian per grid cell over the training images and
scores test cells by Mahalanobis distance. Covariances are regularized with
epsilon * I so they stay positive definite even when the number of training
images is far below the embedding dimension.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InsufficientDataError, NumericError

DEFAULT_EPSILON = 0.01


@dataclass(frozen=True)
class GaussianBank:
    means: np.ndarray  # (grid_h, grid_w, dim)
    chol: np.ndarray  # (grid_h, grid_w, dim, dim) lower Cholesky of cov + eps*I
    inv_cov: np.ndarray  # (grid_h, grid_w, dim, dim)
    epsilon: float
    reduce_seed: int
    n_train: int

    @property
    def grid_h(self) -> int:
        return self.means.shape[0]

    @property
    def grid_w(self) -> int:
        return self.means.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]


def _inverse_from_cholesky(chol: np.ndarray) -> np.ndarray:
    # inv(L L^T) = inv(L)^T inv(L), computed once at fit/load time so scoring
    # never inverts anything.
    l_inv = np.linalg.inv(chol)
    return np.einsum("...ki,...kj->...ij", l_inv, l_inv)


def bank_from_cholesky(
    means: np.ndarray, chol: np.ndarray, epsilon: float, reduce_seed: int, n_train: int
) -> GaussianBank:
    """Assemble a bank from stored means and Cholesky factors."""
    return GaussianBank(
        means=means,
        chol=chol,
        inv_cov=_inverse_from_cholesky(chol),
        epsilon=epsilon,
        reduce_seed=reduce_seed,
        n_train=n_train,
    )


def fit_padim(grids, epsilon: float = DEFAULT_EPSILON, reduce_seed: int = 0) -> GaussianBank:
    """Fit per-cell mean and regularized covariance over normal feature grids.

    Uses the population covariance (divide by N); with the tiny training
    sets this model targets, the 1/N vs 1/(N-1) difference is absorbed by
    the epsilon ridge anyway.
    """
    if len(grids) < 2:
        raise InsufficientDataError(f"need >= 2 training grids, got {len(grids)}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    shapes = {np.asarray(g).shape for g in grids}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"training grids disagree on shape: {sorted(shapes)}")

    stack = np.stack([np.asarray(g, dtype=np.float64) for g in grids])  # (N, gh, gw, d)
    n = stack.shape[0]
    dim = stack.shape[3]
    means = stack.mean(axis=0)
    centered = stack - means
    cov = np.einsum("nhwi,nhwj->hwij", centered, centered) / n
    cov += epsilon * np.eye(dim)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky failed despite epsilon={epsilon}: {exc}") from exc
    return bank_from_cholesky(means, chol, epsilon, reduce_seed, n)


def score_padim(bank: GaussianBank, grid: np.ndarray) -> np.ndarray:
    """Per-cell Mahalanobis distance of one feature grid, shape (grid_h, grid_w).

    Solves against the precomputed Cholesky factors: with cov = L L^T,
    dist^2 = ||L^-1 (x - mu)||^2.
    """
    arr = np.asarray(grid, dtype=np.float64)
    if arr.shape != bank.means.shape:
        raise DimensionMismatchError(
            f"grid shape {arr.shape} does not match bank {bank.means.shape}"
        )
    diff = arr - bank.means
    y = np.linalg.solve(bank.chol, diff[..., None])[..., 0]
    return np.sqrt(np.einsum("hwi,hwi->hw", y, y))
