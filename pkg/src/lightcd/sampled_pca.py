"""PCA of the reference window through column sampling.

Instead of diagonalising the n x n matrix ``A^T A`` we pick ``c`` columns of
the centered window ``A`` (m x n) into ``C`` and diagonalise the c x c Gram
matrix ``C^T C``.  Its eigenpairs give the left factor ``U_k`` and singular
values directly; the right factor is recovered as ``A^T U_k Sigma_k^{-1}``.
Total cost is O(m c^2 + m n k).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionMismatchError, LightError

# eigenvalues below this fraction of the largest are discarded
RELATIVE_EIG_FLOOR = 1e-10


class DegenerateWindowError(LightError):
    """Raised when the reference window carries no variance."""


@dataclass(frozen=True)
class ProjectionModel:
    col_means: np.ndarray
    selected_cols: np.ndarray
    v_k: np.ndarray
    singular_values: np.ndarray
    variance_fraction: float
    r_bound: float
    # 1/sqrt(c p_j) factors of the stochastic sampler; None when unscaled
    col_scales: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return self.v_k.shape[1]

    @property
    def c(self) -> int:
        return len(self.selected_cols)

    @property
    def n(self) -> int:
        return self.v_k.shape[0]

    @property
    def is_degenerate(self) -> bool:
        return self.singular_values.size == 0

    @classmethod
    def zero(cls, col_means: np.ndarray, r_bound: float = 1.0) -> "ProjectionModel":
        """Fallback for a constant window: one all-zero projection axis."""
        n = len(col_means)
        return cls(
            col_means=np.asarray(col_means, dtype=float),
            selected_cols=np.arange(0),
            v_k=np.zeros((n, 1)),
            singular_values=np.zeros(0),
            variance_fraction=1.0,
            r_bound=r_bound,
        )


def center_columns(window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] == 0:
        raise ValueError("window must be a non-empty 2-D array")
    means = window.mean(axis=0)
    return window - means, means


def column_bound(centered: np.ndarray) -> float:
    """sqrt(sum_i max(lo_i^2, hi_i^2)) over per-column extremes.

    Any unit-norm projection of any row is bounded by this in magnitude.
    """
    lo = centered.min(axis=0)
    hi = centered.max(axis=0)
    return float(np.sqrt(np.sum(np.maximum(lo * lo, hi * hi))))


def select_columns(centered: np.ndarray, c: int) -> np.ndarray:
    """Indices of the ``c`` columns with largest squared norm, ascending.

    Ties go to the lower column index.
    """
    n = centered.shape[1]
    if not 1 <= c <= n:
        raise ValueError(f"c must be in [1, {n}], got {c}")
    sq = np.einsum("ij,ij->j", centered, centered)
    # stable sort on -sq keeps lower indices first among equal norms
    order = np.argsort(-sq, kind="stable")
    return np.sort(order[:c])


def sample_columns(centered: np.ndarray, c: int, rng: np.random.Generator):
    """Draw ``c`` columns with replacement, p_j proportional to |A^(j)|^2.

    Returns the drawn indices and the 1/sqrt(c p_j) rescaling factors.
    """
    sq = np.einsum("ij,ij->j", centered, centered)
    total = sq.sum()
    if total <= 0:
        raise DegenerateWindowError("window has zero variance")
    p = sq / total
    idx = rng.choice(len(p), size=c, replace=True, p=p)
    return idx, 1.0 / np.sqrt(c * p[idx])


def fit(
    centered: np.ndarray,
    c: int,
    variance_fraction: float = 0.9,
    col_means: Optional[np.ndarray] = None,
    deterministic: bool = True,
    seed: Optional[int] = None,
    r_bound: Optional[float] = None,
) -> tuple[ProjectionModel, np.ndarray]:
    """Fit the projection model on a centered reference window.

    Parameters
    ----------
    centered : (m, n) array
        Column-centered reference window ``A``.
    c : int
        Number of columns to sample; clipped to ``min(m, n)``.
    variance_fraction : float
        ``k`` is the smallest count of leading eigenvalues of ``C^T C`` whose
        mass reaches this fraction of the total.
    col_means : array, optional
        Means removed from the raw window, stored for transforming test data.
    deterministic : bool
        Take the top-``c`` columns by squared norm (no rescaling) instead of
        the norm-proportional sampler.
    r_bound : float, optional
        Coordinate bound; defaults to :func:`column_bound` of ``centered``.

    Returns
    -------
    model : ProjectionModel
    ref_trans : (m, k) array
        ``centered @ model.v_k``; equal to ``U_k Sigma_k`` when ``c = n``.
    """
    centered = np.asarray(centered, dtype=float)
    m, n = centered.shape
    if not 0 < variance_fraction <= 1:
        raise ValueError("variance_fraction must lie in (0, 1]")
    c = max(1, min(int(c), m, n))
    if col_means is None:
        col_means = np.zeros(n)
    if r_bound is None:
        r_bound = column_bound(centered)

    if deterministic:
        cols = select_columns(centered, c)
        scale = None
        C = centered[:, cols]
    else:
        cols, scale = sample_columns(centered, c, np.random.default_rng(seed))
        C = centered[:, cols] * scale

    alpha, Y = np.linalg.eigh(C.T @ C)
    alpha, Y = alpha[::-1], Y[:, ::-1]
    scale_ref = max(float(np.abs(C).max()) ** 2 * m, np.finfo(float).tiny)
    if alpha[0] <= 1e-12 * scale_ref:
        raise DegenerateWindowError("reference window has no variance")
    total = alpha[alpha > 0].sum()
    keep = int(np.sum(alpha > RELATIVE_EIG_FLOOR * alpha[0]))
    cum = np.cumsum(alpha[:keep])
    k = int(np.searchsorted(cum, variance_fraction * total * (1 - 1e-12))) + 1
    k = min(k, keep)

    sv = np.sqrt(alpha[:k])
    U = (C @ Y[:, :k]) / sv
    v_k = (centered.T @ U) / sv
    # sampled case: A^T U Sigma^{-1} is only approximately orthonormal;
    # re-orthonormalise so projections stay within r_bound
    q, r = np.linalg.qr(v_k)
    v_k = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))

    model = ProjectionModel(
        col_means=np.asarray(col_means, dtype=float),
        selected_cols=np.asarray(cols),
        v_k=v_k,
        singular_values=sv,
        variance_fraction=float(variance_fraction),
        r_bound=float(r_bound),
        col_scales=scale,
    )
    return model, centered @ v_k


def sampled_matrix(centered: np.ndarray, model: ProjectionModel) -> np.ndarray:
    """The c-column matrix ``C`` the model was fitted on."""
    C = np.asarray(centered, dtype=float)[:, model.selected_cols]
    return C if model.col_scales is None else C * model.col_scales


def left_factor(centered: np.ndarray, model: ProjectionModel) -> np.ndarray:
    """``U_k = C y_i / sqrt(alpha_i)`` for the model's leading eigenpairs of ``C^T C``."""
    C = sampled_matrix(centered, model)
    alpha, Y = np.linalg.eigh(C.T @ C)
    Y = Y[:, ::-1][:, : model.k]
    return (C @ Y) / model.singular_values


def transform(model: ProjectionModel, window: np.ndarray) -> np.ndarray:
    window = np.asarray(window, dtype=float)
    if window.shape[-1] != model.n:
        raise DimensionMismatchError(model.n, window.shape[-1])
    return (window - model.col_means) @ model.v_k
