"""Synthetic benchmark series with known change points.

Three families, all with ``l = n // 3`` structured dimension pairs and the
remaining ``n - 2l`` dimensions i.i.d. N(0, 1):

* ``gaussian``: ``X_1..X_2l`` jointly Gaussian; at each boundary the mean,
  the individual variances, or the correlations change (round robin).
* ``linear``: ``X_1..X_l = A Z``, ``W = B X``, ``X_{l+i} = f(W_i) + e_i`` with
  ``f`` alternating between 2x + 1 and x/3 - 4.
* ``nonlinear``: as linear, cycling through x^2 - 2x, x^3 + 3x + 1,
  log(|x| + 1) and sin(2x).

Change point ``c`` means samples ``1..c`` (1-based) precede the change.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import ortho_group

FAMILIES = ("gaussian", "linear", "nonlinear")

LINEAR_FUNCS = (
    lambda x: 2 * x + 1,
    lambda x: x / 3 - 4,
)
NONLINEAR_FUNCS = (
    lambda x: x**2 - 2 * x,
    lambda x: x**3 + 3 * x + 1,
    lambda x: np.log(np.abs(x) + 1),
    lambda x: np.sin(2 * x),
)

# gaussian family change magnitudes
MEAN_SHIFT = 1.0
VARIANCE_FACTOR = 2.0
CORR_BLOCK = 4


@dataclass(frozen=True)
class GenSpec:
    n: int
    family: str = "gaussian"
    segments: int = 100
    segment_len: int = 2000
    sigma_noise: float = 0.01
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.n < 3:
            raise ValueError(f"n = {self.n} gives l = n // 3 = 0 structured dimensions; need n >= 3")
        if self.segments < 1 or self.segment_len < 1:
            raise ValueError("segments and segment_len must be positive")

    @property
    def l(self) -> int:
        return self.n // 3


def change_points(spec: GenSpec) -> list[int]:
    return [spec.segment_len * i for i in range(1, spec.segments)]


def segment_schedule(spec: GenSpec) -> list[int]:
    """Index of the active function / change type for each segment.

    For the gaussian family entry i > 0 names the change applied at the
    start of segment i (0 mean, 1 variance, 2 correlation).
    """
    if spec.family == "linear":
        return [i % len(LINEAR_FUNCS) for i in range(spec.segments)]
    if spec.family == "nonlinear":
        return [i % len(NONLINEAR_FUNCS) for i in range(spec.segments)]
    return [-1] + [(i - 1) % 3 for i in range(1, spec.segments)]


def _random_correlation(size: int, rng: np.random.Generator) -> np.ndarray:
    """Block-diagonal correlation matrix with randomly rotated blocks."""
    corr = np.eye(size)
    for start in range(0, size, CORR_BLOCK):
        b = min(CORR_BLOCK, size - start)
        if b == 1:
            continue
        q = ortho_group.rvs(b, random_state=rng)
        eig = rng.uniform(0.05, 1.0, size=b)
        eig *= b / eig.sum()
        cov = (q * eig) @ q.T
        d = np.sqrt(np.diag(cov))
        corr[start:start + b, start:start + b] = cov / np.outer(d, d)
    return corr


def _gaussian_block(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    size = 2 * spec.l
    out = np.empty((spec.segments * spec.segment_len, size))
    base_mean = rng.uniform(-1.0, 1.0, size=size)
    base_std = rng.uniform(0.5, 1.5, size=size)
    mean_on = np.zeros(size, dtype=bool)
    var_on = np.zeros(size, dtype=bool)
    corr = _random_correlation(size, rng)
    half = max(1, size // 2)
    for seg, kind in enumerate(segment_schedule(spec)):
        if kind == 0:
            mean_on[rng.choice(size, half, replace=False)] ^= True
        elif kind == 1:
            var_on[rng.choice(size, half, replace=False)] ^= True
        elif kind == 2:
            corr = _random_correlation(size, rng)
        mean = base_mean + MEAN_SHIFT * mean_on
        std = base_std * np.where(var_on, np.sqrt(VARIANCE_FACTOR), 1.0)
        chol = np.linalg.cholesky(corr)
        z = rng.standard_normal((spec.segment_len, size))
        rows = slice(seg * spec.segment_len, (seg + 1) * spec.segment_len)
        out[rows] = mean + (z @ chol.T) * std
    return out


def _functional_block(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    l = spec.l
    funcs = LINEAR_FUNCS if spec.family == "linear" else NONLINEAR_FUNCS
    A = rng.uniform(0.0, 1.0, size=(l, l))
    B = rng.uniform(0.0, 0.5, size=(l, l))
    out = np.empty((spec.segments * spec.segment_len, 2 * l))
    for seg, which in enumerate(segment_schedule(spec)):
        z = rng.standard_normal((spec.segment_len, l))
        x = z @ A.T
        w = x @ B.T
        e = rng.normal(0.0, spec.sigma_noise, size=(spec.segment_len, l))
        rows = slice(seg * spec.segment_len, (seg + 1) * spec.segment_len)
        out[rows, :l] = x
        out[rows, l:] = funcs[which](w) + e
    return out


def generate(spec: GenSpec) -> tuple[np.ndarray, list[int]]:
    """Return the (segments * segment_len) x n series and its change points."""
    rng = np.random.default_rng(spec.seed)
    if spec.family == "gaussian":
        structured = _gaussian_block(spec, rng)
    else:
        structured = _functional_block(spec, rng)
    noise = rng.standard_normal((structured.shape[0], spec.n - structured.shape[1]))
    return np.hstack([structured, noise]), change_points(spec)
