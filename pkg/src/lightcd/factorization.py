"""Pairwise dependency scores in PCA space and the maximum spanning tree.

The dependency between two coordinates is the quadratic measure

    corr(a, b) = integral of (P(y_a, y_b) - P(y_a) P(y_b))^2

over empirical step-function cdfs.  With ``M_a[s, t] = hi - max(a_s, a_t)``
(the integral of ``1[a_s <= y] 1[a_t <= y]`` over the domain) it expands to

    (1/m^2) <M_a, M_b> - (2/m^3) sum_s R_a[s] R_b[s] + (1/m^4) S_a S_b

with ``R`` the row sums and ``S`` the total of ``M``.  That is the same as
``(1/m^2) <H M_a H, H M_b H>`` for the centering matrix ``H``, which is the
form the AMS sketch estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .core import LightError


class OutOfBoundsError(LightError, ValueError):
    """Values fall outside the integration bounds they are paired with."""


def _check_bounds(x: np.ndarray, bounds: Sequence[float], name: str = "values"):
    lo, hi = float(bounds[0]), float(bounds[1])
    if x.size and (x.min() < lo or x.max() > hi):
        raise OutOfBoundsError(
            f"{name} span [{x.min():.6g}, {x.max():.6g}] outside bounds [{lo:.6g}, {hi:.6g}]"
        )


def pairwise_max_sums(x: np.ndarray) -> np.ndarray:
    """``r[s] = sum_t max(x_s, x_t)`` in O(m log m)."""
    x = np.asarray(x, dtype=float)
    m = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    # elements at or before position p contribute x_p, later ones themselves
    suffix = np.concatenate([np.cumsum(xs[::-1])[::-1][1:], [0.0]])
    # equal values: max is the same either way, so position order is fine
    r_sorted = xs * np.arange(1, m + 1) + suffix
    r = np.empty(m)
    r[order] = r_sorted
    return r


def _row_sums(x: np.ndarray, hi: float) -> np.ndarray:
    return x.size * hi - pairwise_max_sums(x)


def _gram_inner(a: np.ndarray, b: np.ndarray, hi_a: float, hi_b: float, block: int = 512) -> float:
    """<M_a, M_b> by blocked O(m^2) evaluation."""
    total = 0.0
    for start in range(0, a.size, block):
        sl = slice(start, start + block)
        ma = hi_a - np.maximum(a[sl, None], a[None, :])
        mb = hi_b - np.maximum(b[sl, None], b[None, :])
        total += float(np.einsum("ij,ij->", ma, mb))
    return total


def dependency_exact(a, b, bounds_a, bounds_b) -> float:
    """Exact quadratic dependency between two samples of equal length."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("a and b must be non-empty 1-D arrays of equal length")
    _check_bounds(a, bounds_a, "a")
    _check_bounds(b, bounds_b, "b")
    m = a.size
    hi_a, hi_b = float(bounds_a[1]), float(bounds_b[1])
    ra, rb = _row_sums(a, hi_a), _row_sums(b, hi_b)
    value = (
        _gram_inner(a, b, hi_a, hi_b) / m**2
        - 2.0 * float(ra @ rb) / m**3
        + float(ra.sum()) * float(rb.sum()) / m**4
    )
    return value


@dataclass(frozen=True)
class SketchBasis:
    """Random sign vectors for the bilinear AMS sketch ``u^T M w``.

    ``u`` and ``w`` have shape (s2, s1, m).  They are drawn once and reused
    for every dimension and pair within an epoch.
    """

    u: np.ndarray
    w: np.ndarray
    seed: Optional[int] = None

    @classmethod
    def generate(cls, m: int, s1: int = 50, s2: int = 3, seed: Optional[int] = None) -> "SketchBasis":
        if s1 < 1 or s2 < 1 or m < 1:
            raise ValueError("s1, s2 and m must be positive")
        rng = np.random.default_rng(seed)
        u = rng.integers(0, 2, size=(s2, s1, m), dtype=np.int8) * 2 - 1
        w = rng.integers(0, 2, size=(s2, s1, m), dtype=np.int8) * 2 - 1
        return cls(u=u.astype(np.int8), w=w.astype(np.int8), seed=seed)

    @property
    def s1(self) -> int:
        return self.u.shape[1]

    @property
    def s2(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[2]


def sketch_values(x: np.ndarray, basis: SketchBasis) -> np.ndarray:
    """Bilinear sketches ``u~_i^T M_x w~_j`` for all i, j in each group.

    Returns shape (s2, s1, s1).  ``u~`` and ``w~`` are the mean-removed sign
    vectors, so the sketch targets the double-centred ``H M_x H`` and the
    ``hi`` term cancels.  Uses one sort plus prefix sums:
    sum_{s,t} u_s w_t max(x_s, x_t) = sum_p x_p (u_p W[<=p] + w_p U[<p]).
    Pairing every u with every w in a group costs O(s1^2 m) and cuts the
    variance of the near rank-one kernels well below one product per pair.
    """
    x = np.asarray(x, dtype=float)
    if x.size != basis.m:
        raise ValueError(f"basis prepared for m={basis.m}, got {x.size}")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    out = np.empty((basis.s2, basis.s1, basis.s1))
    for g in range(basis.s2):
        u = basis.u[g].astype(float)[:, order]
        w = basis.w[g].astype(float)[:, order]
        u -= u.mean(axis=1, keepdims=True)
        w -= w.mean(axis=1, keepdims=True)
        wc = np.cumsum(w, axis=1)
        uc = np.cumsum(u, axis=1) - u
        out[g] = -((u * xs) @ wc.T + uc @ (w * xs).T)
    return out


def combine_sketches(xa: np.ndarray, xb: np.ndarray, m: int) -> float:
    """Median over groups of the mean product, scaled by 1/m^2."""
    return float(np.median(np.mean(xa * xb, axis=(1, 2)))) / m**2


def dependency_sketch(a, b, bounds_a, bounds_b, basis: SketchBasis) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_bounds(a, bounds_a, "a")
    _check_bounds(b, bounds_b, "b")
    return combine_sketches(sketch_values(a, basis), sketch_values(b, basis), a.size)


@dataclass
class FactorTree:
    k: int
    edges: list = field(default_factory=list)

    @property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.k, dtype=int)
        for i, j, _ in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    @property
    def weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def edge_pairs(self) -> np.ndarray:
        return np.array([(i, j) for i, j, _ in self.edges], dtype=int).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {"k": self.k, "edges": [[int(i), int(j), float(w)] for i, j, w in self.edges]}


def build_tree(weights: np.ndarray) -> FactorTree:
    """Maximum spanning tree of a dense weighted graph, O(k^2) Prim.

    Among crossing edges of equal weight the lexicographically smallest
    ``(min(i, j), max(i, j))`` is taken.
    """
    w = np.asarray(weights, dtype=float)
    k = w.shape[0]
    if w.shape != (k, k):
        raise ValueError("weights must be square")
    if k < 2:
        return FactorTree(k=k)
    in_tree = np.zeros(k, dtype=bool)
    in_tree[0] = True
    best_w = w[0].copy()
    best_from = np.zeros(k, dtype=int)
    edges = []
    for _ in range(k - 1):
        cand = np.flatnonzero(~in_tree)
        top = best_w[cand].max()
        tied = cand[best_w[cand] == top]
        lo = np.minimum(best_from[tied], tied)
        hi = np.maximum(best_from[tied], tied)
        pick = np.lexsort((hi, lo))[0]
        v = int(tied[pick])
        edges.append((int(lo[pick]), int(hi[pick]), float(top)))
        in_tree[v] = True
        # v may now offer a better (or equal but lexicographically smaller) edge
        row = w[v]
        out = ~in_tree
        better = out & (row > best_w)
        equal = out & (row == best_w)
        if equal.any():
            idx = np.flatnonzero(equal)
            cur = np.stack([np.minimum(best_from[idx], idx), np.maximum(best_from[idx], idx)], 1)
            new = np.stack([np.minimum(v, idx), np.maximum(v, idx)], 1)
            smaller = (new[:, 0] < cur[:, 0]) | ((new[:, 0] == cur[:, 0]) & (new[:, 1] < cur[:, 1]))
            better[idx[smaller]] = True
        best_w[better] = row[better]
        best_from[better] = v
    return FactorTree(k=k, edges=edges)


def dependency_matrix(
    trans: np.ndarray,
    bound: float,
    basis: Optional[SketchBasis] = None,
    exact: bool = False,
) -> np.ndarray:
    """Symmetric k x k matrix of pairwise dependencies (zero diagonal)."""
    trans = np.asarray(trans, dtype=float)
    m, k = trans.shape
    bounds = (-bound, bound)
    _check_bounds(trans, bounds, "transformed data")
    weights = np.zeros((k, k))
    if exact:
        for i, j in combinations(range(k), 2):
            weights[i, j] = weights[j, i] = dependency_exact(trans[:, i], trans[:, j], bounds, bounds)
        return weights
    if basis is None:
        raise ValueError("a SketchBasis is required unless exact=True")
    sk = np.stack([sketch_values(trans[:, i], basis) for i in range(k)])
    sk = sk.reshape(k, basis.s2, -1)
    group_means = np.einsum("igs,jgs->ijg", sk, sk) / sk.shape[2]
    weights = np.median(group_means, axis=2) / m**2
    np.fill_diagonal(weights, 0.0)
    return weights


def build_structure(
    ref_trans: np.ndarray,
    bound: float,
    basis: Optional[SketchBasis] = None,
    exact: bool = False,
) -> FactorTree:
    ref_trans = np.asarray(ref_trans, dtype=float)
    k = ref_trans.shape[1]
    if k < 2:
        return FactorTree(k=k)
    return build_tree(dependency_matrix(ref_trans, bound, basis, exact))
