"""Quadratic divergence between empirical cdfs and the factorized change score.

For point sets ``p`` (size a) and ``q`` (size b) on a box whose upper corner
is ``hi``, the integral of ``(P - Q)^2`` over the box is

    T_pp / a^2 - 2 T_pq / (a b) + T_qq / b^2,
    T_xy = sum_s sum_t prod_d (hi_d - max(x_sd, y_td)).

The lower corner never appears: below the data both cdfs are 0.  Each sum
splits into per-point contributions, which is what makes an O(m) update per
new sample possible.  The change score over a factor tree is

    delta * sum_edges div2d - sum_{deg(Y) > 1} (deg(Y) - 1) div1d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .factorization import FactorTree, OutOfBoundsError

# kernel tensors are evaluated in blocks of at most this many floats
_BLOCK_FLOATS = 1 << 22

VARIANTS = ("light", "ind", "nf", "np")


class BoundsExceeded(OutOfBoundsError):
    """A new point lies outside [-R, R]; the caller must rescore with a larger R."""


def _as_points(x, dims: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if dims is not None and x.shape[1] != dims:
        raise ValueError(f"expected {dims} coordinates, got {x.shape[1]}")
    return x


def _cross_sum(x: np.ndarray, y: np.ndarray, hi: np.ndarray) -> float:
    total = 0.0
    step = max(1, _BLOCK_FLOATS // max(1, y.shape[0] * x.shape[1]))
    for start in range(0, x.shape[0], step):
        f = hi - np.maximum(x[start:start + step, None, :], y[None, :, :])
        total += float(np.prod(f, axis=2).sum())
    return total


def quadratic_div(p, q, bounds) -> float:
    """Integral of (P - Q)^2 over a box, for point sets in any dimension.

    ``bounds`` is a sequence of ``(lo, hi)`` per coordinate.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    p = _as_points(p, len(bounds))
    q = _as_points(q, len(bounds))
    lo, hi = bounds[:, 0], bounds[:, 1]
    for x in (p, q):
        if x.size and (np.any(x < lo) or np.any(x > hi)):
            raise OutOfBoundsError("points fall outside the integration box")
    a, b = len(p), len(q)
    value = (
        _cross_sum(p, p, hi) / a**2
        - 2.0 * _cross_sum(p, q, hi) / (a * b)
        + _cross_sum(q, q, hi) / b**2
    )
    return value


def div1d(p, q, bound) -> float:
    return quadratic_div(np.ravel(p), np.ravel(q), [bound])


def div2d(p, q, bounds) -> float:
    return quadratic_div(p, q, bounds)


@dataclass(frozen=True)
class TermSet:
    """Which marginals enter the score and with what coefficient.

    ``joint_coef`` adds one term over all k coordinates whose per-axis
    factors are divided by the axis range (keeps the product finite).
    """

    nodes: np.ndarray
    node_coef: np.ndarray
    pairs: np.ndarray
    pair_coef: np.ndarray
    joint_coef: float = 0.0

    @property
    def size(self) -> int:
        return len(self.nodes) + len(self.pairs) + (1 if self.joint_coef else 0)

    @property
    def coefs(self) -> np.ndarray:
        extra = [self.joint_coef] if self.joint_coef else []
        return np.concatenate([self.node_coef, self.pair_coef, extra]).astype(float)

    @classmethod
    def for_variant(cls, variant: str, tree: FactorTree, delta: float) -> "TermSet":
        k = tree.k
        empty_pairs = np.zeros((0, 2), dtype=int)
        if variant in ("light", "np"):
            if k == 1:
                # a single coordinate is its own factorization
                return cls(np.array([0]), np.array([1.0]), empty_pairs, np.zeros(0))
            deg = tree.degree
            nodes = np.flatnonzero(deg > 1)
            pairs = tree.edge_pairs()
            return cls(nodes, -(deg[nodes] - 1.0), pairs, np.full(len(pairs), float(delta)))
        if variant == "ind":
            return cls(np.arange(k), np.full(k, float(delta)), empty_pairs, np.zeros(0))
        if variant == "nf":
            return cls(np.zeros(0, dtype=int), np.zeros(0), empty_pairs, np.zeros(0), joint_coef=1.0)
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")

    def features(self, f: np.ndarray, span: float) -> np.ndarray:
        """Per-term kernel values from per-axis factors ``f[..., k]``."""
        parts = [f[..., self.nodes]]
        if len(self.pairs):
            parts.append(f[..., self.pairs[:, 0]] * f[..., self.pairs[:, 1]])
        if self.joint_coef:
            parts.append(np.prod(f / span, axis=-1, keepdims=True))
        return np.concatenate(parts, axis=-1)


def _term_sums(x: np.ndarray, y: np.ndarray, hi: float, terms: TermSet, span: float) -> np.ndarray:
    """``out[t, j] = sum_s K_t(x_s, y_j)`` for every term t; shape (terms, len(y))."""
    out = np.empty((terms.size, y.shape[0]))
    step = max(1, _BLOCK_FLOATS // max(1, x.shape[0] * x.shape[1]))
    for start in range(0, y.shape[0], step):
        f = hi - np.maximum(x[:, None, :], y[None, start:start + step, :])
        out[:, start:start + step] = terms.features(f, span).sum(axis=0).T
    return out


@dataclass
class DivergenceState:
    """Cached per-point contributions for incremental scoring.

    ``test`` is a ring buffer; ``cursor`` marks the oldest row, which the
    next :func:`update` replaces.  ``cross[t, j]`` is the summed kernel
    between all reference points and test point j for term t; ``rows[t, j]``
    the same against all test points.
    """

    ref: np.ndarray
    test: np.ndarray
    tree: FactorTree
    variant: str
    bound: float
    terms: TermSet
    ref_totals: np.ndarray
    cross: np.ndarray
    rows: np.ndarray
    cursor: int = 0
    score: float = 0.0

    @property
    def delta(self) -> float:
        return 2.0 * self.bound

    @property
    def k(self) -> int:
        return self.ref.shape[1]

    def term_divs(self) -> np.ndarray:
        a, b = self.ref.shape[0], self.test.shape[0]
        return self.ref_totals / a**2 - 2.0 * self.cross.sum(axis=1) / (a * b) + self.rows.sum(axis=1) / b**2

    def recompute_score(self) -> float:
        value = float(self.terms.coefs @ self.term_divs())
        # round-off below zero is clamped; the true value is non-negative
        if -1e-9 <= value < 0.0:
            value = 0.0
        return value


def _check_coverage(bound: float, *arrays: np.ndarray):
    for x in arrays:
        if x.size and np.abs(x).max() > bound:
            raise OutOfBoundsError(
                f"|value| {np.abs(x).max():.6g} exceeds R = {bound:.6g}; delta = 2R is too small"
            )


def score(
    ref_trans,
    test_trans,
    tree: FactorTree,
    delta: float,
    variant: str = "light",
) -> tuple[float, DivergenceState]:
    """Full O(m^2 k) evaluation of the change score.

    Coordinates are integrated over ``[-R, R]`` with ``R = delta / 2``.
    """
    ref = _as_points(ref_trans).copy()
    test = _as_points(test_trans, ref.shape[1]).copy()
    if tree.k != ref.shape[1]:
        raise ValueError(f"tree has {tree.k} nodes but data has {ref.shape[1]} coordinates")
    bound = delta / 2.0
    if not bound > 0:
        raise ValueError("delta must be positive")
    _check_coverage(bound, ref, test)
    terms = TermSet.for_variant(variant, tree, delta)
    span = 2.0 * bound
    state = DivergenceState(
        ref=ref,
        test=test,
        tree=tree,
        variant=variant,
        bound=bound,
        terms=terms,
        ref_totals=_term_sums(ref, ref, bound, terms, span).sum(axis=1),
        cross=_term_sums(ref, test, bound, terms, span),
        rows=_term_sums(test, test, bound, terms, span),
    )
    state.score = state.recompute_score()
    return state.score, state


def rescore(state: DivergenceState, bound: Optional[float] = None) -> float:
    """Rebuild every cache, optionally with a new bound R (delta = 2R)."""
    test = np.roll(state.test, -state.cursor, axis=0)
    _, fresh = score(state.ref, test, state.tree, 2.0 * (bound or state.bound), state.variant)
    for name in ("test", "bound", "terms", "ref_totals", "cross", "rows", "score"):
        setattr(state, name, getattr(fresh, name))
    state.cursor = 0
    return state.score


def update(state: DivergenceState, added, evicted=None) -> float:
    """Replace the oldest test point with ``added`` in O(m k).

    Raises :class:`BoundsExceeded` (leaving the state untouched) when
    ``added`` is outside ``[-R, R]``.
    """
    added = np.asarray(added, dtype=float).reshape(-1)
    if added.size != state.k:
        raise ValueError(f"expected {state.k} coordinates, got {added.size}")
    if np.abs(added).max() > state.bound:
        raise BoundsExceeded(f"|value| {np.abs(added).max():.6g} exceeds R = {state.bound:.6g}")
    j = state.cursor
    old = state.test[j].copy()
    if evicted is not None and not np.array_equal(np.asarray(evicted, dtype=float).reshape(-1), old):
        raise ValueError("evicted point does not match the oldest cached test point")
    hi, span, terms = state.bound, 2.0 * state.bound, state.terms

    k_old = terms.features(hi - np.maximum(state.test, old), span).T
    state.test[j] = added
    k_new = terms.features(hi - np.maximum(state.test, added), span).T
    state.cross[:, j] = terms.features(hi - np.maximum(state.ref, added), span).sum(axis=0)
    state.rows += k_new - k_old
    state.rows[:, j] = k_new.sum(axis=1)
    state.cursor = (j + 1) % state.test.shape[0]
    state.score = state.recompute_score()
    return state.score


def subsample(trans, epsilon: float, seed: Optional[int] = None) -> np.ndarray:
    """Draw ceil(epsilon * m) rows uniformly with replacement."""
    trans = np.asarray(trans, dtype=float)
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    m = trans.shape[0]
    size = max(1, math.ceil(epsilon * m - 1e-9))
    idx = np.random.default_rng(seed).integers(0, m, size=size)
    return trans[idx]


def edge_bound_gap(p, q, i: int, j: int, bounds: Sequence) -> float:
    """``range_j * div2d(i, j) - div1d(i)``, the slack of the edge inequality."""
    p, q = _as_points(p), _as_points(q)
    bi, bj = bounds[i], bounds[j]
    d1 = div1d(p[:, i], q[:, i], bi)
    d2 = div2d(p[:, [i, j]], q[:, [i, j]], [bi, bj])
    return (bj[1] - bj[0]) * d2 - d1
