import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import (
    grid_div1d,
    grid_div2d,
    kl,
    marginal,
    pipeline_windows,
    random_tree,
    random_tree_distribution,
    spanning_trees,
)
from lightcd.divergence import (
    BoundsExceeded,
    TermSet,
    div1d,
    div2d,
    edge_bound_gap,
    quadratic_div,
    rescore,
    score,
    subsample,
    update,
)
from lightcd.factorization import FactorTree, OutOfBoundsError


# -- closed forms ------------------------------------------------------------


def test_div1d_examples():
    assert div1d([0.2, 0.7, 0.7], [0.7, 0.2, 0.7], (0, 1)) == pytest.approx(0.0, abs=1e-15)
    assert div1d([0.0], [1.0], (0, 1)) == pytest.approx(1.0)
    assert div1d([0.0], [0.5], (0, 1)) == pytest.approx(0.5)


def test_div2d_examples():
    p = np.array([[0.1, 0.4], [0.3, 0.2]])
    assert div2d(p, p[::-1], [(0, 1), (0, 1)]) == pytest.approx(0.0, abs=1e-15)
    assert div2d([[0.0, 0.0]], [[1.0, 1.0]], [(0, 1), (0, 1)]) == pytest.approx(1.0)


def test_div1d_matches_grid_oracle():
    rng = np.random.default_rng(0)
    p, q = rng.normal(size=20), rng.normal(0.5, 1.3, size=20)
    bound = (-6.0, 6.0)
    assert div1d(p, q, bound) == pytest.approx(grid_div1d(p, q, bound), abs=1e-3)


def test_div2d_matches_grid_oracle():
    rng = np.random.default_rng(1)
    p = rng.uniform(-1, 1, size=(20, 2))
    q = rng.uniform(-0.5, 1, size=(20, 2))
    bounds = [(-1.0, 1.0), (-1.0, 1.0)]
    assert div2d(p, q, bounds) == pytest.approx(grid_div2d(p, q, bounds), abs=1e-3)


def test_closed_forms_reject_out_of_bounds():
    with pytest.raises(OutOfBoundsError):
        div1d([0.0, 2.0], [0.5], (0, 1))


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 100_000), a=st.integers(1, 15), b=st.integers(1, 15))
def test_quadratic_div_symmetric_and_nonnegative(seed, a, b):
    rng = np.random.default_rng(seed)
    p, q = rng.uniform(-1, 1, size=(a, 2)), rng.uniform(-1, 1, size=(b, 2))
    bounds = [(-1, 1), (-1, 1)]
    d = quadratic_div(p, q, bounds)
    assert d >= -1e-12
    assert d == pytest.approx(quadratic_div(q, p, bounds), rel=1e-12, abs=1e-15)


# -- score -------------------------------------------------------------------


def test_score_identical_windows_is_zero():
    rng = np.random.default_rng(2)
    ref = rng.normal(size=(30, 3))
    tree = FactorTree(k=3, edges=[(0, 1, 1.0), (1, 2, 1.0)])
    value, _ = score(ref, ref.copy(), tree, delta=2 * np.abs(ref).max())
    assert value == pytest.approx(0.0, abs=1e-9)


def test_score_single_edge_has_no_marginal_term():
    rng = np.random.default_rng(3)
    ref, test = rng.normal(size=(15, 2)), rng.normal(0.3, 1, size=(15, 2))
    R = float(np.abs(np.vstack([ref, test])).max())
    value, _ = score(ref, test, FactorTree(k=2, edges=[(0, 1, 1.0)]), delta=2 * R)
    assert value == pytest.approx(2 * R * div2d(ref, test, [(-R, R)] * 2), rel=1e-12)


def test_score_chain_matches_hand_expansion():
    # k=3 chain 0-1-2; node 1 has degree 2, R=1 so delta=2
    ref = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, -0.5]])
    test = np.array([[0.5, -0.5, 0.0], [-0.5, 0.5, 0.5]])
    tree = FactorTree(k=3, edges=[(0, 1, 1.0), (1, 2, 1.0)])
    bounds = [(-1.0, 1.0)] * 2
    # both edges and node 1 from the grid oracle, independent of the closed form
    d01 = grid_div2d(ref[:, [0, 1]], test[:, [0, 1]], bounds, cells=800)
    d12 = grid_div2d(ref[:, [1, 2]], test[:, [1, 2]], bounds, cells=800)
    d1 = grid_div1d(ref[:, 1], test[:, 1], (-1.0, 1.0))
    expected = 2.0 * (d01 + d12) - d1
    value, _ = score(ref, test, tree, delta=2.0)
    assert value == pytest.approx(expected, abs=5e-3)


def test_score_rejects_small_delta():
    ref = np.array([[0.0, 2.0], [1.0, 0.0]])
    with pytest.raises(OutOfBoundsError):
        score(ref, ref, FactorTree(k=2, edges=[(0, 1, 1.0)]), delta=2.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), k=st.integers(1, 6), m=st.integers(3, 40))
def test_score_symmetric(seed, k, m):
    rng = np.random.default_rng(seed)
    ref, test, R = pipeline_windows(rng, m, k)
    tree = random_tree(k, rng)
    forward, _ = score(ref, test, tree, 2 * R)
    backward, _ = score(test, ref, tree, 2 * R)
    assert forward == pytest.approx(backward, rel=1e-9, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 1_000_000), k=st.integers(2, 8), m=st.integers(10, 60))
def test_score_nonnegative_on_pipeline_scale_data(seed, k, m):
    rng = np.random.default_rng(seed)
    ref, test, R = pipeline_windows(rng, m, k)
    value, _ = score(ref, test, random_tree(k, rng), 2 * R)
    assert value >= -1e-9


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 1_000_000), m=st.integers(2, 30), scale=st.floats(1e-3, 1e3))
def test_edge_inequality_at_any_scale(seed, m, scale):
    # on [lo, hi]^2 the joint cdf equals the marginal of i wherever y_j
    # is past every sample, so div2d >= (hi_j - max y_j) * div1d(i)
    rng = np.random.default_rng(seed)
    p, q = rng.normal(size=(m, 2)) * scale, rng.normal(0.2, 1.5, size=(m, 2)) * scale
    R = float(np.abs(np.vstack([p, q])).max()) * 1.5
    d1 = div1d(p[:, 0], q[:, 0], (-R, R))
    d2 = div2d(p, q, [(-R, R)] * 2)
    top = float(max(p[:, 1].max(), q[:, 1].max()))
    assert d2 >= (R - top) * d1 - 1e-12 * max(1.0, R * R)


def test_range_scaled_edge_bound_on_pipeline_data():
    rng = np.random.default_rng(4)
    for _ in range(50):
        ref, test, R = pipeline_windows(rng, int(rng.integers(10, 80)), 3)
        assert edge_bound_gap(ref, test, 0, 1, [(-R, R)] * 3) >= -1e-9


def test_nonnegativity_needs_unit_scale():
    # the regulariser is dimensionful: shrinking every coordinate by s
    # scales div2d by s^2 but div1d only by s, so tiny data can go negative
    rng = np.random.default_rng(11)
    found = False
    for _ in range(400):
        ref, test, R = pipeline_windows(rng, 12, 4, scale=1e-2)
        value, _ = score(ref, test, random_tree(4, rng), 2 * R)
        if value < -1e-9:
            found = True
            break
    assert found


def test_variants_termsets():
    tree = FactorTree(k=4, edges=[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
    light = TermSet.for_variant("light", tree, 3.0)
    assert light.nodes.tolist() == [0] and light.node_coef.tolist() == [-2.0]
    assert light.pair_coef.tolist() == [3.0, 3.0, 3.0]
    ind = TermSet.for_variant("ind", tree, 3.0)
    assert ind.nodes.tolist() == [0, 1, 2, 3] and len(ind.pairs) == 0
    nf = TermSet.for_variant("nf", tree, 3.0)
    assert nf.joint_coef == 1.0 and nf.size == 1
    with pytest.raises(ValueError):
        TermSet.for_variant("bogus", tree, 3.0)


def test_nf_variant_matches_full_joint_divergence():
    rng = np.random.default_rng(5)
    ref, test = rng.uniform(-1, 1, size=(12, 3)), rng.uniform(-1, 1, size=(12, 3))
    value, _ = score(ref, test, FactorTree(k=3), 2.0, variant="nf")
    full = quadratic_div(ref, test, [(-1, 1)] * 3) / 2.0**3
    assert value == pytest.approx(full, rel=1e-10)


# -- incremental path --------------------------------------------------------


def _stream(seed, m, k, steps):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=(m, k))
    test = rng.normal(size=(m, k))
    new = rng.normal(0.3, 1.2, size=(steps, k))
    R = float(np.abs(np.vstack([ref, test, new])).max())
    return rng, ref, test, new, R


def test_update_with_same_point_is_noop():
    rng, ref, test, _, R = _stream(0, 40, 3, 0)
    tree = random_tree(3, rng)
    before, state = score(ref, test, tree, 2 * R)
    after = update(state, test[0], evicted=test[0])
    assert after == pytest.approx(before, abs=1e-12)


def test_single_update_matches_scratch():
    rng, ref, test, new, R = _stream(1, 60, 4, 1)
    tree = random_tree(4, rng)
    _, state = score(ref, test, tree, 2 * R)
    value = update(state, new[0])
    expected, _ = score(ref, np.vstack([test[1:], new[:1]]), tree, 2 * R)
    assert value == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("variant", ["light", "ind", "nf", "np"])
def test_full_turnover_matches_fresh_score(variant):
    m, k = 30, 4
    rng, ref, test, new, R = _stream(2, m, k, m)
    tree = random_tree(k, rng)
    _, state = score(ref, test, tree, 2 * R, variant=variant)
    for row in new:
        value = update(state, row)
    expected, _ = score(ref, new, tree, 2 * R, variant=variant)
    assert value == pytest.approx(expected, rel=1e-8)


def test_update_rejects_wrong_evicted_point():
    rng, ref, test, new, R = _stream(3, 10, 2, 1)
    _, state = score(ref, test, random_tree(2, rng), 2 * R)
    with pytest.raises(ValueError):
        update(state, new[0], evicted=test[1])


def test_out_of_bounds_update_leaves_state_untouched():
    rng, ref, test, _, R = _stream(4, 20, 3, 0)
    _, state = score(ref, test, random_tree(3, rng), 2 * R)
    snapshot = (state.score, state.cursor, state.rows.copy(), state.cross.copy())
    with pytest.raises(BoundsExceeded):
        update(state, np.full(3, 2 * R))
    assert state.score == snapshot[0] and state.cursor == snapshot[1]
    np.testing.assert_array_equal(state.rows, snapshot[2])
    np.testing.assert_array_equal(state.cross, snapshot[3])
    # widening R and rescoring then accepts the point
    rescore(state, 2.5 * R)
    value = update(state, np.full(3, 2 * R))
    expected, _ = score(ref, np.vstack([test[1:], np.full((1, 3), 2 * R)]), state.tree, 5 * R)
    assert value == pytest.approx(expected, rel=1e-8)


def _update_seconds(m, k=5, steps=150):
    rng, ref, test, new, R = _stream(5, m, k, steps)
    _, state = score(ref, test, random_tree(k, rng), 2 * R)
    update(state, new[0])
    best = np.inf
    for _ in range(3):
        start = time.perf_counter()
        for row in new[1:]:
            update(state, row)
        best = min(best, time.perf_counter() - start)
    return best


def test_update_cost_linear_in_m():
    ratio = _update_seconds(2000) / _update_seconds(1000)
    assert ratio <= 2.6


# -- subsampling -------------------------------------------------------------


def test_subsample_full_epsilon_keeps_size_and_rows():
    x = np.arange(20.0).reshape(10, 2)
    out = subsample(x, 1.0, seed=0)
    assert out.shape == (10, 2)
    assert {tuple(r) for r in out} <= {tuple(r) for r in x}


def test_subsample_deterministic():
    x = np.random.default_rng(0).normal(size=(50, 3))
    np.testing.assert_array_equal(subsample(x, 0.3, seed=7), subsample(x, 0.3, seed=7))
    assert subsample(x, 0.3, seed=7).shape == (15, 3)


def test_subsample_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        subsample(np.zeros((4, 1)), 0.0)


def _stationary_pair(m=5000, k=3, seed=0):
    rng = np.random.default_rng(seed)
    ref, test = rng.normal(size=(m, k)), rng.normal(size=(m, k))
    R = float(np.abs(np.vstack([ref, test])).max())
    return ref, test, R, FactorTree(k=k, edges=[(0, 1, 1.0), (0, 2, 1.0)])


def test_subsampled_score_tracks_full_score_on_stationary_data():
    ref, test, R, tree = _stationary_pair()
    full, _ = score(ref, test, tree, 2 * R)
    sub, _ = score(subsample(ref, 0.1, seed=0), test, tree, 2 * R)
    assert abs(sub - full) / full <= 0.2


def test_subsampled_score_error_shrinks_with_epsilon():
    rng = np.random.default_rng(1)
    m, k = 2000, 3
    ref = rng.normal(size=(m, k))
    test = rng.normal(0.4, 1.0, size=(m, k))
    R = float(np.abs(np.vstack([ref, test])).max())
    tree = FactorTree(k=k, edges=[(0, 1, 1.0), (0, 2, 1.0)])
    full, _ = score(ref, test, tree, 2 * R)

    def median_error(eps):
        errs = [abs(score(subsample(ref, eps, seed=s), test, tree, 2 * R)[0] - full) / full for s in range(8)]
        return float(np.median(errs))

    assert median_error(0.5) < median_error(0.05)


# -- factorisation identity (discrete oracle) ---------------------------------


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 1_000_000), k=st.integers(2, 4))
def test_tree_kl_factorisation_identity(seed, k):
    rng = np.random.default_rng(seed)
    states = tuple(int(s) for s in rng.integers(2, 4, size=k))
    trees = list(spanning_trees(k))
    edges = trees[int(rng.integers(len(trees)))]
    p = random_tree_distribution(edges, k, states, rng)
    q = random_tree_distribution(edges, k, states, rng)
    deg = np.zeros(k, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    factored = sum(kl(marginal(p, (i, j)), marginal(q, (i, j))) for i, j in edges)
    factored -= sum((deg[v] - 1) * kl(marginal(p, (v,)), marginal(q, (v,))) for v in range(k) if deg[v] > 1)
    assert kl(p, q) == pytest.approx(factored, abs=1e-9)
