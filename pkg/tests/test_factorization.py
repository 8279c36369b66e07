import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import grid_dependency, spanning_trees
from lightcd.factorization import (
    FactorTree,
    OutOfBoundsError,
    SketchBasis,
    build_structure,
    build_tree,
    dependency_exact,
    dependency_matrix,
    dependency_sketch,
    pairwise_max_sums,
)


def test_pairwise_max_sums_matches_brute_force():
    x = np.array([3.0, -1.0, 3.0, 0.5, 2.0])
    brute = np.maximum(x[:, None], x[None, :]).sum(axis=1)
    np.testing.assert_allclose(pairwise_max_sums(x), brute)


def test_dependency_constant_marginal_is_zero():
    b = np.random.default_rng(0).uniform(-1, 1, size=15)
    assert dependency_exact(np.full(15, 0.3), b, (-1, 1), (-1, 1)) == pytest.approx(0.0, abs=1e-12)


def test_dependency_two_point_example():
    a = np.array([0.0, 1.0])
    assert dependency_exact(a, a, (0, 1), (0, 1)) == pytest.approx(1 / 16, abs=1e-12)


def test_dependency_matches_grid_oracle():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, 20)
    b = a**2 + 0.1 * rng.normal(size=20)
    ba, bb = (-1.0, 1.0), (float(b.min()) - 0.5, float(b.max()) + 0.5)
    assert dependency_exact(a, b, ba, bb) == pytest.approx(grid_dependency(a, b, ba, bb), abs=1e-3)


def test_dependency_rejects_out_of_bounds():
    with pytest.raises(OutOfBoundsError):
        dependency_exact(np.array([0.0, 2.0]), np.array([0.0, 1.0]), (0, 1), (0, 1))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 40))
def test_dependency_symmetric_and_positive_on_self(seed, m):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=m), rng.normal(size=m)
    bd = (-6.0, 6.0)
    a, b = np.clip(a, *bd), np.clip(b, *bd)
    assert dependency_exact(a, b, bd, bd) == dependency_exact(b, a, bd, bd)
    assert dependency_exact(a, b, bd, bd) >= -1e-12
    if np.ptp(a) > 0:
        assert dependency_exact(a, a, bd, bd) > 0


def test_sketch_deterministic_for_fixed_seed():
    rng = np.random.default_rng(2)
    a = rng.normal(size=100)
    b = np.sin(2 * a)
    bd = (-5.0, 5.0)
    one = dependency_sketch(a, b, bd, bd, SketchBasis.generate(100, 20, 3, seed=9))
    two = dependency_sketch(a, b, bd, bd, SketchBasis.generate(100, 20, 3, seed=9))
    assert one == two


def test_sketch_basis_entries_are_signs():
    basis = SketchBasis.generate(37, 5, 2, seed=0)
    assert set(np.unique(basis.u)) <= {-1, 1} and set(np.unique(basis.w)) <= {-1, 1}
    assert basis.u.shape == (2, 5, 37)


def _dependent_pair(rng, m):
    a = rng.normal(size=m)
    b = np.sin(2 * a) + 0.3 * rng.normal(size=m)
    bound = float(max(np.abs(a).max(), np.abs(b).max()))
    return a, b, (-bound, bound)


def test_sketch_large_basis_within_15_percent():
    rng = np.random.default_rng(3)
    a, b, bd = _dependent_pair(rng, 500)
    exact = dependency_exact(a, b, bd, bd)
    est = dependency_sketch(a, b, bd, bd, SketchBasis.generate(500, 200, 5, seed=1))
    assert abs(est - exact) <= 0.15 * exact


def _single_product_estimates(a, b, bd, draws):
    return np.array([
        dependency_sketch(a, b, bd, bd, SketchBasis.generate(a.size, 1, 1, seed=s)) for s in range(draws)
    ])


def test_single_product_sketch_is_unbiased():
    # mean of 10,000 one-product estimates lies within three standard errors
    rng = np.random.default_rng(0)
    a, b, bd = _dependent_pair(rng, 100)
    est = _single_product_estimates(a, b, bd, 10_000)
    exact = dependency_exact(a, b, bd, bd)
    assert abs(est.mean() - exact) <= 3 * est.std(ddof=1) / np.sqrt(est.size)


def test_single_product_sketch_mean_within_two_percent():
    rng = np.random.default_rng(0)
    a = rng.normal(size=500)
    b = a**2 - 2 * a + rng.normal(size=500)
    bound = float(max(np.abs(a).max(), np.abs(b).max()))
    bd = (-bound, bound)
    est = _single_product_estimates(a, b, bd, 10_000)
    exact = dependency_exact(a, b, bd, bd)
    assert abs(est.mean() - exact) <= 0.02 * exact


@pytest.mark.parametrize(
    "weights, edges",
    [
        ([[0, 3, 2], [3, 0, 1], [2, 1, 0]], [(0, 1), (0, 2)]),
        ([[0, 0.5], [0.5, 0]], [(0, 1)]),
        (np.ones((4, 4)), [(0, 1), (0, 2), (0, 3)]),
    ],
)
def test_build_tree_examples(weights, edges):
    tree = build_tree(np.asarray(weights, dtype=float))
    assert sorted(tree.edge_pairs().tolist()) == [list(e) for e in edges]


def test_build_tree_k3_weight():
    tree = build_tree(np.array([[0, 3, 2], [3, 0, 1], [2, 1, 0]], dtype=float))
    assert tree.weight == 5.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000), k=st.integers(2, 6), ties=st.booleans())
def test_build_tree_is_maximum_spanning_tree(seed, k, ties):
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 3, size=(k, k)).astype(float) if ties else rng.random((k, k))
    w = np.triu(w, 1)
    w = w + w.T
    tree = build_tree(w)
    best = max(sum(w[i, j] for i, j in edges) for edges in spanning_trees(k))
    assert tree.weight == pytest.approx(best, abs=1e-12)
    assert len(tree.edges) == k - 1
    assert all(i < j for i, j, _ in tree.edges)
    # connected: union-find over the edges
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for i, j, _ in tree.edges:
        parent[find(i)] = find(j)
    assert len({find(v) for v in range(k)}) == 1
    deg = tree.degree
    if k > 2:
        assert int(np.sum(deg[deg > 1] - 1)) == k - 2


def test_pruefer_oracle_counts_cayley():
    for k in range(2, 7):
        assert sum(1 for _ in spanning_trees(k)) == k ** (k - 2)


def test_build_structure_single_dimension():
    tree = build_structure(np.zeros((10, 1)), 1.0, exact=True)
    assert tree.edges == [] and tree.degree.tolist() == [0]


@pytest.mark.parametrize("exact", [True, False])
def test_build_structure_links_correlated_pair(exact):
    rng = np.random.default_rng(4)
    x = rng.normal(size=300)
    data = np.column_stack([x, rng.normal(size=300), 0.9 * x + 0.1 * rng.normal(size=300)])
    bound = float(np.abs(data).max())
    basis = None if exact else SketchBasis.generate(300, 50, 3, seed=0)
    tree = build_structure(data, bound, basis, exact=exact)
    assert (0, 2) in {(i, j) for i, j, _ in tree.edges}
    again = build_structure(data, bound, basis, exact=exact)
    assert again.edges == tree.edges


def test_dependency_matrix_sketch_tracks_exact():
    rng = np.random.default_rng(5)
    x = rng.normal(size=400)
    data = np.column_stack([x, np.sin(2 * x) + 0.2 * rng.normal(size=400), rng.normal(size=400)])
    bound = float(np.abs(data).max())
    exact = dependency_matrix(data, bound, exact=True)
    approx = dependency_matrix(data, bound, SketchBasis.generate(400, 50, 3, seed=2))
    assert np.allclose(approx, approx.T)
    assert abs(approx[0, 1] - exact[0, 1]) <= 0.25 * exact[0, 1]


def test_factor_tree_serialises():
    tree = FactorTree(k=3, edges=[(0, 1, 0.5), (1, 2, 0.25)])
    assert tree.to_dict() == {"k": 3, "edges": [[0, 1, 0.5], [1, 2, 0.25]]}
    assert tree.degree.tolist() == [1, 2, 1]
