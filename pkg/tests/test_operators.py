import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mshl.data import make_rng
from mshl.operators import (Hyperedge, Hypergraph, SpatialOperator, TemporalOperator,
                            apply_normal_operator, dirichlet_energy, edge_laplacian,
                            graph_laplacian, multiscale_laplacian, quadratic_form, scale_weight,
                            temporal_laplacian, within_group_variance)


def random_hypergraph(rng, n, n_edges):
    edges = {}
    for _ in range(n_edges):
        s = int(rng.integers(2, min(5, n) + 1))
        mem = tuple(sorted(rng.choice(n, s, replace=False).tolist()))
        edges.setdefault(s, {})[mem] = Hyperedge(mem, float(rng.uniform(0.1, 1.0)))
    return Hypergraph(n, {s: tuple(v.values()) for s, v in edges.items()})


def test_graph_laplacian_two_nodes():
    L = graph_laplacian([[0, 1], [1, 0]])
    np.testing.assert_array_equal(L, [[1, -1], [-1, 1]])
    assert quadratic_form(np.array([[1.0], [0.0]]), L) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(1, 6), st.integers(0, 10_000))
def test_graph_laplacian_quadratic_form_identity(n, T, seed):
    rng = make_rng(seed)
    A = np.triu(rng.uniform(0, 1, (n, n)), 1)
    A = A + A.T
    X = rng.normal(size=(n, T))
    L = graph_laplacian(A)
    direct = 0.5 * sum(A[i, j] * np.sum((X[i] - X[j]) ** 2) for i in range(n) for j in range(n))
    assert quadratic_form(X, L) == pytest.approx(direct, rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(L.sum(axis=1), 0, atol=1e-12)
    assert abs(quadratic_form(np.ones((n, T)) * rng.normal(size=T), L)) < 1e-10


def test_edge_laplacian_triple():
    L = edge_laplacian(Hyperedge((0, 1, 2)), 4)
    np.testing.assert_array_equal(L[:3, :3], [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
    assert not L[3].any() and not L[:, 3].any()
    np.testing.assert_array_equal(L @ np.array([1, 1, 1, 0]), 0)


def test_edge_laplacian_one_hot_and_group_pattern():
    e = Hyperedge((0, 1, 2))
    L = edge_laplacian(e, 4)
    x = np.zeros((4, 1))
    x[1] = 1
    assert quadratic_form(x, L) == 2.0
    X = np.outer([1, 1, 1, 0], [0.3, -2.0, 5.0])
    assert quadratic_form(X, L) == 0.0


def test_scale_weights():
    assert [scale_weight(s) for s in (2, 3, 4, 5)] == [1.0, 1 / 3, 1 / 6, 1 / 10]
    with pytest.raises(ValueError):
        scale_weight(1)


def test_multiscale_laplacian_reductions():
    assert not multiscale_laplacian(Hypergraph(5)).any()
    H = Hypergraph(3, {2: (Hyperedge((0, 2)),)})
    A = np.zeros((3, 3))
    A[0, 2] = A[2, 0] = 1
    np.testing.assert_array_equal(multiscale_laplacian(H), graph_laplacian(A))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 10), st.integers(0, 6), st.integers(0, 10_000))
def test_multiscale_laplacian_psd_and_kernel(n, k, seed):
    rng = make_rng(seed)
    L = multiscale_laplacian(random_hypergraph(rng, n, k))
    np.testing.assert_allclose(L, L.T)
    np.testing.assert_allclose(L @ np.ones(n), 0, atol=1e-12)
    assert np.linalg.eigvalsh(L).min() >= -1e-12


@pytest.mark.parametrize("s", [3, 4, 5])
def test_one_hot_normalised_energy_is_two_over_s(s):
    X = np.zeros((s, 1))
    X[0] = 1.0
    assert abs(dirichlet_energy(X, Hyperedge(tuple(range(s))), normalized=True) - 2 / s) <= 1e-12


def test_dirichlet_examples():
    e = Hyperedge((0, 1, 2))
    X = np.array([[1.0], [-1.0], [0.0]])
    assert dirichlet_energy(X, e) == 6.0
    const = np.outer(np.ones(3), [2.0, -1.0, 0.7])
    assert dirichlet_energy(const, e) == 0.0
    assert dirichlet_energy(const, e, normalized=True) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(1, 5), st.integers(0, 10_000))
def test_dirichlet_algebraic_identity(s, T, seed):
    rng = make_rng(seed)
    X = rng.normal(size=(s + 2, T))
    e = Hyperedge(tuple(range(1, s + 1)))
    rows = X[1:s + 1]
    identity = s * np.sum(rows ** 2) - np.sum(rows.sum(axis=0) ** 2)
    energy = dirichlet_energy(X, e)
    assert energy >= 0
    assert energy == pytest.approx(identity, rel=1e-12, abs=1e-12)
    assert energy == pytest.approx(quadratic_form(X, edge_laplacian(e, s + 2)), rel=1e-12,
                                   abs=1e-12)
    # variance convention of the identity: energy = s^2 * Var
    assert energy == pytest.approx(s * s * within_group_variance(X, e), rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 10_000))
def test_normalised_energy_is_mean_pair_energy(s, T, seed):
    # the 1/binom(s,2) weight turns the energy into a per-pair average, so a
    # group-constant shift costs nothing at every size
    X = make_rng(seed).normal(size=(s, T))
    e = Hyperedge(tuple(range(s)))
    pairs = [np.sum((X[a] - X[b]) ** 2) for a in range(s) for b in range(a + 1, s)]
    assert dirichlet_energy(X, e, normalized=True) == pytest.approx(np.mean(pairs), rel=1e-12)
    shifted = X + make_rng(seed + 1).normal(size=T)
    assert dirichlet_energy(shifted, e, normalized=True) == pytest.approx(
        dirichlet_energy(X, e, normalized=True), rel=1e-9, abs=1e-12)


def test_temporal_laplacian_structure():
    L = temporal_laplacian(4)
    np.testing.assert_array_equal(np.diag(L), [1, 2, 2, 1])
    np.testing.assert_array_equal(np.diag(L, 1), [-1, -1, -1])
    np.testing.assert_array_equal(L @ np.ones(4), 0)
    assert np.linalg.eigvalsh(L).min() >= -1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 12), st.integers(0, 10_000))
def test_temporal_apply_matches_dense(n, T, seed):
    X = make_rng(seed).normal(size=(n, T))
    op = TemporalOperator(T)
    np.testing.assert_allclose(op.apply(X), X @ op.dense(), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 10), st.integers(1, 6), st.integers(0, 6), st.integers(0, 10_000))
def test_spatial_apply_matches_dense(n, T, k, seed):
    rng = make_rng(seed)
    A = np.triu(rng.uniform(0, 1, (n, n)), 1)
    A = A + A.T
    H = random_hypergraph(rng, n, k)
    op = SpatialOperator(A, H, lambda_h=1.7)
    X = rng.normal(size=(n, T))
    np.testing.assert_allclose(op.apply(X), op.dense() @ X, atol=1e-12)
    dense = graph_laplacian(A) + 1.7 * multiscale_laplacian(H)
    np.testing.assert_allclose(op.dense(), dense, atol=1e-14)


def test_normal_operator_reductions():
    rng = make_rng(0)
    A = np.array([[0, 1.0], [1.0, 0]])
    X = rng.normal(size=(2, 3))
    sp, tp = SpatialOperator(A), TemporalOperator(3)
    np.testing.assert_allclose(apply_normal_operator(X, np.zeros((2, 3)), sp, tp, 0, 0, 0.02),
                               0.02 * X)
    C = np.full((2, 3), 4.2)
    assert not apply_normal_operator(C, np.zeros((2, 3)), sp, tp, 1.0, 1.0, 0.0).any()
    with pytest.raises(ValueError):
        apply_normal_operator(X, np.zeros((2, 2)), sp, tp, 1, 1, 1)


def test_normal_operator_two_by_two_dense_oracle():
    A = np.array([[0, 1.0], [1.0, 0]])
    W = np.array([[1.0, 0.0], [2.0, 1.0]])
    X = np.array([[1.0, 2.0], [-1.0, 0.5]])
    out = apply_normal_operator(X, W, SpatialOperator(A), TemporalOperator(2), 1, 1, 1)
    # hand-built NT x NT matrix on column-major vec(X)
    LS = np.array([[1, -1], [-1, 1.0]])
    LT = np.array([[1, -1], [-1, 1.0]])
    K = np.diag(W.ravel(order="F")) + np.kron(np.eye(2), LS) + np.kron(LT, np.eye(2)) + np.eye(4)
    np.testing.assert_allclose(out.ravel(order="F"), K @ X.ravel(order="F"), atol=1e-14)


def test_hypergraph_validation_and_json():
    H = Hypergraph.from_edges(6, [Hyperedge((0, 1)), Hyperedge((2, 3, 4), 0.7)])
    assert H.scales == [2, 3] and len(H) == 2
    assert Hypergraph.from_json(H.to_json()) == H
    d = H.to_dict()
    assert d["scales"][1] == {"s": 3, "edges": [{"members": [2, 3, 4], "weight": 0.7}]}
    with pytest.raises(ValueError, match="listed under scale"):
        Hypergraph(6, {3: (Hyperedge((0, 1)),)})
    with pytest.raises(ValueError, match="out of range"):
        Hypergraph(3, {2: (Hyperedge((1, 5)),)})
    with pytest.raises(ValueError, match="duplicate"):
        Hypergraph(6, {2: (Hyperedge((0, 1)), Hyperedge((1, 0)))})
    with pytest.raises(ValueError, match="cap"):
        Hypergraph(6, {2: (Hyperedge((0, 1)), Hyperedge((0, 2)))}, max_per_scale=1)
    with pytest.raises(ValueError):
        Hyperedge((1,))
    with pytest.raises(ValueError):
        Hyperedge((1, 2), weight=0.0)
