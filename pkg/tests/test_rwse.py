import numpy as np
import pytest
from hypothesis import given, strategies as st

from gnnplus import tensor as T
from gnnplus.errors import ConfigError, DimensionError
from gnnplus.graph import Graph
from gnnplus.rwse import attach_rwse, compute_rwse, fuse_pe
from conftest import random_graph
from oracles import dense_rwse


def test_self_loop_node():
    g = Graph(1, [0], [0], np.zeros((1, 1)))
    assert compute_rwse(g, 3).tolist() == [[1.0, 1.0, 1.0]]


def test_isolated_node():
    assert compute_rwse(Graph(1, [], [], np.zeros((1, 1))), 2).tolist() == [[0.0, 0.0]]


def test_path_graph():
    g = Graph.from_undirected(3, [[0, 1], [1, 2]], np.zeros((3, 1)))
    pe = compute_rwse(g, 2)
    assert pe[:, 1].tolist() == [0.5, 1.0, 0.5]
    assert pe[:, 0].tolist() == [0.0, 0.0, 0.0]


def test_bad_step_count():
    with pytest.raises(ConfigError):
        compute_rwse(Graph(1, [], [], np.zeros((1, 1))), 0)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 32), k=st.integers(1, 8))
def test_matches_dense_oracle(seed, n, k):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p=float(rng.uniform(0.05, 0.6)), self_loops=True)
    pe = compute_rwse(g, k)
    np.testing.assert_allclose(pe, dense_rwse(n, g.src, g.dst, k), rtol=0, atol=1e-10)
    assert pe.min() >= 0.0 and pe.max() <= 1.0 + 1e-12


@given(seed=st.integers(0, 10_000))
def test_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 15)), self_loops=True)
    perm = rng.permutation(g.num_nodes)
    pe, pp = compute_rwse(g, 5), compute_rwse(g.permuted(perm), 5)
    np.testing.assert_allclose(pp, pe[perm], atol=1e-12)


def test_regular_graph_with_self_loops_is_uniform():
    n = 7
    edges = [[i, (i + 1) % n] for i in range(n)] + [[i, i] for i in range(n)]
    pe = compute_rwse(Graph.from_undirected(n, edges, np.zeros((n, 1))), 6)
    assert np.allclose(pe, pe[0], atol=1e-14)


def test_attach_caches():
    g = Graph.from_undirected(3, [[0, 1]], np.zeros((3, 1)))
    attach_rwse([g], 4)
    cached = g.pe
    attach_rwse([g], 4)
    assert g.pe is cached and cached.shape == (3, 4)


def test_fuse_selects_features_or_encoding(rng):
    x, pe = rng.standard_normal((5, 3)), rng.random((5, 2))
    take_x = np.vstack([np.eye(3), np.zeros((2, 3))])
    take_pe = np.vstack([np.zeros((3, 2)), np.eye(2)])
    assert np.array_equal(fuse_pe(x, pe, take_x).data, x)
    assert np.array_equal(fuse_pe(x, pe, take_pe).data, pe)


def test_fuse_hand_value_and_gradient():
    x = T.Tensor([[2.0]], requires_grad=True)
    w = T.Tensor([[1.0], [1.0]], requires_grad=True)
    out = fuse_pe(x, np.array([[0.5]]), w)
    assert out.data.tolist() == [[2.5]]
    T.backward(T.sum_(out))
    assert x.grad.tolist() == [[1.0]]
    assert w.grad.tolist() == [[2.0], [0.5]]


def test_fuse_shape_mismatch():
    with pytest.raises(DimensionError):
        fuse_pe(np.ones((3, 2)), np.ones((4, 1)), np.ones((3, 2)))
