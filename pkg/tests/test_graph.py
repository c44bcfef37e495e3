"""Region adjacency and Gaussian edge weights."""

import math

import numpy as np
import pytest

from congcn import graph as g
from congcn.errors import ContractError, DomainError
from congcn.slic import Segmentation


def _seg_from(assignment: np.ndarray) -> Segmentation:
    n = int(assignment.max()) + 1
    return Segmentation(assignment.shape[0], assignment.shape[1], n,
                        assignment.astype(np.int32), np.zeros((n, 2)),
                        np.zeros((n, 1)))


def test_vertical_split_neighbors():
    seg = _seg_from(np.array([[0, 0, 1, 1], [0, 0, 1, 1]]))
    edges = g.spatial_neighbors(seg)
    assert edges.tolist() == [[0, 1]]


def test_checkerboard_corners_not_neighbors():
    seg = _seg_from(np.array([[0, 1], [2, 3]]))
    edges = g.spatial_neighbors(seg)
    pairs = set(map(tuple, edges.tolist()))
    assert (0, 3) not in pairs and (1, 2) not in pairs  # diagonal only
    assert pairs == {(0, 1), (0, 2), (1, 3), (2, 3)}


def test_neighbor_relation_symmetric_random():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        assignment = rng.integers(0, 6, size=(10, 10))
        # relabel to contiguous ids
        _, assignment = np.unique(assignment, return_inverse=True)
        seg = _seg_from(assignment.reshape(10, 10))
        edges = g.spatial_neighbors(seg)
        adj = g.adjacency(rng.random((seg.n, 3)), edges, seg.n)
        assert np.array_equal(adj, adj.T)
        assert np.all(np.diag(adj) == 0.0)
        # support matches the neighbor relation exactly
        support = set(zip(*np.nonzero(np.triu(adj))))
        assert support == set(map(tuple, edges.tolist()))


def test_adjacency_identical_features():
    feats = np.array([[0.3, 0.7], [0.3, 0.7]])
    adj = g.adjacency(feats, np.array([[0, 1]]), 2)
    assert adj[0, 1] == 1.0


def test_adjacency_scalar_formula():
    feats = np.array([[0.0, 0.0], [np.sqrt(5.0), 0.0]])  # squared distance 5
    adj = g.adjacency(feats, np.array([[0, 1]]), 2, gamma=0.2)
    assert adj[0, 1] == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_adjacency_non_neighbors_zero():
    feats = np.zeros((3, 2))  # identical features everywhere
    adj = g.adjacency(feats, np.array([[0, 1]]), 3)
    assert adj[0, 2] == 0.0 and adj[1, 2] == 0.0


def test_adjacency_monotone_in_distance():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        c = b * 1.5  # ||a-c|| >= ||a-b|| not guaranteed; compare explicitly
        feats = np.stack([a, b, c])
        adj = g.adjacency(feats, np.array([[0, 1], [0, 2]]), 3)
        d_ab = ((a - b) ** 2).sum()
        d_ac = ((a - c) ** 2).sum()
        if d_ab < d_ac:
            assert adj[0, 1] > adj[0, 2]
        elif d_ac < d_ab:
            assert adj[0, 2] > adj[0, 1]


def test_adjacency_errors():
    with pytest.raises(ContractError):
        g.adjacency(np.zeros((2, 2)), np.array([[0, 1]]), 2, gamma=0.0)
    with pytest.raises(DomainError):
        g.adjacency(np.array([[np.nan, 0.0], [0.0, 0.0]]), np.array([[0, 1]]), 2)


def test_neighbor_sets_view():
    sg = g.SuperGraph(3, np.zeros((3, 1)), np.array([[0, 1], [1, 2]]),
                      np.zeros((3, 3)))
    sets = sg.neighbor_sets
    assert sets[0].tolist() == [1]
    assert sets[1].tolist() == [0, 2]
    assert sets[2].tolist() == [1]
