"""Shared fixtures: synthetic datasets and random graphs."""

from __future__ import annotations

import numpy as np
import pytest

from congcn.data import DatasetManifest, HsiCube, LabelMap
from congcn.graph import SuperGraph


def make_blob_dataset(size: int = 48, bands: int = 10, n_classes: int = 4,
                      separation: float = 3.0, noise: float = 1.0,
                      quota: int = 10, seed: int = 0):
    """Quadrant-blob cube: class means separated by ``separation`` noise
    units in feature space, iid Gaussian noise per band."""
    rng = np.random.default_rng(seed)
    half = size // 2
    labels = np.zeros((size, size), dtype=np.int32)
    labels[:half, :half] = 1
    labels[:half, half:] = 2
    labels[half:, :half] = 3
    labels[half:, half:] = 4
    assert n_classes == 4
    scale = separation * noise / np.sqrt(2.0)
    means = np.zeros((n_classes + 1, bands))
    for k in range(1, n_classes + 1):
        means[k, (k - 1) % bands] = scale
    data = means[labels] + noise * rng.normal(size=(size, size, bands))
    cube = HsiCube(size, size, bands, data)
    label_map = LabelMap(size, size, n_classes, labels)
    manifest = DatasetManifest("synthetic-blobs", bands,
                               [f"Blob {k}" for k in range(1, n_classes + 1)],
                               [quota] * n_classes)
    return cube, label_map, manifest


def make_random_graph(n: int = 12, d: int = 8, c: int = 3, n_labeled: int = 6,
                      extra_edges: int = 10, seed: int = 0) -> SuperGraph:
    """Connected random graph with Gaussian-kernel weights and partial labels."""
    rng = np.random.default_rng(seed)
    feats = rng.random((n, d))
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(i))
        edges.add((j, i))
    for _ in range(extra_edges):
        i, j = sorted(int(v) for v in rng.choice(n, 2, replace=False))
        edges.add((i, j))
    edge_arr = np.array(sorted(edges), dtype=np.int64)
    adj = np.zeros((n, n))
    for i, j in edge_arr:
        w = np.exp(-0.2 * ((feats[i] - feats[j]) ** 2).sum())
        adj[i, j] = adj[j, i] = w
    train_label = np.zeros(n, dtype=np.int32)
    n_labeled = min(n_labeled, n)
    labeled = rng.choice(n, size=n_labeled, replace=False)
    train_label[labeled] = rng.integers(1, c + 1, size=n_labeled)
    # Guarantee every class appears at least once.
    for k in range(1, c + 1):
        if not np.any(train_label == k):
            train_label[labeled[k % n_labeled]] = k
    return SuperGraph(n, feats, edge_arr, adj, train_label.copy(), train_label, c)


@pytest.fixture
def blob_dataset():
    return make_blob_dataset()


@pytest.fixture
def random_graph():
    return make_random_graph()
