"""Superpixel graph: region-adjacency neighbors and Gaussian edge weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import HsiCube, LabelMap, SplitSpec
from .errors import ContractError, DomainError
from .slic import NodeLabels, Segmentation, node_features, node_labels

DEFAULT_GAMMA = 0.2


@dataclass
class SuperGraph:
    """Weighted undirected graph over superpixels.

    ``edges`` holds each unordered neighbor pair once as (i, j) with i < j,
    sorted lexicographically; ``adjacency`` is the dense symmetric weight
    matrix with zero diagonal.  Labels are carried per node; nodes with
    ``train_label`` 0 are unlabeled for training purposes.
    """

    n: int
    features: np.ndarray        # (n, d)
    edges: np.ndarray           # (E, 2) int64, i < j
    adjacency: np.ndarray       # (n, n) float64
    eval_label: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    train_label: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    n_classes: int = 0

    @property
    def labeled_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.train_label > 0)

    @property
    def neighbor_sets(self) -> list[np.ndarray]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return [np.array(sorted(v), dtype=np.int64) for v in out]


def spatial_neighbors(seg: Segmentation) -> np.ndarray:
    """Unordered superpixel pairs sharing at least one 4-adjacent pixel pair."""
    a = seg.assignment
    pairs = []
    for left, right in ((a[:, :-1], a[:, 1:]), (a[:-1, :], a[1:, :])):
        diff = left != right
        lo = np.minimum(left[diff], right[diff])
        hi = np.maximum(left[diff], right[diff])
        pairs.append(np.stack([lo, hi], axis=1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    stacked = np.concatenate(pairs, axis=0).astype(np.int64)
    if stacked.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(stacked, axis=0)


def adjacency(features: np.ndarray, edges: np.ndarray, n: int,
              gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Gaussian edge weights exp(-gamma * ||x_i - x_j||^2); zero elsewhere."""
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    if not np.isfinite(features).all():
        raise DomainError("non-finite node features")
    a = np.zeros((n, n))
    if len(edges):
        i, j = edges[:, 0], edges[:, 1]
        d2 = ((features[i] - features[j]) ** 2).sum(axis=1)
        w = np.exp(-gamma * d2)
        a[i, j] = w
        a[j, i] = w
    return a


def build_graph(cube: HsiCube, seg: Segmentation, labels: LabelMap | None = None,
                split: SplitSpec | None = None,
                gamma: float = DEFAULT_GAMMA) -> SuperGraph:
    """Assemble the full node-feature + weighted-adjacency graph."""
    feats = node_features(cube, seg)
    edges = spatial_neighbors(seg)
    adj = adjacency(feats, edges, seg.n, gamma)
    if labels is not None:
        nl: NodeLabels = node_labels(labels, seg, split)
        return SuperGraph(seg.n, feats, edges, adj, nl.eval_label, nl.train_label,
                          labels.n_classes)
    zero = np.zeros(seg.n, dtype=np.int32)
    return SuperGraph(seg.n, feats, edges, adj, zero, zero.copy(), 0)
