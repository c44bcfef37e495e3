"""Adaptive two-view graph augmentation.

Spatial level: every edge gets a learnable Mahalanobis distance; close
pairs are emphasized and distant pairs weakened through a truncated
exponential adjustment, applied to a Bernoulli-sampled subset of edges,
and the result is min-max normalized back into [0, 1] over the edge set.

Spectral level: feature dimensions are exchanged between adjacent node
pairs, rarely for dimensions that carry much mutual information with the
labels, at most once per node, visiting strong edges first.

Sampling (mask, exchange plan, pair order) is frozen per call; gradients
reach the distance weights and the truncation threshold only through the
edge-adjustment values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .graph import SuperGraph

SQRT_EPS = 1e-12
DEFAULT_MI_BINS = 16


@dataclass
class SpatialAugParams:
    """Trainable spatial-augmentation parameters.

    The truncation threshold is stored as log(tau) so tau stays positive.
    """

    w_dist: Tensor   # (d, r)
    log_tau: Tensor  # (1, 1)
    p_sample: float

    def __post_init__(self):
        if not 0.0 <= self.p_sample <= 1.0:
            raise ContractError("p_sample must lie in [0, 1]")


@dataclass
class SpectralAugProbs:
    """Per-dimension importance in [0, 1]; dimension h is exchanged with
    probability 1 - p[h]."""

    p: np.ndarray

    def __post_init__(self):
        if self.p.min() < 0.0 or self.p.max() > 1.0:
            raise ContractError("spectral probabilities must lie in [0, 1]")


@dataclass
class ExchangePlan:
    """Feature swaps as (i, j, dims) with each node used at most once."""

    swaps: list[tuple[int, int, np.ndarray]]


@dataclass
class GraphView:
    """One augmented graph view: adjusted adjacency plus exchanged features."""

    adj: Tensor            # (n, n), symmetric, entries in [0, 1]
    features: np.ndarray   # (n, d)
    mask_seed: object = None
    plan: ExchangePlan | None = None


def _pair_diffs(features: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return features[pairs[:, 0]] - features[pairs[:, 1]]


def pair_distances(diffs: np.ndarray, w_dist: Tensor) -> Tensor:
    """Generalized Mahalanobis distances for a batch of difference vectors.

    D = sqrt(diff^T W W^T diff + eps); the epsilon keeps the sqrt
    differentiable at coincident features.
    """
    proj = ad.matmul(ad.constant(diffs), w_dist)          # (E, r)
    sq = ad.tsum(ad.mul(proj, proj), axis=1)              # (E, 1)
    return ad.sqrt(ad.add(sq, ad.constant(np.full((len(diffs), 1), SQRT_EPS))))


def mahalanobis_distance(x_i: np.ndarray, x_j: np.ndarray, w_dist: Tensor) -> Tensor:
    """Distance between two feature vectors (1x1 tensor)."""
    diff = np.asarray(x_i, dtype=np.float64).ravel() - np.asarray(x_j, dtype=np.float64).ravel()
    return pair_distances(diff.reshape(1, -1), w_dist)


def edge_adjust(dist: Tensor, tau: Tensor) -> Tensor:
    """Edge emphasis/weakening from distances (any shape) and scalar tau > 0.

    D <= tau: e^(tau - D) - 1, in (0, e^tau - 1];
    D >  tau: 1 - e^(min(D - tau, tau)), in [-e^tau + 1, 0), constant for
    D >= 2 tau.  Continuous at D = tau with value 0.
    """
    if tau.item() <= 0.0:
        raise ContractError("tau must be positive")
    emphasize = dist.values <= tau.values
    ad.note_pattern(emphasize)
    mask = ad.constant(emphasize.astype(np.float64))
    inv_mask = ad.constant((~emphasize).astype(np.float64))
    one = ad.constant(np.ones_like(dist.values))
    emph = ad.sub(ad.exp(ad.sub(tau, dist)), one)
    # min moved inside the exponent so large distances cannot overflow
    weak = ad.sub(one, ad.exp(ad.minimum(ad.sub(dist, tau), tau)))
    return ad.add(ad.mul(mask, emph), ad.mul(inv_mask, weak))


def sample_mask(n: int, p_sample: float, seed) -> np.ndarray:
    """Symmetric 0/1 masking matrix; one draw per unordered pair, unit diagonal."""
    if not 0.0 <= p_sample <= 1.0:
        raise ContractError("p_sample must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    upper = np.triu(u < p_sample, k=1)
    mask = upper | upper.T
    np.fill_diagonal(mask, True)
    return mask.astype(np.float64)


def _normalize_edge_values(values: Tensor, pairs: np.ndarray, n: int) -> Tensor:
    """Min-max normalize edge values to [0, 1] and scatter symmetrically.

    Normalization runs over neighbor entries only; non-edges stay 0.  When
    all edge values coincide every neighbor entry becomes 1.
    """
    vmin = ad.reduce_min(values)
    vmax = ad.reduce_max(values)
    if vmax.item() == vmin.item():
        return ad.constant(_scatter_constant(np.ones(len(pairs)), pairs, n))
    normalized = ad.div(ad.sub(values, vmin), ad.sub(vmax, vmin))
    return ad.scatter_pairs(normalized, pairs, n)


def _scatter_constant(vals: np.ndarray, pairs: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    if len(pairs):
        out[pairs[:, 0], pairs[:, 1]] = vals
        out[pairs[:, 1], pairs[:, 0]] = vals
    return out


def normalized_base_adjacency(adj: np.ndarray) -> np.ndarray:
    """The un-augmented view: base weights min-max rescaled over the edge set."""
    i, j = np.triu_indices_from(adj, k=1)
    on = adj[i, j] > 0
    pairs = np.stack([i[on], j[on]], axis=1)
    vals = adj[pairs[:, 0], pairs[:, 1]]
    if len(vals) == 0:
        return np.zeros_like(adj)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return _scatter_constant(np.ones(len(vals)), pairs, adj.shape[0])
    return _scatter_constant((vals - lo) / (hi - lo), pairs, adj.shape[0])


def apply_spatial_aug(adj: np.ndarray, features: np.ndarray,
                      params: SpatialAugParams, seed) -> Tensor:
    """Adjusted adjacency for one view; differentiable w.r.t. the aug params."""
    n = adj.shape[0]
    i, j = np.triu_indices(n, k=1)
    on = adj[i, j] > 0
    pairs = np.stack([i[on], j[on]], axis=1)
    if len(pairs) == 0:
        return ad.constant(np.zeros((n, n)))
    tau = ad.exp(params.log_tau)
    dist = pair_distances(_pair_diffs(features, pairs), params.w_dist)
    adjust = edge_adjust(dist, tau)
    mask = sample_mask(n, params.p_sample, seed)[pairs[:, 0], pairs[:, 1]]
    base = ad.constant(adj[pairs[:, 0], pairs[:, 1]].reshape(-1, 1))
    mixed = ad.add(base, ad.mul(ad.constant(mask.reshape(-1, 1)), adjust))
    return _normalize_edge_values(mixed, pairs, n)


# ---------------------------------------------------------------------------
# spectral level


def mutual_info(column: np.ndarray, classes: np.ndarray, bins: int) -> float:
    """Plug-in mutual information between a binned feature column and classes.

    The column is split into ``bins`` equal-width bins over its range; the
    class variable keeps its natural categories.  Natural log; empty joint
    cells contribute 0.  A constant column occupies one bin and yields 0.
    """
    column = np.asarray(column, dtype=np.float64).ravel()
    classes = np.asarray(classes, dtype=np.int64).ravel()
    if column.size != classes.size:
        raise ContractError("column and class vectors differ in length")
    if column.size < 2:
        raise ContractError("mutual information needs at least 2 examples")
    if bins < 2:
        raise ContractError("bin count must be >= 2")
    lo, hi = column.min(), column.max()
    if hi == lo:
        return 0.0
    idx = np.minimum(((column - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
    cats, y = np.unique(classes, return_inverse=True)
    joint = np.zeros((bins, len(cats)))
    np.add.at(joint, (idx, y), 1.0)
    total = joint.sum()
    pxy = joint / total
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float((pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])).sum())


def spectral_probs(x_labeled: np.ndarray, y: np.ndarray,
                   bins: int = DEFAULT_MI_BINS) -> SpectralAugProbs:
    """Min-max normalized per-dimension mutual information with the labels.

    Computed once per training run from labeled data only.  If every
    dimension scores the same, all probabilities default to 0.5.
    """
    if x_labeled.shape[0] < 2:
        raise ContractError("need at least 2 labeled examples")
    info = np.array([mutual_info(x_labeled[:, h], y, bins)
                     for h in range(x_labeled.shape[1])])
    lo, hi = info.min(), info.max()
    if hi == lo:
        return SpectralAugProbs(np.full(info.shape, 0.5))
    return SpectralAugProbs((info - lo) / (hi - lo))


def plan_exchanges(adj: np.ndarray, probs: SpectralAugProbs, seed) -> ExchangePlan:
    """Greedy matching over edges in descending weight order.

    Each node joins at most one pair; an accepted pair consumes both nodes
    even when no dimension is drawn for it.
    """
    n = adj.shape[0]
    i, j = np.triu_indices(n, k=1)
    on = adj[i, j] > 0
    ei, ej, ew = i[on], j[on], adj[i, j][on]
    order = np.lexsort((ej, ei, -ew))
    rng = np.random.default_rng(seed)
    used = np.zeros(n, dtype=bool)
    swaps: list[tuple[int, int, np.ndarray]] = []
    for e in order:
        a, b = int(ei[e]), int(ej[e])
        if used[a] or used[b]:
            continue
        used[a] = used[b] = True
        dims = np.flatnonzero(rng.random(len(probs.p)) < (1.0 - probs.p))
        if dims.size:
            swaps.append((a, b, dims))
    return ExchangePlan(swaps)


def apply_spectral_aug(features: np.ndarray, plan: ExchangePlan) -> np.ndarray:
    """Swap the planned feature dimensions between each paired node."""
    out = features.copy()
    for a, b, dims in plan.swaps:
        tmp = out[a, dims].copy()
        out[a, dims] = out[b, dims]
        out[b, dims] = tmp
    return out


def make_views(graph: SuperGraph, params: SpatialAugParams,
               probs: SpectralAugProbs | None, seed,
               spatial: bool = True, spectral: bool = True) -> tuple[GraphView, GraphView]:
    """Build the two stochastically augmented views for one iteration.

    View 1 feeds the localized branch, view 2 the hierarchical branch.
    With an augmentation level disabled the corresponding part falls back
    to the (normalized) base graph.
    """
    children = np.random.SeedSequence(seed).spawn(4)
    views = []
    for k in range(2):
        if spectral:
            if probs is None:
                raise ContractError("spectral augmentation needs importance probabilities")
            plan = plan_exchanges(graph.adjacency, probs, children[2 * k])
            feats = apply_spectral_aug(graph.features, plan)
        else:
            plan = None
            feats = graph.features
        if spatial:
            # Distances come from the base features: the spatial level acts
            # on the original topology, independent of the exchange plan.
            adj = apply_spatial_aug(graph.adjacency, graph.features, params,
                                    children[2 * k + 1])
            mask_seed = children[2 * k + 1]
        else:
            adj = ad.constant(normalized_base_adjacency(graph.adjacency))
            mask_seed = None
        views.append(GraphView(adj, feats, mask_seed, plan))
    return views[0], views[1]


def clean_view(graph: SuperGraph) -> GraphView:
    """Deterministic un-augmented view used at inference time."""
    return GraphView(ad.constant(normalized_base_adjacency(graph.adjacency)),
                     graph.features)
