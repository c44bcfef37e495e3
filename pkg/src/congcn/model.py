"""The two convolution branches and their parameter store.

Localized branch: classic two-layer GCN propagation over the symmetric
normalized adjacency of view 1.  Hierarchical branch: heavy-edge-matching
coarsening with degree-weighted mean pooling on the way down, copy
unpooling with additive skip connections on the way up, one convolution
per level each way, over view 2.  Outputs fuse by a convex combination
followed by a row softmax.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .augment import GraphView
from .errors import ContractError, FormatError

CHECKPOINT_MAGIC = b"CGCN"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    n_features: int
    n_classes: int
    hidden: int = 128
    levels: int = 2
    dist_rank: int | None = None   # columns of the distance weight matrix
    lambda_local: float = 0.5

    def __post_init__(self):
        if self.dist_rank is None:
            self.dist_rank = min(self.n_features, 32)
        if not 1 <= self.dist_rank <= self.n_features:
            raise ContractError("dist_rank must lie in [1, n_features]")
        if not 0.0 < self.lambda_local < 1.0:
            raise ContractError("lambda_local must lie strictly inside (0, 1)")
        if self.levels < 1 or self.hidden < 1:
            raise ContractError("levels and hidden width must be >= 1")


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class ParamStore(Mapping[str, Tensor]):
    """Named trainable tensors for both branches plus the augmentation."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self._tensors = tensors

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ParamStore":
        rng = np.random.default_rng(seed)
        d, c, h, levels = (config.n_features, config.n_classes,
                           config.hidden, config.levels)
        t: dict[str, Tensor] = {}
        t["w0"] = Tensor(_glorot(rng, d, h), requires_grad=True)
        t["w1"] = Tensor(_glorot(rng, h, c), requires_grad=True)
        for lv in range(levels):
            t[f"hier_down_{lv}"] = Tensor(_glorot(rng, d if lv == 0 else h, h),
                                          requires_grad=True)
        for lv in range(levels):
            t[f"hier_up_{lv}"] = Tensor(_glorot(rng, h, c if lv == 0 else h),
                                        requires_grad=True)
        t["gen_w"] = Tensor(_glorot(rng, 2 * c, 1), requires_grad=True)
        # Distance weights start as a damped identity slab; tau starts at 1.
        t["aug_w_dist"] = Tensor(np.eye(d, config.dist_rank) * 0.1, requires_grad=True)
        t["aug_log_tau"] = Tensor(np.zeros((1, 1)), requires_grad=True)
        return cls(config, t)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    # -- checkpoint io ------------------------------------------------------

    def save(self, path) -> None:
        cfg = self.config
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<IIIII", cfg.n_features, cfg.n_classes,
                                 cfg.hidden, cfg.levels, cfg.dist_rank))
            fh.write(struct.pack("<d", cfg.lambda_local))
            fh.write(struct.pack("<I", len(self._tensors)))
            for name in sorted(self._tensors):
                blob = name.encode("utf-8")
                rows, cols = self._tensors[name].shape
                fh.write(struct.pack("<H", len(blob)))
                fh.write(blob)
                fh.write(struct.pack("<II", rows, cols))
                fh.write(np.ascontiguousarray(self._tensors[name].values,
                                              dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as fh:
            if fh.read(4) != CHECKPOINT_MAGIC:
                raise FormatError("bad checkpoint magic")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != CHECKPOINT_VERSION:
                raise FormatError(f"unsupported checkpoint version {version}")
            d, c, h, levels, rank = struct.unpack("<IIIII", fh.read(20))
            (lam,) = struct.unpack("<d", fh.read(8))
            config = ModelConfig(d, c, h, levels, rank, lam)
            (count,) = struct.unpack("<I", fh.read(4))
            tensors: dict[str, Tensor] = {}
            for _ in range(count):
                (nlen,) = struct.unpack("<H", fh.read(2))
                name = fh.read(nlen).decode("utf-8")
                rows, cols = struct.unpack("<II", fh.read(8))
                payload = fh.read(8 * rows * cols)
                if len(payload) != 8 * rows * cols:
                    raise FormatError("truncated checkpoint payload")
                values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
                tensors[name] = Tensor(values.copy(), requires_grad=True)
            if fh.read(1):
                raise FormatError("trailing bytes after checkpoint payload")
        return cls(config, tensors)


@dataclass
class Hierarchy:
    """Fixed coarsening structure for one hierarchical forward pass.

    ``mappings[lv]`` is the 0/1 matrix sending level-lv nodes to their
    level-(lv+1) hyper-node (exactly one 1 per row, every column hit).
    ``coarse_adjacency`` holds the numeric per-level adjacencies for
    inspection; the forward pass rebuilds them on the tape.
    """

    mappings: list[np.ndarray]
    coarse_adjacency: list[np.ndarray] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.mappings)


def heavy_edge_matching(adj: np.ndarray) -> np.ndarray:
    """Greedy matching: each unmatched node pairs with its unmatched
    neighbor of maximal weight (ties toward the smallest index).

    Returns the (n, n_coarse) assignment matrix; unmatched nodes survive
    as singletons.  Coarse ids follow discovery order.
    """
    n = adj.shape[0]
    partner = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if partner[i] >= 0:
            continue
        row = adj[i].copy()
        row[partner >= 0] = 0.0
        row[i] = 0.0
        if row.max() > 0.0:
            j = int(np.argmax(row))
            partner[i] = j
            partner[j] = i
    groups: list[tuple[int, ...]] = []
    seen = np.zeros(n, dtype=bool)
    for i in range(n):
        if seen[i]:
            continue
        if partner[i] >= 0:
            groups.append((i, int(partner[i])))
            seen[i] = seen[partner[i]] = True
        else:
            groups.append((i,))
            seen[i] = True
    m = np.zeros((n, len(groups)))
    for k, members in enumerate(groups):
        for i in members:
            m[i, k] = 1.0
    ad.note_pattern(partner)
    return m


def build_hierarchy(view: GraphView, levels: int) -> Hierarchy:
    """Stack ``levels`` rounds of heavy-edge matching over the view's graph."""
    if levels < 1:
        raise ContractError("levels must be >= 1")
    adj = view.adj.values
    if adj.shape[0] < 2:
        raise ContractError("hierarchy needs at least 2 nodes")
    mappings, coarse = [], []
    cur = adj
    for _ in range(levels):
        m = heavy_edge_matching(cur)
        nxt = m.T @ cur @ m
        np.fill_diagonal(nxt, 0.0)
        mappings.append(m)
        coarse.append(nxt)
        cur = nxt
    return Hierarchy(mappings, coarse)


def normalize_adjacency(adj: Tensor) -> Tensor:
    """Symmetric normalization D^(-1/2) (A + I) D^(-1/2)."""
    n = adj.shape[0]
    if adj.shape != (n, n):
        raise ContractError("adjacency must be square")
    abar = ad.add(adj, ad.constant(np.eye(n)))
    deg = ad.tsum(abar, axis=1)                          # (n, 1), >= 1
    inv_sqrt = ad.exp(ad.scale(ad.log(deg), -0.5))
    return ad.mul(ad.mul(abar, inv_sqrt), ad.transpose(inv_sqrt))


def gcn_forward(view: GraphView, params: ParamStore) -> Tensor:
    """Two-layer localized propagation: Ahat relu(Ahat X W0) W1."""
    ahat = normalize_adjacency(view.adj)
    x = ad.constant(view.features)
    hidden = ad.relu(ad.matmul(ad.matmul(ahat, x), params["w0"]))
    return ad.matmul(ad.matmul(ahat, hidden), params["w1"])


def _pool(adj: Tensor, mapping: np.ndarray, h: Tensor) -> Tensor:
    """Degree-weighted mean of each hyper-node's children.

    Weights use the self-loop degree (1 + row sum), which is >= 1, so the
    denominator never vanishes.
    """
    n = adj.shape[0]
    deg = ad.add(ad.tsum(adj, axis=1), ad.constant(np.ones((n, 1))))
    mt = ad.constant(mapping.T)
    num = ad.matmul(mt, ad.mul(deg, h))
    den = ad.matmul(mt, deg)
    return ad.div(num, den)


def _coarsen_adjacency(adj: Tensor, mapping: np.ndarray) -> Tensor:
    m = ad.constant(mapping)
    nxt = ad.matmul(ad.matmul(ad.transpose(m), adj), m)
    off_diag = ad.constant(1.0 - np.eye(mapping.shape[1]))
    return ad.mul(nxt, off_diag)


def hgcn_forward(view: GraphView, hierarchy: Hierarchy, params: ParamStore) -> Tensor:
    """Coarsen-then-refine propagation producing per-node class scores.

    Down path: per level one convolution (relu) then pooling.  Up path:
    copy the parent activation to its children, add the same-level down
    activation, then convolve; the final level-0 convolution emits the
    class logits without an activation.
    """
    levels = hierarchy.levels
    adjs: list[Tensor] = [view.adj]
    for lv in range(levels):
        adjs.append(_coarsen_adjacency(adjs[lv], hierarchy.mappings[lv]))
    ahats = [normalize_adjacency(a) for a in adjs[:levels]]

    h = ad.constant(view.features)
    skips: list[Tensor] = []
    for lv in range(levels):
        h = ad.relu(ad.matmul(ad.matmul(ahats[lv], h), params[f"hier_down_{lv}"]))
        skips.append(h)
        h = _pool(adjs[lv], hierarchy.mappings[lv], h)
    for lv in range(levels - 1, -1, -1):
        h = ad.matmul(ad.constant(hierarchy.mappings[lv]), h)
        h = ad.add(h, skips[lv])
        h = ad.matmul(ad.matmul(ahats[lv], h), params[f"hier_up_{lv}"])
        if lv > 0:
            h = ad.relu(h)
    return h


def fuse_outputs(z_local: Tensor, z_global: Tensor, lambda_local: float) -> Tensor:
    """Convex combination of the branches, row-softmaxed into probabilities."""
    if not 0.0 < lambda_local < 1.0:
        raise ContractError("lambda_local must lie strictly inside (0, 1)")
    if z_local.shape != z_global.shape:
        raise ContractError(f"branch shapes differ: {z_local.shape} vs {z_global.shape}")
    fused = ad.add(ad.scale(z_local, lambda_local),
                   ad.scale(z_global, 1.0 - lambda_local))
    return ad.row_softmax(fused)
