"""The training loop: views, both branches, loss assembly, Adam updates.

One iteration = generate two augmented views, run the localized and
hierarchical branches, assemble the three-term objective, backpropagate,
and apply one Adam step.  Everything is deterministic for a fixed config
and seed; inference uses the clean un-augmented graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import (SpatialAugParams, SpectralAugProbs, clean_view, make_views,
                      spectral_probs)
from .autodiff import Tape, Tensor
from .data import build_label_matrix
from .errors import ConfigError, NumericError
from .graph import SuperGraph
from .losses import (LossBreakdown, cross_entropy, generative_loss, sup_contrastive,
                     total_loss, unsup_contrastive)
from .model import (ModelConfig, ParamStore, build_hierarchy, fuse_outputs,
                    gcn_forward, hgcn_forward)
from .slic import Segmentation


@dataclass
class TrainConfig:
    lr: float = 0.01
    iters: int = 4000
    lambda_local: float = 0.5
    lambda_ssc: float = 0.1
    lambda_g2: float = 0.01
    p_sample: float = 0.3
    mi_bins: int = 16
    levels: int = 2
    hidden: int = 128
    dist_rank: int | None = None
    neg_ratio: int = 1
    seed: int = 0
    use_contrastive: bool = True
    use_generative: bool = True
    use_spatial_aug: bool = True
    use_spectral_aug: bool = True
    validate_every: int = 100

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.iters < 1:
            raise ConfigError("iteration count must be >= 1")
        if not 0.0 < self.lambda_local < 1.0:
            raise ConfigError("lambda_local must lie strictly inside (0, 1)")
        if self.lambda_ssc < 0 or self.lambda_g2 < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.use_contrastive and self.lambda_ssc == 0:
            raise ConfigError("lambda_ssc must be positive unless the contrastive "
                              "term is ablated")
        if self.use_generative and self.lambda_g2 == 0:
            raise ConfigError("lambda_g2 must be positive unless the generative "
                              "term is ablated")
        if not 0.0 <= self.p_sample <= 1.0:
            raise ConfigError("p_sample must lie in [0, 1]")
        if self.mi_bins < 2 or self.levels < 1 or self.hidden < 1 or self.neg_ratio < 0:
            raise ConfigError("mi_bins >= 2, levels >= 1, hidden >= 1, neg_ratio >= 0")


class TrainingDiverged(NumericError):
    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"training diverged at iteration {iteration}: {cause}")
        self.iteration = iteration


class Adam:
    """Standard bias-corrected Adam over a named parameter map."""

    def __init__(self, params: ParamStore, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.values) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.values) for k, t in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1 ** t)
            v_hat = self.v[name] / (1 - self.beta2 ** t)
            self.params[name].values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    params: ParamStore
    log: list[dict] = field(default_factory=list)


def _forward(graph: SuperGraph, params: ParamStore, config: TrainConfig,
             probs: SpectralAugProbs | None, iteration: int,
             y_onehot: np.ndarray) -> tuple[Tensor, LossBreakdown]:
    """One full objective evaluation; sampling seeded by (seed, iteration)."""
    aug = SpatialAugParams(params["aug_w_dist"], params["aug_log_tau"],
                           config.p_sample)
    view1, view2 = make_views(graph, aug, probs,
                              seed=(config.seed, iteration),
                              spatial=config.use_spatial_aug,
                              spectral=config.use_spectral_aug)
    z_local = gcn_forward(view1, params)
    hierarchy = build_hierarchy(view2, config.levels)
    z_global = hgcn_forward(view2, hierarchy, params)
    o_probs = fuse_outputs(z_local, z_global, config.lambda_local)

    labeled = graph.labeled_nodes
    labels = graph.train_label[labeled]
    ce = cross_entropy(o_probs, y_onehot, labeled)
    zero = ad.constant(np.zeros((1, 1)))
    if config.use_contrastive:
        ssc_u = unsup_contrastive(z_local, z_global)
        ssc_s = sup_contrastive(z_local, z_global, labeled, labels)
    else:
        ssc_u = ssc_s = zero
    if config.use_generative:
        gen = generative_loss(z_local, z_global, graph.edges, params["gen_w"],
                              config.neg_ratio, seed=(config.seed, iteration, 7))
    else:
        gen = zero
    lam_ssc = config.lambda_ssc if config.use_contrastive else 0.0
    lam_g2 = config.lambda_g2 if config.use_generative else 0.0
    return total_loss(ce, ssc_u, ssc_s, gen, lam_ssc, lam_g2)


def train(graph: SuperGraph, config: TrainConfig,
          val_nodes: tuple[np.ndarray, np.ndarray] | None = None) -> TrainResult:
    """Run the full loop and return trained parameters plus the loss log.

    ``val_nodes`` (indices, class ids) adds a node-level validation
    accuracy to every ``validate_every``-th record; validation never feeds
    gradients.
    """
    config.validate()
    if graph.labeled_nodes.size == 0:
        raise ConfigError("graph has no labeled nodes")
    mc = ModelConfig(graph.features.shape[1], graph.n_classes, config.hidden,
                     config.levels, config.dist_rank, config.lambda_local)
    params = ParamStore.init(mc, seed=config.seed)
    probs = None
    if config.use_spectral_aug:
        labeled = graph.labeled_nodes
        probs = spectral_probs(graph.features[labeled], graph.train_label[labeled],
                               config.mi_bins)
    y_onehot = build_label_matrix(graph.train_label[graph.labeled_nodes],
                                  graph.n_classes)
    adam = Adam(params, config.lr)
    log: list[dict] = []
    for t in range(1, config.iters + 1):
        try:
            params.zero_grads()
            with Tape() as tape:
                loss, breakdown = _forward(graph, params, config, probs, t, y_onehot)
                grads = tape.backward(loss, params)
        except NumericError as exc:
            raise TrainingDiverged(t, exc) from exc
        adam.step(grads)
        record = breakdown.as_record(t)
        if val_nodes is not None and (t % config.validate_every == 0 or t == config.iters):
            idx, classes = val_nodes
            pred = predict_nodes(graph, params)
            record["val_acc"] = float((pred[idx] == classes).mean()) if idx.size else 1.0
        log.append(record)
    return TrainResult(params, log)


def predict_nodes(graph: SuperGraph, params: ParamStore) -> np.ndarray:
    """Per-node class ids (1-based) from the clean, un-augmented graph."""
    view = clean_view(graph)
    z_local = gcn_forward(view, params)
    hierarchy = build_hierarchy(view, params.config.levels)
    z_global = hgcn_forward(view, hierarchy, params)
    o = fuse_outputs(z_local, z_global, params.config.lambda_local)
    return o.values.argmax(axis=1).astype(np.int32) + 1


def predict(graph: SuperGraph, params: ParamStore,
            seg: Segmentation | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Node classes plus, when a segmentation is given, the per-pixel map."""
    node_classes = predict_nodes(graph, params)
    if seg is None:
        return node_classes, None
    return node_classes, node_classes[seg.assignment]
