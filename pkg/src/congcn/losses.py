"""Training objectives: contrastive, graph generative, cross-entropy.

All contrastive denominators run through log-sum-exp with max subtraction;
the raw exponential ratios overflow for large inner products.  The
generative objective is the negative mean log-likelihood of observed edges
plus sampled non-edges under a logistic score of concatenated cross-view
embeddings (the literal likelihood product underflows on any real graph).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError

PROB_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    ce: float
    ssc_unsup: float
    ssc_sup: float
    gen: float
    total: float
    lambda_ssc: float
    lambda_g2: float

    def as_record(self, iteration: int) -> dict:
        return {"iter": iteration, "ce": self.ce, "ssc_unsup": self.ssc_unsup,
                "ssc_sup": self.ssc_sup, "gen": self.gen, "total": self.total}


def unsup_contrastive(z_local: Tensor, z_global: Tensor) -> Tensor:
    """Cross-view agreement over all nodes; the positive pair is the same
    node seen by the two branches, both directions averaged with 1/(2n)."""
    if z_local.shape != z_global.shape:
        raise ContractError("branch outputs must share a shape")
    n = z_local.shape[0]
    sim = ad.matmul(z_local, ad.transpose(z_global))          # (n, n)
    diag = ad.tsum(ad.take_diag(sim))
    fwd = ad.sub(ad.tsum(ad.row_logsumexp(sim)), diag)
    bwd = ad.sub(ad.tsum(ad.row_logsumexp(ad.transpose(sim))), diag)
    return ad.scale(ad.add(fwd, bwd), 1.0 / (2.0 * n))


def sup_contrastive(z_local: Tensor, z_global: Tensor,
                    labeled_idx: np.ndarray, labels: np.ndarray) -> Tensor:
    """Class-driven agreement over labeled nodes.

    Positives are all same-class cross-view pairs (including the node
    itself); numerator and denominator share one max shift per row so the
    log-ratio is exact.  With no labeled nodes the term is zero.
    """
    labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labeled_idx.size != labels.size:
        raise ContractError("labeled index and label arrays differ in length")
    l = labeled_idx.size
    if l == 0:
        return ad.constant(np.zeros((1, 1)))
    same = (labels[:, None] == labels[None, :]).astype(np.float64)
    sim = ad.matmul(ad.take_rows(z_local, labeled_idx),
                    ad.transpose(ad.take_rows(z_global, labeled_idx)))  # (l, l)
    fwd = ad.sub(ad.tsum(ad.row_logsumexp(sim)),
                 ad.tsum(ad.row_logsumexp(sim, mask=same)))
    sim_t = ad.transpose(sim)
    bwd = ad.sub(ad.tsum(ad.row_logsumexp(sim_t)),
                 ad.tsum(ad.row_logsumexp(sim_t, mask=same)))
    return ad.scale(ad.add(fwd, bwd), 1.0 / (2.0 * l))


def sample_non_edges(n: int, edges: np.ndarray, count: int, seed) -> np.ndarray:
    """Uniformly sampled unordered non-adjacent pairs (with replacement)."""
    present = set(map(tuple, edges.tolist()))
    max_pairs = n * (n - 1) // 2
    if len(present) >= max_pairs:
        return np.zeros((0, 2), dtype=np.int64)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        i, j = int(rng.integers(n)), int(rng.integers(n))
        if i == j:
            continue
        pair = (min(i, j), max(i, j))
        if pair in present:
            continue
        out.append(pair)
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def generative_loss(z_local: Tensor, z_global: Tensor, edges: np.ndarray,
                    w: Tensor, neg_ratio: int = 1, seed=0) -> Tensor:
    """Negative mean log-likelihood of the edge set.

    Each edge (i, j) scores [z_i_local, z_j_global] . w through the
    logistic function; ``neg_ratio`` non-edges per edge enter as negatives.
    On a complete graph negatives are skipped.
    """
    edges = np.asarray(edges, dtype=np.int64)
    if len(edges) == 0:
        raise ContractError("generative loss needs at least one edge")
    n = z_local.shape[0]
    c = z_local.shape[1]
    if w.shape != (2 * c, 1):
        raise ContractError(f"w must be ({2 * c}, 1), got {w.shape}")
    if neg_ratio < 0:
        raise ConfigError("neg_ratio must be nonnegative")
    w_head = ad.take_rows(w, np.arange(c))
    w_tail = ad.take_rows(w, np.arange(c, 2 * c))

    def scores(pairs: np.ndarray) -> Tensor:
        return ad.add(ad.matmul(ad.take_rows(z_local, pairs[:, 0]), w_head),
                      ad.matmul(ad.take_rows(z_global, pairs[:, 1]), w_tail))

    # -ln sigmoid(s) = softplus(-s); -ln(1 - sigmoid(s)) = softplus(s)
    pos = ad.tsum(ad.softplus(ad.scale(scores(edges), -1.0)))
    total_terms = len(edges)
    neg_pairs = sample_non_edges(n, edges, neg_ratio * len(edges), seed)
    if len(neg_pairs):
        neg = ad.tsum(ad.softplus(scores(neg_pairs)))
        pos = ad.add(pos, neg)
        total_terms += len(neg_pairs)
    return ad.scale(pos, 1.0 / total_terms)


def cross_entropy(o_probs: Tensor, y: np.ndarray, labeled_idx: np.ndarray) -> Tensor:
    """-sum_i sum_j Y_ij ln O_ij over labeled nodes; probabilities floored
    at 1e-12 before the log."""
    labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (labeled_idx.size, o_probs.shape[1]):
        raise ContractError(f"one-hot matrix {y.shape} does not match "
                            f"{labeled_idx.size} labeled nodes x {o_probs.shape[1]} classes")
    if labeled_idx.size == 0:
        return ad.constant(np.zeros((1, 1)))
    rows = ad.take_rows(o_probs, labeled_idx)
    logs = ad.log(ad.clamp_min(rows, PROB_FLOOR))
    return ad.scale(ad.tsum(ad.mul(ad.constant(y), logs)), -1.0)


def total_loss(ce: Tensor, ssc_unsup: Tensor, ssc_sup: Tensor, gen: Tensor,
               lambda_ssc: float, lambda_g2: float) -> tuple[Tensor, LossBreakdown]:
    """Weighted assembly of the full objective; returns the scalar tensor
    for backward plus the per-term float breakdown."""
    if lambda_ssc < 0 or lambda_g2 < 0:
        raise ConfigError("loss weights must be nonnegative")
    total = ce
    if lambda_ssc != 0.0:
        total = ad.add(total, ad.scale(ad.add(ssc_unsup, ssc_sup), lambda_ssc))
    if lambda_g2 != 0.0:
        total = ad.add(total, ad.scale(gen, lambda_g2))
    breakdown = LossBreakdown(ce.item(), ssc_unsup.item(), ssc_sup.item(),
                              gen.item(), total.item(), lambda_ssc, lambda_g2)
    return total, breakdown
