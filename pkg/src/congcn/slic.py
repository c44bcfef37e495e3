"""SLIC superpixel segmentation over hyperspectral cubes.

Local k-means in joint (spectrum, position) space with distance
``sqrt(d_spec^2 + (m/S)^2 * d_xy^2)``, followed by a connectivity pass
that merges orphan fragments into their dominant spatial neighbor.
The cube should be per-band min-max normalized first (``normalize_bands``)
so one compactness value behaves comparably across datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import HsiCube, LabelMap, SplitSpec
from .errors import ContractError

DEFAULT_COMPACTNESS = 0.1
DEFAULT_ITERS = 10


@dataclass
class Segmentation:
    height: int
    width: int
    n: int
    assignment: np.ndarray       # (H, W) int32, ids 0..n-1
    centers_xy: np.ndarray       # (n, 2) float64 centroids (row, col)
    centers_spectrum: np.ndarray  # (n, d) float64 mean spectra


@dataclass
class NodeLabels:
    """Per-superpixel labels.

    ``eval_label`` is the majority annotated class inside the superpixel
    (0 when none) and drives evaluation.  ``train_label`` is the majority
    class among the split's sampled training pixels inside the superpixel
    (0 when there are none); only those nodes enter the supervised losses.
    Ties break toward the smallest class id.
    """

    eval_label: np.ndarray  # (n,) int32
    train_label: np.ndarray  # (n,) int32


def normalize_bands(cube: HsiCube) -> HsiCube:
    """Min-max normalize each band to [0, 1]; constant bands become 0."""
    data = cube.data
    lo = data.min(axis=(0, 1), keepdims=True)
    hi = data.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    span[span == 0.0] = 1.0
    return HsiCube(cube.height, cube.width, cube.bands, (data - lo) / span)


def default_segment_count(height: int, width: int, n_classes: int | None = None) -> int:
    """Enough nodes for contrastive pairs while keeping dense matrices small."""
    floor = height * width // 400
    if n_classes is not None:
        floor = max(floor, n_classes * 40)
    return max(2, min(floor, height * width))


def slic_segment(cube: HsiCube, n_target: int,
                 compactness: float = DEFAULT_COMPACTNESS,
                 iters: int = DEFAULT_ITERS, seed: int = 0) -> Segmentation:
    """Segment the cube into roughly ``n_target`` compact superpixels.

    Deterministic for fixed inputs; ``seed`` is accepted for interface
    stability but the procedure itself draws no random numbers.
    """
    h, w, d = cube.height, cube.width, cube.bands
    if n_target < 2:
        raise ContractError("n_target must be >= 2")
    if n_target > h * w:
        raise ContractError(f"n_target {n_target} exceeds pixel count {h * w}")
    if iters < 1:
        raise ContractError("iters must be >= 1")

    data = cube.data
    step = float(np.sqrt(h * w / n_target))
    ny = max(1, round(h / step))
    nx = max(1, round(w / step))
    cy = (np.arange(ny) + 0.5) * (h / ny)
    cx = (np.arange(nx) + 0.5) * (w / nx)
    centers_xy = np.array([(y, x) for y in cy for x in cx])
    px = np.clip(np.round(centers_xy).astype(int), 0, [h - 1, w - 1])
    centers_spec = data[px[:, 0], px[:, 1], :].copy()
    n0 = len(centers_xy)

    # Initial tiling: each pixel belongs to its grid cell.
    gy = np.minimum((np.arange(h) / (h / ny)).astype(int), ny - 1)
    gx = np.minimum((np.arange(w) / (w / nx)).astype(int), nx - 1)
    assignment = (gy[:, None] * nx + gx[None, :]).astype(np.int32)

    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    spatial_w = (compactness / step) ** 2

    for _ in range(iters):
        best = np.full((h, w), np.inf)
        new_assign = assignment.copy()
        for k in range(n0):
            ky, kx = centers_xy[k]
            y0, y1 = max(0, int(ky - step)), min(h, int(ky + step) + 1)
            x0, x1 = max(0, int(kx - step)), min(w, int(kx + step) + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            win = data[y0:y1, x0:x1, :]
            d_spec = ((win - centers_spec[k]) ** 2).sum(axis=2)
            d_xy = (rows[y0:y1, None] - ky) ** 2 + (cols[None, x0:x1] - kx) ** 2
            dist = d_spec + spatial_w * d_xy
            better = dist < best[y0:y1, x0:x1]
            new_assign[y0:y1, x0:x1][better] = k
            best[y0:y1, x0:x1][better] = dist[better]
        assignment = new_assign
        # Recompute centers; empty clusters keep their previous position.
        flat = assignment.ravel()
        counts = np.bincount(flat, minlength=n0).astype(np.float64)
        occupied = counts > 0
        yy, xx = np.meshgrid(rows, cols, indexing="ij")
        sum_y = np.bincount(flat, weights=yy.ravel(), minlength=n0)
        sum_x = np.bincount(flat, weights=xx.ravel(), minlength=n0)
        centers_xy[occupied, 0] = sum_y[occupied] / counts[occupied]
        centers_xy[occupied, 1] = sum_x[occupied] / counts[occupied]
        for b in range(d):
            sb = np.bincount(flat, weights=data[:, :, b].ravel(), minlength=n0)
            centers_spec[occupied, b] = sb[occupied] / counts[occupied]

    assignment = _enforce_connectivity(assignment)
    n = int(assignment.max()) + 1
    flat = assignment.ravel()
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    centers_xy = np.stack([np.bincount(flat, weights=yy.ravel(), minlength=n) / counts,
                           np.bincount(flat, weights=xx.ravel(), minlength=n) / counts],
                          axis=1)
    spec = np.stack([np.bincount(flat, weights=data[:, :, b].ravel(), minlength=n) / counts
                     for b in range(d)], axis=1)
    return Segmentation(h, w, n, assignment, centers_xy, spec)


def _components(assignment: np.ndarray):
    """Connected components (4-adjacency) of equal-valued regions."""
    h, w = assignment.shape
    comp = np.full((h, w), -1, dtype=np.int32)
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    next_id = 0
    for sp in np.unique(assignment):
        lab, cnt = ndimage.label(assignment == sp, structure=structure)
        comp[lab > 0] = lab[lab > 0] + next_id - 1
        next_id += cnt
    return comp, next_id


def _enforce_connectivity(assignment: np.ndarray) -> np.ndarray:
    """Merge every non-dominant fragment into its most frequent 4-neighbor id.

    Repeats until each superpixel id is a single connected region, then
    relabels ids to a contiguous 0..n-1 range (ascending original id).
    """
    assignment = assignment.copy()
    h, w = assignment.shape
    while True:
        comp, n_comp = _components(assignment)
        sizes = np.bincount(comp.ravel(), minlength=n_comp)
        # Dominant component per superpixel id = the largest (first on ties,
        # which is the earliest in scan order).
        orphans = []
        for sp in np.unique(assignment):
            comp_ids = np.unique(comp[assignment == sp])
            if len(comp_ids) <= 1:
                continue
            main = comp_ids[np.argmax(sizes[comp_ids])]
            orphans.extend(int(cid) for cid in comp_ids if cid != main)
        if not orphans:
            break
        for cid in sorted(orphans):
            mask = comp == cid
            if not mask.any():
                continue
            neigh = _boundary_neighbor_ids(assignment, mask)
            if neigh.size == 0:
                continue  # whole image is one id; nothing to merge into
            vals, counts = np.unique(neigh, return_counts=True)
            target = vals[counts == counts.max()].min()
            assignment[mask] = target
    ids = np.unique(assignment)
    remap = np.zeros(ids.max() + 1, dtype=np.int32)
    remap[ids] = np.arange(len(ids), dtype=np.int32)
    return remap[assignment]


def _boundary_neighbor_ids(assignment: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Ids of pixels 4-adjacent to ``mask`` but outside it."""
    own = assignment[mask]
    own_id = own[0]
    shifted = np.zeros_like(mask)
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        s = np.zeros_like(mask)
        if dy == 1:
            s[1:, :] = mask[:-1, :]
        elif dy == -1:
            s[:-1, :] = mask[1:, :]
        elif dx == 1:
            s[:, 1:] = mask[:, :-1]
        else:
            s[:, :-1] = mask[:, 1:]
        shifted |= s
    ring = shifted & ~mask
    vals = assignment[ring]
    return vals[vals != own_id]


def node_features(cube: HsiCube, seg: Segmentation) -> np.ndarray:
    """Row i = mean spectrum of superpixel i (n x d)."""
    if (cube.height, cube.width) != (seg.height, seg.width):
        raise ContractError("cube and segmentation dimensions differ")
    flat = seg.assignment.ravel()
    counts = np.bincount(flat, minlength=seg.n).astype(np.float64)
    feats = np.stack(
        [np.bincount(flat, weights=cube.data[:, :, b].ravel(), minlength=seg.n) / counts
         for b in range(cube.bands)], axis=1)
    return feats


def _majority_by_node(n: int, node_of_pixel: np.ndarray, classes: np.ndarray,
                      n_classes: int) -> np.ndarray:
    """Most frequent class per node; ties toward the smallest class id."""
    out = np.zeros(n, dtype=np.int32)
    if classes.size == 0:
        return out
    counts = np.zeros((n, n_classes + 1), dtype=np.int64)
    np.add.at(counts, (node_of_pixel, classes), 1)
    counts[:, 0] = 0
    hit = counts.sum(axis=1) > 0
    out[hit] = counts[hit].argmax(axis=1)
    return out


def node_labels(labels: LabelMap, seg: Segmentation,
                split: SplitSpec | None = None) -> NodeLabels:
    if (labels.height, labels.width) != (seg.height, seg.width):
        raise ContractError("label map and segmentation dimensions differ")
    flat_labels = labels.labels.ravel()
    flat_assign = seg.assignment.ravel()
    annotated = np.flatnonzero(flat_labels > 0)
    eval_label = _majority_by_node(seg.n, flat_assign[annotated],
                                   flat_labels[annotated], labels.n_classes)
    if split is None:
        train_label = np.zeros(seg.n, dtype=np.int32)
    else:
        train_px = split.train_pixels
        train_label = _majority_by_node(seg.n, flat_assign[train_px],
                                        flat_labels[train_px], labels.n_classes)
    return NodeLabels(eval_label, train_label)
