"""Superpixel segmentation, node features, node labels."""

import numpy as np
import pytest

from congcn import slic
from congcn.data import DatasetManifest, HsiCube, LabelMap, sample_split
from congcn.errors import ContractError


def _constant_cube(h=20, w=20, b=3, value=0.5):
    return HsiCube(h, w, b, np.full((h, w, b), value))


def test_partition_every_pixel_assigned():
    cube = _constant_cube()
    seg = slic.slic_segment(cube, 9)
    assert seg.assignment.min() >= 0
    assert seg.assignment.max() == seg.n - 1
    assert set(np.unique(seg.assignment)) == set(range(seg.n))


def test_constant_cube_gives_grid_tiles():
    cube = _constant_cube(24, 24, 2)
    seg = slic.slic_segment(cube, 9)
    # Zero spectral term: tiles stay within a grid-cell-sized bound.
    step = np.sqrt(24 * 24 / 9)
    for k in range(seg.n):
        ys, xs = np.nonzero(seg.assignment == k)
        assert np.ptp(ys) <= 2 * step and np.ptp(xs) <= 2 * step


def test_two_half_cube_respects_boundary():
    h, w = 20, 20
    data = np.zeros((h, w, 1))
    data[:, w // 2:, 0] = 1.0
    cube = HsiCube(h, w, 1, data)
    seg = slic.slic_segment(cube, 8, compactness=0.01)
    # No superpixel straddles the contrast edge.
    left_ids = np.unique(seg.assignment[:, :w // 2])
    right_ids = np.unique(seg.assignment[:, w // 2:])
    assert len(np.intersect1d(left_ids, right_ids)) == 0


def test_segmentation_deterministic():
    rng = np.random.default_rng(0)
    cube = HsiCube(16, 16, 4, rng.random((16, 16, 4)))
    a = slic.slic_segment(cube, 10, iters=10, seed=3)
    b = slic.slic_segment(cube, 10, iters=10, seed=3)
    assert np.array_equal(a.assignment, b.assignment)


def test_connectivity_enforced():
    rng = np.random.default_rng(1)
    cube = HsiCube(30, 30, 3, rng.random((30, 30, 3)))
    seg = slic.slic_segment(cube, 16)
    from scipy import ndimage
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    for k in range(seg.n):
        _, count = ndimage.label(seg.assignment == k, structure=structure)
        assert count == 1


def test_parameter_errors():
    cube = _constant_cube(4, 4, 1)
    with pytest.raises(ContractError):
        slic.slic_segment(cube, 1)
    with pytest.raises(ContractError):
        slic.slic_segment(cube, 17)
    with pytest.raises(ContractError):
        slic.slic_segment(cube, 4, iters=0)


def test_node_features_mean_and_singleton():
    data = np.array([[[1.0], [3.0]], [[5.0], [7.0]]])
    cube = HsiCube(2, 2, 1, data)
    assignment = np.array([[0, 0], [1, 2]], dtype=np.int32)
    seg = slic.Segmentation(2, 2, 3, assignment, np.zeros((3, 2)), np.zeros((3, 1)))
    feats = slic.node_features(cube, seg)
    assert feats[0, 0] == pytest.approx(2.0)  # mean of 1 and 3
    assert feats[1, 0] == 5.0 and feats[2, 0] == 7.0  # singletons


def test_node_features_conservation():
    rng = np.random.default_rng(2)
    cube = HsiCube(18, 14, 5, rng.random((18, 14, 5)))
    seg = slic.slic_segment(cube, 12)
    feats = slic.node_features(cube, seg)
    sizes = np.bincount(seg.assignment.ravel(), minlength=seg.n)
    total_by_band = cube.data.reshape(-1, 5).sum(axis=0)
    recomposed = (feats * sizes[:, None]).sum(axis=0)
    assert np.allclose(total_by_band, recomposed, atol=1e-9)


def test_normalize_bands_range_and_constant_band():
    data = np.stack([np.linspace(0, 10, 16).reshape(4, 4),
                     np.full((4, 4), 3.0)], axis=2)
    normed = slic.normalize_bands(HsiCube(4, 4, 2, data))
    assert normed.data[:, :, 0].min() == 0.0 and normed.data[:, :, 0].max() == 1.0
    assert np.all(normed.data[:, :, 1] == 0.0)


def _two_node_seg():
    assignment = np.array([[0, 0, 1, 1]], dtype=np.int32)
    return slic.Segmentation(1, 4, 2, assignment, np.zeros((2, 2)), np.zeros((2, 1)))


def test_node_labels_majority_and_tie():
    seg = _two_node_seg()
    labels = LabelMap(1, 4, 2, np.array([[1, 1, 1, 2]], dtype=np.int32))
    nl = slic.node_labels(labels, seg)
    assert nl.eval_label[0] == 1  # majority {1, 1}
    assert nl.eval_label[1] == 1  # tie {1, 2} -> smallest class id


def test_node_labels_unlabeled_node():
    seg = _two_node_seg()
    labels = LabelMap(1, 4, 2, np.array([[0, 0, 2, 2]], dtype=np.int32))
    nl = slic.node_labels(labels, seg)
    assert nl.eval_label[0] == 0
    assert nl.eval_label[1] == 2


def test_node_labels_training_uses_split_pixels_only():
    seg = _two_node_seg()
    labels = LabelMap(1, 4, 2, np.array([[1, 1, 2, 2]], dtype=np.int32))
    manifest = DatasetManifest("t", 1, ["a", "b"], [1, 1])
    split = sample_split(labels, manifest, seed=0)
    nl = slic.node_labels(labels, seg, split)
    # Quota 1 per class and one pixel per class sampled: exactly the nodes
    # containing a sampled pixel carry a training label.
    train_px = split.train_pixels
    hit_nodes = set(seg.assignment.ravel()[train_px].tolist())
    for node in range(seg.n):
        if node in hit_nodes:
            assert nl.train_label[node] > 0
        else:
            assert nl.train_label[node] == 0


def test_default_segment_count():
    assert slic.default_segment_count(48, 48, 4) == 160
    assert slic.default_segment_count(100, 100) == 25
    assert slic.default_segment_count(4, 4) == 2
