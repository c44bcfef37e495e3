"""Dataset files, manifests and the labeled/unlabeled pixel split.

Two tiny little-endian binary formats carry the rasters:

* cube file, magic ``HSIT``: u32 version=1, u32 H, u32 W, u32 B, then
  H*W*B float32 values in row-major order with the band index fastest.
* label file, magic ``HSIL``: u32 version=1, u32 H, u32 W, u16 class
  count, then H*W uint16 labels (0 = unlabeled/background).

The manifest is a UTF-8 ``key=value`` text file naming the dataset, its
band count, and the ordered class list with per-class labeled quotas.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError, SplitError

CUBE_MAGIC = b"HSIT"
LABEL_MAGIC = b"HSIL"
FORMAT_VERSION = 1

# Largest payload we will try to allocate (guards against corrupt headers).
_MAX_ELEMENTS = 1 << 31


@dataclass
class HsiCube:
    """Hyperspectral raster; data indexed (row, col, band)."""

    height: int
    width: int
    bands: int
    data: np.ndarray  # (H, W, B) float64

    def __post_init__(self):
        if min(self.height, self.width, self.bands) < 1:
            raise FormatError("cube dimensions must be >= 1")
        if self.data.shape != (self.height, self.width, self.bands):
            raise FormatError(f"cube payload shape {self.data.shape} does not match header")
        if not np.isfinite(self.data).all():
            raise FormatError("cube contains non-finite values")


@dataclass
class LabelMap:
    """Per-pixel ground truth; 0 means unlabeled, classes are 1..n_classes."""

    height: int
    width: int
    n_classes: int
    labels: np.ndarray  # (H, W) int32

    def __post_init__(self):
        if self.labels.shape != (self.height, self.width):
            raise FormatError("label payload shape does not match header")
        if self.labels.min() < 0 or self.labels.max() > self.n_classes:
            raise FormatError("labels exceed the declared class count")

    def annotated_pixels(self) -> np.ndarray:
        """Flat indices (row-major) of pixels with a class."""
        return np.flatnonzero(self.labels.ravel() > 0)


@dataclass
class DatasetManifest:
    name: str
    bands: int
    class_names: list[str]
    quotas: list[int]
    notes: str = ""

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __post_init__(self):
        if len(self.quotas) != len(self.class_names):
            raise FormatError("manifest quota count does not match class count")
        if any(q < 1 for q in self.quotas):
            raise FormatError("manifest quotas must be positive")


@dataclass(frozen=True)
class SplitSpec:
    """Sampled labeled pixels and their train/validation partition.

    All index arrays hold flat row-major pixel indices, sorted ascending.
    Everything annotated but not labeled is the test set.
    """

    seed: int
    labeled_by_class: dict[int, np.ndarray]
    train_by_class: dict[int, np.ndarray]
    val_by_class: dict[int, np.ndarray]

    def _concat(self, groups: dict[int, np.ndarray]) -> np.ndarray:
        if not groups:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([groups[k] for k in sorted(groups)]))

    @property
    def labeled_pixels(self) -> np.ndarray:
        return self._concat(self.labeled_by_class)

    @property
    def train_pixels(self) -> np.ndarray:
        return self._concat(self.train_by_class)

    @property
    def val_pixels(self) -> np.ndarray:
        return self._concat(self.val_by_class)

    def test_pixels(self, labels: LabelMap) -> np.ndarray:
        return np.setdiff1d(labels.annotated_pixels(), self.labeled_pixels)


# ---------------------------------------------------------------------------
# binary io


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def load_cube(path) -> HsiCube:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CUBE_MAGIC:
            raise FormatError(f"bad cube magic {magic!r}")
        version, h, w, b = struct.unpack("<IIII", _read_exact(fh, 16, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported cube version {version}")
        if min(h, w, b) < 1 or h * w * b > _MAX_ELEMENTS:
            raise FormatError(f"implausible cube dimensions {h}x{w}x{b}")
        payload = _read_exact(fh, 4 * h * w * b, "cube payload")
        if fh.read(1):
            raise FormatError("trailing bytes after cube payload")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(h, w, b)
    return HsiCube(h, w, b, data)


def save_cube(cube: HsiCube, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, cube.height, cube.width, cube.bands))
        fh.write(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())


def load_labels(path) -> LabelMap:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != LABEL_MAGIC:
            raise FormatError(f"bad label magic {magic!r}")
        version, h, w = struct.unpack("<III", _read_exact(fh, 12, "header"))
        (c,) = struct.unpack("<H", _read_exact(fh, 2, "class count"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported label version {version}")
        if min(h, w) < 1 or h * w > _MAX_ELEMENTS:
            raise FormatError(f"implausible label dimensions {h}x{w}")
        payload = _read_exact(fh, 2 * h * w, "label payload")
        if fh.read(1):
            raise FormatError("trailing bytes after label payload")
    labels = np.frombuffer(payload, dtype="<u2").astype(np.int32).reshape(h, w)
    return LabelMap(h, w, c, labels)


def save_labels(labels: LabelMap, path) -> None:
    if labels.n_classes > 0xFFFF:
        raise FormatError("class count exceeds u16")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<IIIH", FORMAT_VERSION, labels.height, labels.width,
                             labels.n_classes))
        fh.write(np.ascontiguousarray(labels.labels, dtype="<u2").tobytes())


# ---------------------------------------------------------------------------
# manifest


def load_manifest(path) -> DatasetManifest:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"manifest line {lineno} is not key=value: {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    try:
        name = pairs["name"]
        bands = int(pairs["bands"])
        n_classes = int(pairs["classes"])
    except KeyError as exc:
        raise FormatError(f"manifest missing key {exc}") from None
    names, quotas = [], []
    for k in range(1, n_classes + 1):
        if f"class.{k}" not in pairs or f"quota.{k}" not in pairs:
            raise FormatError(f"manifest missing class.{k}/quota.{k}")
        names.append(pairs[f"class.{k}"])
        quotas.append(int(pairs[f"quota.{k}"]))
    return DatasetManifest(name, bands, names, quotas, pairs.get("notes", ""))


def save_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"name={manifest.name}", f"bands={manifest.bands}",
             f"classes={manifest.n_classes}"]
    for k, (cname, quota) in enumerate(zip(manifest.class_names, manifest.quotas), 1):
        lines.append(f"class.{k}={cname}")
        lines.append(f"quota.{k}={quota}")
    if manifest.notes:
        lines.append(f"notes={manifest.notes}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def derive_quotas(labels: LabelMap) -> list[int]:
    """Per-class labeled quota: 30, or 15 for classes with < 30 annotated pixels."""
    flat = labels.labels.ravel()
    return [30 if int((flat == k).sum()) >= 30 else 15
            for k in range(1, labels.n_classes + 1)]


def manifest_from_labels(name: str, bands: int, labels: LabelMap,
                         class_names: list[str] | None = None) -> DatasetManifest:
    if class_names is None:
        class_names = [f"Class {k}" for k in range(1, labels.n_classes + 1)]
    if len(class_names) != labels.n_classes:
        raise ConfigError("class name list does not match label map class count")
    return DatasetManifest(name, bands, list(class_names), derive_quotas(labels))


# ---------------------------------------------------------------------------
# split sampling


def sample_split(labels: LabelMap, manifest: DatasetManifest, seed: int) -> SplitSpec:
    """Sample per-class labeled pixels and split them 90/10 into train/val.

    Per class, min(quota, available) pixels are drawn without replacement;
    the validation share is 10% (at least one pixel whenever the class has
    two or more labeled pixels).  Deterministic for a given seed.
    """
    if manifest.n_classes != labels.n_classes:
        raise ConfigError(
            f"manifest lists {manifest.n_classes} classes, label map has {labels.n_classes}")
    rng = np.random.default_rng(seed)
    flat = labels.labels.ravel()
    labeled, train, val = {}, {}, {}
    for k in range(1, labels.n_classes + 1):
        avail = np.flatnonzero(flat == k)
        if avail.size == 0:
            raise SplitError(f"class {k} ({manifest.class_names[k - 1]}) has no annotated pixels")
        take = min(manifest.quotas[k - 1], avail.size)
        drawn = rng.permutation(avail)[:take]
        n_val = max(1, take // 10) if take >= 2 else 0
        labeled[k] = np.sort(drawn)
        val[k] = np.sort(drawn[take - n_val:])
        train[k] = np.sort(drawn[:take - n_val])
    return SplitSpec(seed=seed, labeled_by_class=labeled, train_by_class=train,
                     val_by_class=val)


def build_label_matrix(node_classes: np.ndarray, n_classes: int) -> np.ndarray:
    """One-hot rows for labeled nodes; class ids are 1-based."""
    node_classes = np.asarray(node_classes, dtype=np.int64)
    if node_classes.size == 0:
        return np.zeros((0, n_classes))
    if node_classes.min() < 1 or node_classes.max() > n_classes:
        raise ContractError("labeled node without a valid class id")
    y = np.zeros((node_classes.size, n_classes))
    y[np.arange(node_classes.size), node_classes - 1] = 1.0
    return y
