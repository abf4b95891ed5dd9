"""IDX ingestion, 28x28 -> 4x4 preprocessing and Dirichlet label partitioning."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TROUSER, ANKLE_BOOT = 1, 9

DATA_ROOT_ENV = "PQFL_DATA_ROOT"

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    """Base class for malformed IDX input; messages name the offending file."""


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass
class RawDataset:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "RawDataset":
        return RawDataset(self.images[idx], self.labels[idx])


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(path, magic: int, header_ints: int) -> tuple[tuple[int, ...], bytes]:
    raw = _read_bytes(path)
    if len(raw) < 4 * header_ints:
        raise TruncatedFileError(f"{path}: header needs {4 * header_ints} bytes, file has {len(raw)}")
    header = struct.unpack(f">{header_ints}I", raw[: 4 * header_ints])
    if header[0] != magic:
        raise BadMagicError(f"{path}: magic 0x{header[0]:08x}, expected 0x{magic:08x}")
    return header[1:], raw[4 * header_ints :]


def load_idx(images_path, labels_path) -> RawDataset:
    (count, rows, cols), body = _parse_idx(images_path, IMAGE_MAGIC, 4)
    if len(body) < count * rows * cols:
        raise TruncatedFileError(
            f"{images_path}: expected {count * rows * cols} pixel bytes, found {len(body)}"
        )
    images = np.frombuffer(body, dtype=np.uint8, count=count * rows * cols).reshape(count, rows, cols)

    (n_labels,), body = _parse_idx(labels_path, LABEL_MAGIC, 2)
    if len(body) < n_labels:
        raise TruncatedFileError(f"{labels_path}: expected {n_labels} label bytes, found {len(body)}")
    labels = np.frombuffer(body, dtype=np.uint8, count=n_labels)

    if n_labels != count:
        raise CountMismatchError(f"{images_path} has {count} images but {labels_path} has {n_labels} labels")
    return RawDataset(images.copy(), labels.copy())


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"no {stem}[.gz] under {root}")


def bundled_root() -> Path:
    """Directory of the shipped trouser/ankle-boot subset of FashionMNIST."""
    return Path(str(resources.files("pqfl") / "data" / "fashion_trouser_boot"))


def resolve_root(root=None) -> Path:
    if root is None:
        root = os.environ.get(DATA_ROOT_ENV)
    return Path(root) if root is not None else bundled_root()


def load_split(split: str, root=None) -> RawDataset:
    root = resolve_root(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    img, lab = SPLIT_FILES[split]
    return load_idx(_find(root, img), _find(root, lab))


def filter_binary(ds: RawDataset, class_a: int = TROUSER, class_b: int = ANKLE_BOOT) -> RawDataset:
    """Keep two classes, in order, relabelled ``class_a -> 0`` and ``class_b -> 1``."""
    if class_a == class_b:
        raise ValueError("the two classes must differ")
    keep = (ds.labels == class_a) | (ds.labels == class_b)
    if not keep.any():
        raise ValueError(f"no samples with label {class_a} or {class_b}")
    labels = (ds.labels[keep] == class_b).astype(np.uint8)
    return RawDataset(ds.images[keep], labels)


def pool(images: np.ndarray, out: int = 4) -> np.ndarray:
    """Block-average ``(..., H, W)`` images down to ``(..., out, out)``."""
    images = np.asarray(images, dtype=float)
    h, w = images.shape[-2:]
    if h % out or w % out:
        raise ValueError(f"{h}x{w} image does not tile into {out}x{out} blocks")
    bh, bw = h // out, w // out
    blocks = images.reshape(images.shape[:-2] + (out, bh, out, bw))
    return blocks.mean(axis=(-3, -1))


def preprocess(image) -> np.ndarray:
    """28x28 bytes -> 16 unit-norm features (7x7 average pooling, row-major)."""
    feats = pool(np.asarray(image)).reshape(-1)
    norm = np.linalg.norm(feats)
    if norm == 0:
        raise ValueError("all-zero image cannot be amplitude encoded")
    return feats / norm


def preprocess_batch(images) -> np.ndarray:
    feats = pool(np.asarray(images)).reshape(len(images), -1)
    norms = np.linalg.norm(feats, axis=1)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0)
        raise ValueError(f"all-zero image(s) at index {bad.tolist()} cannot be amplitude encoded")
    return feats / norms[:, None]


@dataclass
class PartitionMatrix:
    d: np.ndarray  # (Y, M); row y is the share of label y held by each client
    alpha: float

    @property
    def Y(self) -> int:
        return self.d.shape[0]

    @property
    def M(self) -> int:
        return self.d.shape[1]


def sample_partition_matrix(alpha: float, Y: int, M: int, rng: np.random.Generator) -> PartitionMatrix:
    """Each row drawn from a symmetric Dirichlet(alpha) over M clients via normalized gammas."""
    if not alpha > 0:
        raise ValueError(f"Dirichlet concentration must be positive, got {alpha}")
    g = rng.gamma(alpha, 1.0, size=(Y, M))
    sums = g.sum(axis=1, keepdims=True)
    # tiny alpha can underflow every draw in a row; put that label on one client
    empty = sums[:, 0] == 0
    if empty.any():
        g[empty] = np.eye(M)[rng.integers(M, size=int(empty.sum()))]
        sums = g.sum(axis=1, keepdims=True)
    return PartitionMatrix(g / sums, float(alpha))


def largest_remainder(shares, total: int) -> np.ndarray:
    """Integer split of ``total`` proportional to ``shares`` that sums exactly to ``total``.

    Leftover units go to the largest fractional parts, lower index first on ties.
    """
    shares = np.asarray(shares, dtype=float)
    exact = shares / shares.sum() * total
    counts = np.floor(exact).astype(int)
    left = total - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:left]] += 1
    return counts


def partition_indices(labels, D: PartitionMatrix, rng: np.random.Generator) -> list[np.ndarray]:
    labels = np.asarray(labels)
    present = np.unique(labels)
    if present.size and (present.max() >= D.Y or present.min() < 0):
        raise ValueError(f"labels {present.tolist()} do not fit a {D.Y}-row partition matrix")
    chunks = [[] for _ in range(D.M)]
    for y in range(D.Y):
        idx = rng.permutation(np.flatnonzero(labels == y))
        bounds = np.concatenate([[0], np.cumsum(largest_remainder(D.d[y], len(idx)))])
        for m in range(D.M):
            chunks[m].append(idx[bounds[m] : bounds[m + 1]])
    return [np.sort(np.concatenate(c)) for c in chunks]


def partition(ds: RawDataset, D: PartitionMatrix, rng: np.random.Generator) -> list[RawDataset]:
    """Split ``ds`` across ``D.M`` clients following the label shares in ``D``."""
    return [ds.subset(idx) for idx in partition_indices(ds.labels, D, rng)]


def subsample(ds: RawDataset, cap: int | None, rng: np.random.Generator) -> RawDataset:
    """Random subset of at most ``cap`` samples, original order kept."""
    if cap is None or len(ds) <= cap:
        return ds
    return ds.subset(np.sort(rng.choice(len(ds), size=cap, replace=False)))
