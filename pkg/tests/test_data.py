import gzip
import os
import struct
from collections import Counter

import numpy as np
import pytest

from pqfl import data as pdata
from pqfl.data import PartitionMatrix


def write_idx(tmp_path, images, labels, img_magic=0x803, lab_magic=0x801, gz=False, chop=0):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img = struct.pack(">4I", img_magic, *images.shape) + images.tobytes()
    lab = struct.pack(">2I", lab_magic, len(labels)) + labels.tobytes()
    ip, lp = tmp_path / "img-idx3-ubyte", tmp_path / "lab-idx1-ubyte"
    if chop:
        img = img[:-chop]
    if gz:
        ip, lp = ip.with_suffix(".gz"), lp.with_suffix(".gz")
        img, lab = gzip.compress(img), gzip.compress(lab)
    ip.write_bytes(img)
    lp.write_bytes(lab)
    return ip, lp


def small_set(n=5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, (n, 28, 28)), rng.integers(0, 10, n)


@pytest.mark.parametrize("gz", [False, True])
def test_load_idx_roundtrip(tmp_path, gz):
    imgs, labs = small_set()
    ds = pdata.load_idx(*write_idx(tmp_path, imgs, labs, gz=gz))
    np.testing.assert_array_equal(ds.images, imgs)
    np.testing.assert_array_equal(ds.labels, labs)
    assert ds.images.dtype == np.uint8


def test_bad_magic_names_file(tmp_path):
    ip, lp = write_idx(tmp_path, *small_set(), img_magic=0x801)
    with pytest.raises(pdata.BadMagicError, match=str(ip)):
        pdata.load_idx(ip, lp)
    ip, lp = write_idx(tmp_path, *small_set(), lab_magic=0x803)
    with pytest.raises(pdata.BadMagicError, match=str(lp)):
        pdata.load_idx(ip, lp)


def test_truncated_file(tmp_path):
    ip, lp = write_idx(tmp_path, *small_set(), chop=10)
    with pytest.raises(pdata.TruncatedFileError, match=str(ip)):
        pdata.load_idx(ip, lp)
    ip.write_bytes(b"\x00\x00")
    with pytest.raises(pdata.TruncatedFileError):
        pdata.load_idx(ip, lp)


def test_count_mismatch(tmp_path):
    imgs, labs = small_set()
    ip, _ = write_idx(tmp_path, imgs, labs)
    (tmp_path / "short").mkdir()
    _, lp = write_idx(tmp_path / "short", imgs[:4], labs[:4])
    with pytest.raises(pdata.CountMismatchError):
        pdata.load_idx(ip, lp)


def test_bundled_counts():
    train = pdata.load_split("train")
    test = pdata.load_split("test")
    assert len(train) == 12000 and len(test) == 2000
    assert Counter(train.labels.tolist()) == {1: 6000, 9: 6000}
    assert Counter(test.labels.tolist()) == {1: 1000, 9: 1000}
    b = pdata.filter_binary(train)
    assert len(b) == 12000 and np.bincount(b.labels).tolist() == [6000, 6000]


@pytest.mark.skipif(not os.environ.get("PQFL_FULL_FASHION_ROOT"), reason="full ten-class IDX files not available")
def test_official_file_counts():
    root = os.environ["PQFL_FULL_FASHION_ROOT"]
    assert len(pdata.load_split("test", root)) == 10000
    train = pdata.load_split("train", root)
    assert len(train) == 60000
    assert len(pdata.filter_binary(train)) == 12000


def test_missing_root_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere"):
        pdata.load_split("train", tmp_path / "nowhere")


def test_env_root_fallback(tmp_path, monkeypatch):
    imgs, labs = small_set()
    ip, lp = write_idx(tmp_path, imgs, labs)
    ip.rename(tmp_path / "t10k-images-idx3-ubyte")
    lp.rename(tmp_path / "t10k-labels-idx1-ubyte")
    monkeypatch.setenv(pdata.DATA_ROOT_ENV, str(tmp_path))
    assert len(pdata.load_split("test")) == 5


def test_filter_binary():
    ds = pdata.RawDataset(np.zeros((4, 28, 28), np.uint8), np.array([1, 9, 3, 1], np.uint8))
    out = pdata.filter_binary(ds, 1, 9)
    assert out.labels.tolist() == [0, 1, 0]
    with pytest.raises(ValueError):
        pdata.filter_binary(ds, 1, 1)
    with pytest.raises(ValueError):
        pdata.filter_binary(ds, 4, 5)


def test_preprocess_examples():
    np.testing.assert_allclose(pdata.preprocess(np.full((28, 28), 200)), 0.25)
    with pytest.raises(ValueError):
        pdata.preprocess(np.zeros((28, 28)))
    img = np.zeros((28, 28))
    img[7:14, 14:21] = 255
    want = np.zeros(16)
    want[1 * 4 + 2] = 1.0
    np.testing.assert_allclose(pdata.preprocess(img), want)


def test_preprocess_unit_norm():
    imgs = np.random.default_rng(1).integers(0, 256, (50, 28, 28))
    feats = pdata.preprocess_batch(imgs)
    np.testing.assert_allclose(np.linalg.norm(feats, axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(feats[3], pdata.preprocess(imgs[3]))


def test_pool_block_average():
    img = np.arange(28 * 28, dtype=float).reshape(28, 28)
    assert pdata.pool(img)[1, 2] == img[7:14, 14:21].mean()


def test_dirichlet_single_client():
    D = pdata.sample_partition_matrix(0.5, 3, 1, np.random.default_rng(0))
    np.testing.assert_array_equal(D.d, np.ones((3, 1)))


def test_dirichlet_concentrated_mean():
    rng = np.random.default_rng(2)
    draws = np.array([pdata.sample_partition_matrix(100, 2, 4, rng).d for _ in range(1000)])
    assert np.abs(draws - 0.25).mean() < 0.03
    np.testing.assert_allclose(draws.sum(axis=2), 1)


def test_dirichlet_rejects_bad_alpha():
    with pytest.raises(ValueError):
        pdata.sample_partition_matrix(0.0, 2, 2, np.random.default_rng(0))


def test_dirichlet_tiny_alpha_rows_valid():
    D = pdata.sample_partition_matrix(1e-3, 50, 3, np.random.default_rng(3))
    np.testing.assert_allclose(D.d.sum(axis=1), 1)
    assert np.isfinite(D.d).all()


def test_partition_full_row():
    labels = np.zeros(100, int)
    parts = pdata.partition_indices(labels, PartitionMatrix(np.array([[1.0, 0.0]]), 1.0), np.random.default_rng(0))
    assert [len(p) for p in parts] == [100, 0]


def test_partition_largest_remainder():
    labels = np.zeros(101, int)
    parts = pdata.partition_indices(labels, PartitionMatrix(np.array([[0.5, 0.5]]), 1.0), np.random.default_rng(0))
    assert sorted(len(p) for p in parts) == [50, 51]
    assert pdata.largest_remainder([0.5, 0.5], 101).tolist() == [51, 50]
    assert pdata.largest_remainder([0.2, 0.3, 0.5], 7).sum() == 7


def test_partition_is_multiset_split():
    rng = np.random.default_rng(4)
    imgs = rng.integers(0, 256, (300, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 2, 300)
    ds = pdata.RawDataset(imgs, labels)
    D = pdata.sample_partition_matrix(1.0, 2, 4, rng)
    parts = pdata.partition(ds, D, rng)
    joined = sorted(p.images[i].tobytes() + bytes([int(p.labels[i])]) for p in parts for i in range(len(p)))
    want = sorted(imgs[i].tobytes() + bytes([int(labels[i])]) for i in range(300))
    assert joined == want


@pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0, 100.0])
@pytest.mark.parametrize("M", [1, 2, 4, 8])
def test_partition_conservation(alpha, M):
    rng = np.random.default_rng([5, M])
    labels = rng.integers(0, 2, 997)
    parts = pdata.partition_indices(labels, pdata.sample_partition_matrix(alpha, 2, M, rng), rng)
    assert sum(len(p) for p in parts) == 997
    assert len(np.unique(np.concatenate(parts))) == 997


def mean_skew(alpha, seeds=200):
    out = []
    for s in range(seeds):
        D = pdata.sample_partition_matrix(alpha, 2, 2, np.random.default_rng(s))
        out.append(np.abs(D.d[0] - 0.5).max())
    return np.mean(out)


def test_skew_monotone_in_alpha():
    assert mean_skew(1.0) > mean_skew(10.0) > mean_skew(100.0)


def test_subsample():
    ds = pdata.RawDataset(np.zeros((10, 28, 28)), np.arange(10))
    out = pdata.subsample(ds, 4, np.random.default_rng(0))
    assert len(out) == 4 and list(out.labels) == sorted(out.labels)
    assert pdata.subsample(ds, None, np.random.default_rng(0)) is ds
