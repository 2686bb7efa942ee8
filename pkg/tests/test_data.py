import gzip
import struct

import numpy as np
import pytest

from pnml.data import (CheckpointError, Dataset, IdxFormatError,
                       gaussian_noise_inputs, load_checkpoint, load_idx,
                       mnist_available, load_mnist, randomize_labels,
                       save_checkpoint, synth_blobs)
from pnml.nn import forward
from pnml.training import HyperParams, accuracy, erm_fit

from conftest import rand_model


def write_idx(tmp_path, pixels, labels, image_magic=0x803, label_magic=0x801,
              n_labels=None):
    n, rows, cols = pixels.shape
    img = tmp_path / "images-idx3-ubyte"
    lab = tmp_path / "labels-idx1-ubyte"
    img.write_bytes(struct.pack(">IIII", image_magic, n, rows, cols)
                    + pixels.astype(np.uint8).tobytes())
    lab.write_bytes(struct.pack(">II", label_magic,
                                n if n_labels is None else n_labels)
                    + np.asarray(labels, dtype=np.uint8).tobytes())
    return img, lab


def test_load_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    labels = [0, 1, 2, 9, 5]
    img, lab = write_idx(tmp_path, pixels, labels)
    ds = load_idx(img, lab)
    assert ds.num_samples == 5
    assert ds.features.shape == (5, 12)
    assert ds.labels.tolist() == labels
    assert ds.features.min() >= -1.0 and ds.features.max() <= 1.0


def test_load_idx_pixel_endpoints(tmp_path):
    pixels = np.array([[[0, 255]]], dtype=np.uint8)
    img, lab = write_idx(tmp_path, pixels, [3])
    ds = load_idx(img, lab)
    assert ds.features[0, 0] == -1.0
    assert ds.features[0, 1] == 1.0


def test_load_idx_limit_preserves_order(tmp_path):
    pixels = np.arange(6 * 4, dtype=np.uint8).reshape(6, 2, 2)
    img, lab = write_idx(tmp_path, pixels, [0, 1, 2, 3, 4, 5])
    ds = load_idx(img, lab, limit=3)
    assert ds.num_samples == 3
    assert ds.labels.tolist() == [0, 1, 2]
    full = load_idx(img, lab)
    assert np.array_equal(ds.features, full.features[:3])


def test_load_idx_gzip(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    img, lab = write_idx(tmp_path, pixels, [1, 0])
    for p in (img, lab):
        gz = p.with_suffix(".gz")
        gz.write_bytes(gzip.compress(p.read_bytes()))
    ds = load_idx(str(img) + "", str(lab))
    ds_gz = load_idx(tmp_path / "images-idx3-ubyte.gz",
                     tmp_path / "labels-idx1-ubyte.gz")
    assert np.array_equal(ds.features, ds_gz.features)


def test_load_idx_errors(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    img, lab = write_idx(tmp_path, pixels, [0, 1], image_magic=0x123)
    with pytest.raises(IdxFormatError):
        load_idx(img, lab)
    img, lab = write_idx(tmp_path, pixels, [0, 1], label_magic=0x123)
    with pytest.raises(IdxFormatError):
        load_idx(img, lab)
    img, lab = write_idx(tmp_path, pixels, [0, 1], n_labels=5)
    with pytest.raises(IdxFormatError):
        load_idx(img, lab)
    img, lab = write_idx(tmp_path, pixels, [0, 1])
    img.write_bytes(img.read_bytes()[:-3])
    with pytest.raises(IdxFormatError):
        load_idx(img, lab)


@pytest.mark.skipif(not mnist_available(), reason="MNIST IDX files not present")
def test_load_canonical_mnist_headers():
    train = load_mnist("train")
    assert train.num_samples == 60000
    assert train.features.shape[1] == 784
    assert train.num_classes == 10


def test_synth_blobs_deterministic_and_bounded():
    a = synth_blobs(10, 3, 5, 8.0, 42)
    b = synth_blobs(10, 3, 5, 8.0, 42)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert a.features.min() >= -1.0 and a.features.max() <= 1.0
    assert a.num_samples == 30
    with pytest.raises(ValueError):
        synth_blobs(0, 3, 5, 8.0, 42)


def test_blobs_separable_after_training():
    ds = synth_blobs(20, 3, 6, 50.0, 5)
    hp = HyperParams(lr_schedule=((0, 0.5),), epochs=200, batch_size=10, seed=2)
    erm = erm_fit(ds, [6, 3], hp)
    assert accuracy(erm, ds) == 1.0


def test_noise_inputs():
    a = gaussian_noise_inputs(50, 7, 1)
    b = gaussian_noise_inputs(50, 7, 1)
    assert np.array_equal(a, b)
    assert a.shape == (50, 7)
    assert a.min() >= -1.0 and a.max() <= 1.0


def test_randomize_labels_identity_at_zero():
    ds = synth_blobs(10, 4, 3, 5.0, 0)
    out = randomize_labels(ds, 0.0, 123)
    assert np.array_equal(out.labels, ds.labels)


def test_randomize_labels_full_redraw_uniform():
    ds = Dataset(np.zeros((10000, 1)), np.zeros(10000, dtype=np.int64), 10)
    out = randomize_labels(ds, 1.0, 9)
    counts = np.bincount(out.labels, minlength=10)
    assert counts.min() > 800  # roughly uniform over 10 classes


def test_randomize_labels_changed_fraction():
    ds = Dataset(np.zeros((10000, 1)), np.zeros(10000, dtype=np.int64), 10)
    out = randomize_labels(ds, 0.5, 7)
    changed = np.mean(out.labels != ds.labels)
    assert changed == pytest.approx(0.45, abs=0.02)


def test_checkpoint_roundtrip(tmp_path, rng):
    m = rand_model(rng, [4, 6, 3])
    path = tmp_path / "ckpt.json"
    save_checkpoint(m, path)
    m2 = load_checkpoint(path)
    for a, b in zip(m.layers, m2.layers):
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.bias, b.bias)


def test_checkpoint_hand_written(tmp_path):
    path = tmp_path / "hand.json"
    path.write_text(
        '{"arch": [2, 2], "layers": [{"rows": 2, "cols": 2,'
        ' "weight": [1.0, 0.0, 0.0, 1.0], "bias": [0.0, 0.6931471805599453]}]}'
    )
    m = load_checkpoint(path)
    out = forward(m, np.array([0.0, 0.0]))
    # logits [0, ln 2] -> probabilities [1/3, 2/3]
    assert np.allclose(out, [1 / 3, 2 / 3], atol=1e-12)


def test_checkpoint_missing_field(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"layers": [{"rows": 1, "cols": 1, "weight": [1.0]}]}')
    with pytest.raises(CheckpointError, match=r"layers\[0\]"):
        load_checkpoint(path)
    path.write_text("not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
