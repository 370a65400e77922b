import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advworkbench.data import (LabeledDataset, SplitSpec, base_patterns, default_split, generate_synthetic,
                               load_idx, save_idx, split)
from advworkbench.errors import (BadMagicError, CountMismatchError, DatasetError, SplitOverflowError,
                                 TruncatedFileError)
from advworkbench.metrics import accuracy
from advworkbench.models import init_params, reference_specs
from advworkbench.train import TrainConfig, train


def write_pair(tmp_path, image_bytes, label_bytes):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    img.write_bytes(image_bytes)
    lab.write_bytes(label_bytes)
    return img, lab


class TestIdx:
    def test_hand_built_pair(self, tmp_path):
        pixels = bytes([0] * 783 + [255]) + bytes(range(256)) + bytes(528)
        img, lab = write_pair(tmp_path, struct.pack(">IIII", 0x803, 2, 28, 28) + pixels,
                              struct.pack(">II", 0x801, 2) + bytes([3, 7]))
        ds = load_idx(img, lab)
        assert ds.images.shape == (2, 1, 28, 28)
        assert ds.labels.tolist() == [3, 7]
        assert ds.num_classes == 8
        assert ds.images[0, 0, 0, 0] == 0.0 and ds.images[0, 0, 27, 27] == 1.0
        assert ds.images[1, 0, 0, 1] == 1 / 255
        assert 0.0 <= ds.images.min() and ds.images.max() <= 1.0

    def test_round_trip_bytes(self, tmp_path, rng):
        pixels = rng.integers(0, 256, (5, 6, 7), dtype=np.uint8)
        labels = rng.integers(0, 10, 5)
        save_idx(tmp_path / "i", tmp_path / "l", pixels, labels)
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        assert np.array_equal(np.rint(ds.images[:, 0] * 255).astype(np.uint8), pixels)
        assert ds.labels.tolist() == labels.tolist()

    def test_count_mismatch(self, tmp_path):
        img, lab = write_pair(tmp_path, struct.pack(">IIII", 0x803, 3, 2, 2) + bytes(12),
                              struct.pack(">II", 0x801, 2) + bytes(2))
        with pytest.raises(CountMismatchError):
            load_idx(img, lab)

    def test_bad_magic(self, tmp_path):
        img, lab = write_pair(tmp_path, struct.pack(">IIII", 0x801, 1, 2, 2) + bytes(4),
                              struct.pack(">II", 0x801, 1) + bytes(1))
        with pytest.raises(BadMagicError):
            load_idx(img, lab)

    @pytest.mark.parametrize("cut", [2, 10, 19])
    def test_truncated(self, tmp_path, cut):
        data = struct.pack(">IIII", 0x803, 1, 2, 2) + bytes(4)
        img, lab = write_pair(tmp_path, data[:cut], struct.pack(">II", 0x801, 1) + bytes(1))
        with pytest.raises(TruncatedFileError):
            load_idx(img, lab)


class TestSynthetic:
    def test_deterministic(self):
        a, b = generate_synthetic(6, 20, 8, 3), generate_synthetic(6, 20, 8, 3)
        assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
        assert a.fingerprint() == b.fingerprint()
        assert generate_synthetic(6, 20, 8, 4).fingerprint() != a.fingerprint()

    def test_default_shape_and_range(self, synthetic_splits):
        ds, _ = synthetic_splits
        assert ds.images.shape == (3000, 1, 16, 16)
        assert np.bincount(ds.labels).tolist() == [300] * 10
        assert 0.0 <= ds.images.min() and ds.images.max() <= 1.0

    def test_nearest_pattern_oracle(self, synthetic_splits):
        ds, _ = synthetic_splits
        patterns = base_patterns(10, 16, 0).reshape(10, -1)
        flat = ds.images.reshape(len(ds), -1)
        d = ((flat[:, None, :] - patterns[None]) ** 2).sum(axis=2)
        assert np.mean(d.argmin(axis=1) == ds.labels) >= 0.99

    @pytest.mark.parametrize("kwargs", [dict(num_classes=5), dict(side=7)])
    def test_preconditions(self, kwargs):
        with pytest.raises(DatasetError):
            generate_synthetic(**kwargs)

    @pytest.mark.slow
    def test_mlp_learns_within_20_epochs(self, synthetic_splits):
        _, (tr, va, te) = synthetic_splits
        model, history = train(init_params(reference_specs()["mlp"], 0), tr, va, TrainConfig(epochs=20))
        assert max(history["train_acc"]) >= 0.95
        assert accuracy(model, te) >= 0.95


class TestSplit:
    def test_test_only_is_shuffled_dataset(self):
        ds = generate_synthetic(6, 5, 8, 0)
        _, _, test = split(ds, SplitSpec(0, 0, len(ds), seed=1))
        order = np.argsort([np.flatnonzero((ds.images == img).all(axis=(1, 2, 3)))[0] for img in test.images])
        assert np.array_equal(test.images[order], ds.images)
        assert sorted(test.labels.tolist()) == sorted(ds.labels.tolist())

    def test_default_fractions(self, synthetic_splits):
        _, (tr, va, te) = synthetic_splits
        assert (len(tr), len(va), len(te)) == (2000, 500, 500)

    def test_overflow(self):
        ds = generate_synthetic(6, 2, 8, 0)
        with pytest.raises(SplitOverflowError):
            split(ds, SplitSpec(10, 2, 1))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 12), st.integers(0, 12), st.integers(0, 12), st.integers(0, 1000))
    def test_disjoint(self, a, b, c, seed):
        n = 36
        ds = LabeledDataset(np.arange(n, dtype=float).reshape(n, 1, 1, 1) / n, np.zeros(n, dtype=np.int64), 1)
        parts = split(ds, SplitSpec(a, b, c, seed))
        ids = [set(np.rint(p.images.ravel() * n).astype(int).tolist()) for p in parts]
        assert [len(s) for s in ids] == [a, b, c]
        assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
        assert default_split(ds).train + default_split(ds).val + default_split(ds).test == n


def test_dataset_rejects_out_of_range_pixels():
    with pytest.raises(DatasetError):
        LabeledDataset(np.full((1, 1, 2, 2), 1.5), np.zeros(1, dtype=np.int64), 2)
