"""Tests for random frame generation, batching, and serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockae.framing import (batch_iterator, frame_stream, generate_dataset,
                             load_dataset, save_dataset)

SEED = 42


class TestGenerateDataset:
    def test_paper_scale_shape(self):
        """40000 frames of 6x400 blocks give 2400-bit frames."""
        ds = generate_dataset(40000, 6, 400, seed=SEED)
        assert ds.frames.shape == (40000, 2400)
        assert ds.frames.dtype == np.uint8

    def test_minimal_shape(self):
        ds = generate_dataset(1, 1, 1, seed=0)
        assert ds.frames.shape == (1, 1)
        assert ds.frames[0, 0] in (0, 1)

    def test_deterministic(self):
        a = generate_dataset(10, 6, 4, seed=7)
        b = generate_dataset(10, 6, 4, seed=7)
        assert np.array_equal(a.frames, b.frames)

    def test_different_seeds_differ(self):
        a = generate_dataset(10, 6, 25, seed=1)   # 1500 bits
        b = generate_dataset(10, 6, 25, seed=2)
        assert a.frames.size >= 1000
        assert not np.array_equal(a.frames, b.frames)

    def test_bits_are_binary(self):
        ds = generate_dataset(50, 3, 7, seed=SEED)
        assert set(np.unique(ds.frames)) <= {0, 1}

    def test_uniform_bit_mean(self):
        """Empirical mean over >= 1e5 bits stays near one half."""
        ds = generate_dataset(100, 10, 120, seed=SEED)  # 120000 bits
        assert ds.frames.size >= 10**5
        assert 0.49 <= ds.frames.mean() <= 0.51

    @pytest.mark.parametrize("count,s,m", [(0, 6, 4), (5, 0, 4), (5, 6, 0), (-1, 6, 4)])
    def test_invalid_arguments(self, count, s, m):
        with pytest.raises(ValueError):
            generate_dataset(count, s, m, seed=0)


class TestBatchIterator:
    def test_partial_final_batch(self):
        ds = generate_dataset(10, 2, 3, seed=SEED)
        sizes = [b.shape[0] for b in batch_iterator(ds, 4, shuffle_seed=0)]
        assert sizes == [4, 4, 2]

    def test_single_batch_is_identity_partition(self):
        ds = generate_dataset(8, 2, 3, seed=SEED)
        (batch,) = list(batch_iterator(ds, 8, shuffle_seed=3))
        seen = {bytes(row) for row in batch}
        expected = {bytes(row) for row in ds.frames}
        assert seen == expected

    def test_every_frame_exactly_once(self):
        ds = generate_dataset(23, 3, 5, seed=SEED)
        rows = np.concatenate(list(batch_iterator(ds, 6, shuffle_seed=1)))
        assert rows.shape == ds.frames.shape
        assert np.array_equal(np.sort(rows.view("S15").ravel()),
                              np.sort(ds.frames.view("S15").ravel()))

    def test_shuffle_deterministic(self):
        ds = generate_dataset(20, 2, 4, seed=SEED)
        a = np.concatenate(list(batch_iterator(ds, 7, shuffle_seed=9)))
        b = np.concatenate(list(batch_iterator(ds, 7, shuffle_seed=9)))
        assert np.array_equal(a, b)

    def test_batch_size_larger_than_dataset(self):
        ds = generate_dataset(4, 2, 2, seed=SEED)
        with pytest.raises(ValueError):
            list(batch_iterator(ds, 5, shuffle_seed=0))


class TestFrameStream:
    def test_deterministic_and_fresh(self):
        s1 = frame_stream(2, 3, seed=5, batch_size=4)
        s2 = frame_stream(2, 3, seed=5, batch_size=4)
        first1, second1 = next(s1), next(s1)
        first2 = next(s2)
        assert np.array_equal(first1, first2)
        assert not np.array_equal(first1, second1)

    def test_shape(self):
        batch = next(frame_stream(6, 50, seed=0, batch_size=7))
        assert batch.shape == (7, 300)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = generate_dataset(37, 5, 9, seed=SEED, role="test")
        path = tmp_path / "frames.bin"
        save_dataset(ds, path)
        loaded = load_dataset(path, role="test")
        assert np.array_equal(loaded.frames, ds.frames)
        assert (loaded.bits_per_block, loaded.block_count) == (5, 9)
        assert loaded.seed == SEED
        assert loaded.role == "test"

    @settings(max_examples=25, deadline=None)
    @given(count=st.integers(1, 40), s=st.integers(1, 8), m=st.integers(1, 12),
           seed=st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, tmp_path_factory, count, s, m, seed):
        ds = generate_dataset(count, s, m, seed=seed)
        path = tmp_path_factory.mktemp("ds") / "frames.bin"
        save_dataset(ds, path)
        assert np.array_equal(load_dataset(path).frames, ds.frames)

    def test_truncated_file_rejected(self, tmp_path):
        ds = generate_dataset(16, 4, 4, seed=SEED)
        path = tmp_path / "frames.bin"
        save_dataset(ds, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError, match="payload"):
            load_dataset(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_dataset(path)
