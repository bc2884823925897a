import collections

import numpy as np
import pytest

from so2rl.replay import (
    DatasetFormatError,
    ReplayBuffer,
    Transition,
    load_dataset,
    sample_union,
    save_dataset,
)


def random_transition(rng, state_dim=2, action_dim=1, done=False):
    return Transition(rng.standard_normal(state_dim), rng.uniform(-1, 1, action_dim),
                      float(rng.standard_normal()), rng.standard_normal(state_dim),
                      done)


def test_push_grows_to_one():
    buf = ReplayBuffer(4, 2, 1)
    buf.push(random_transition(np.random.default_rng(0)))
    assert len(buf) == 1


def test_ring_eviction_small():
    buf = ReplayBuffer(2, 1, 1)
    for r in (1.0, 2.0, 3.0):
        buf.push(Transition([0.0], [0.0], r, [0.0], False))
    assert len(buf) == 2
    assert [t.reward for t in buf.transitions()] == [2.0, 3.0]


def test_ring_matches_reference_deque():
    rng = np.random.default_rng(1)
    buf = ReplayBuffer(1000, 2, 1)
    reference = collections.deque(maxlen=1000)
    for _ in range(10_000):
        tr = random_transition(rng)
        buf.push(tr)
        reference.append(tr)
    stored = buf.transitions()
    assert len(stored) == len(reference)
    for a, b in zip(stored, reference):
        np.testing.assert_array_equal(a.state, b.state)
        assert a.reward == b.reward


def test_push_rejects_invalid():
    buf = ReplayBuffer(4, 2, 1)
    with pytest.raises(ValueError, match="non-finite"):
        buf.push(Transition([np.nan, 0.0], [0.0], 0.0, [0.0, 0.0], False))
    with pytest.raises(ValueError, match=r"\[-1, 1\]"):
        buf.push(Transition([0.0, 0.0], [1.5], 0.0, [0.0, 0.0], False))
    with pytest.raises(ValueError, match="state dims"):
        buf.push(Transition([0.0], [0.0], 0.0, [0.0], False))


def test_sample_union_degenerate_and_empty():
    rng = np.random.default_rng(2)
    off = ReplayBuffer(10, 2, 1)
    on = ReplayBuffer(10, 2, 1)
    for _ in range(5):
        off.push(random_transition(rng))
    batch = sample_union(off, on, 8, rng)
    assert len(batch) == 8
    assert not batch.from_online.any()
    assert sample_union(off, on, 0, rng).states.shape == (0, 2)
    with pytest.raises(ValueError, match="empty"):
        sample_union(ReplayBuffer(2, 2, 1), ReplayBuffer(2, 2, 1), 4, rng)


def test_sample_union_online_fraction():
    rng = np.random.default_rng(3)
    off = ReplayBuffer(1000, 1, 1)
    on = ReplayBuffer(1000, 1, 1)
    for _ in range(900):
        off.push(random_transition(rng, 1, 1))
    for _ in range(100):
        on.push(random_transition(rng, 1, 1))
    n = 100_000
    batch = sample_union(off, on, n, rng)
    frac = batch.online_fraction
    # binomial 5-sigma bound around p = 0.1
    sigma = np.sqrt(0.1 * 0.9 / n)
    assert abs(frac - 0.1) <= 5 * sigma


def test_sample_union_uniformity_chi_square():
    rng = np.random.default_rng(4)
    off = ReplayBuffer(60, 1, 1)
    on = ReplayBuffer(40, 1, 1)
    for i in range(60):
        off.push(Transition([float(i)], [0.0], 0.0, [0.0], False))
    for i in range(40):
        on.push(Transition([float(60 + i)], [0.0], 0.0, [0.0], False))
    n = 1_000_000
    batch = sample_union(off, on, n, rng)
    counts = np.bincount(batch.states[:, 0].astype(int), minlength=100)
    expected = n / 100
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 99 dof; chi2 inverse-cdf at p=0.999 is ~148.2
    assert chi2 < 148.23


def test_dataset_round_trip_small(tmp_path):
    rng = np.random.default_rng(5)
    buf = ReplayBuffer(3, 2, 1)
    for done in (False, True, False):
        buf.push(random_transition(rng, done=done))
    path = tmp_path / "data.bin"
    save_dataset(buf, path)
    loaded = load_dataset(path)
    for a, b in zip(loaded.transitions(), buf.transitions()):
        np.testing.assert_array_equal(a.state, b.state)
        np.testing.assert_array_equal(a.action, b.action)
        np.testing.assert_array_equal(a.next_state, b.next_state)
        assert a.reward == b.reward and a.done == b.done


def test_dataset_round_trip_bytes_identical(tmp_path):
    rng = np.random.default_rng(6)
    buf = ReplayBuffer(500, 3, 2)
    for _ in range(500):
        buf.push(random_transition(rng, 3, 2))
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_dataset(buf, p1)
    save_dataset(load_dataset(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_large_round_trip_elementwise(tmp_path):
    rng = np.random.default_rng(7)
    buf = ReplayBuffer(20_000, 2, 1)
    for _ in range(20_000):
        buf.push(random_transition(rng))
    path = tmp_path / "big.bin"
    save_dataset(buf, path)
    loaded = load_dataset(path)
    np.testing.assert_array_equal(loaded.states[:buf.size], buf.states[:buf.size])
    np.testing.assert_array_equal(loaded.rewards[:buf.size], buf.rewards[:buf.size])


def test_dataset_dimension_mismatch(tmp_path):
    buf = ReplayBuffer(2, 4, 2)
    rng = np.random.default_rng(8)
    buf.push(random_transition(rng, 4, 2))
    path = tmp_path / "dims.bin"
    save_dataset(buf, path)
    with pytest.raises(DatasetFormatError, match="state_dim 4"):
        load_dataset(path, expect_state_dim=2)


def test_dataset_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(DatasetFormatError, match="magic"):
        load_dataset(path)
    buf = ReplayBuffer(2, 2, 1)
    buf.push(random_transition(np.random.default_rng(9)))
    good = tmp_path / "good.bin"
    save_dataset(buf, good)
    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(DatasetFormatError, match="truncated"):
        load_dataset(truncated)
