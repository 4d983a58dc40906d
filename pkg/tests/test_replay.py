import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal
from scipy import stats

from o2orl.replay import (DemoDataset, DemoFormatError, ReplayBuffer, Transition,
                          init_from_demos, load_demos, save_demos)


def tr(i: float, done: bool = False, r: float = -1.0, obs_dim: int = 3) -> Transition:
    return Transition(np.full(obs_dim, i), np.array([0.5, -0.5]), r, np.full(obs_dim, i + 0.5),
                      done)


def episode(length: int, start: float = 0.0, success: bool = True, obs_dim: int = 3):
    eps = [tr(start + k, obs_dim=obs_dim) for k in range(length - 1)]
    eps.append(tr(start + length - 1, True, 1.0 if success else -1.0, obs_dim=obs_dim))
    return eps


def dataset(n_eps: int = 3, length: int = 4, obs_dim: int = 3) -> DemoDataset:
    eps = [episode(length, 100.0 * e, obs_dim=obs_dim) for e in range(n_eps)]
    return DemoDataset(eps, "reach", True, "expert", 1.0)


def test_fifo_eviction_order():
    buf = ReplayBuffer(3, 3, 2)
    for i in range(5):
        buf.push(tr(i))
    assert len(buf) == 3
    assert [t.s[0] for t in buf.transitions()] == [2.0, 3.0, 4.0]


@settings(max_examples=30)
@given(st.integers(1, 12), st.integers(0, 40))
def test_size_is_min_of_pushes_and_capacity(capacity, n):
    buf = ReplayBuffer(capacity, 3, 2)
    for i in range(n):
        buf.push(tr(i))
    assert len(buf) == min(n, capacity)
    assert [t.s[0] for t in buf.transitions()] == [float(i) for i in range(max(0, n - capacity), n)]


def test_pinned_prefix_survives_wrap():
    buf = ReplayBuffer(5, 3, 2)
    buf.push(tr(0))
    buf.push(tr(1))
    buf.pin()
    for i in range(2, 10):
        buf.push(tr(i))
    assert [t.s[0] for t in buf.transitions()] == [0.0, 1.0, 7.0, 8.0, 9.0]


@pytest.mark.parametrize("r", [0.0, 0.5, 2.0, -0.999])
def test_reward_outside_pm1_rejected(r):
    with pytest.raises(ValueError, match="reward"):
        ReplayBuffer(4, 3, 2).push(tr(0, r=r))


def test_action_outside_box_rejected():
    with pytest.raises(ValueError, match="action"):
        Transition(np.zeros(3), np.array([1.5, 0.0]), -1.0, np.zeros(3), False)


def test_dim_mismatch_rejected():
    with pytest.raises(ValueError, match="obs_dim"):
        ReplayBuffer(4, 5, 2).push(tr(0))


def test_sample_empty_raises():
    with pytest.raises(ValueError, match="empty"):
        ReplayBuffer(4, 3, 2).sample(1, np.random.default_rng(0))


def test_sampling_uniform_chi_square():
    buf = ReplayBuffer(16, 3, 2)
    for i in range(16):
        buf.push(tr(i))
    batch = buf.sample(16 * 2000, np.random.default_rng(4))
    counts = np.bincount(batch.s[:, 0].astype(int), minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_sampling_deterministic():
    buf = ReplayBuffer(8, 3, 2)
    for i in range(8):
        buf.push(tr(i))
    b1 = buf.sample(32, np.random.default_rng(9))
    b2 = buf.sample(32, np.random.default_rng(9))
    assert_array_equal(b1.s, b2.s)
    assert_array_equal(b1.done, b2.done)


def test_demo_round_trip(tmp_path):
    ds = dataset(10, 5)
    save_demos(ds, tmp_path / "d.jsonl")
    back = load_demos(tmp_path / "d.jsonl")
    assert back.header() == ds.header()
    assert len(back.episodes) == 10
    for ea, eb in zip(ds.episodes, back.episodes):
        assert ea == eb


def test_full_precision_round_trip(tmp_path):
    x = np.array([0.1 + 0.2, 1 / 3, np.nextafter(0.5, 1.0)])
    ds = DemoDataset([[Transition(x, [np.pi / 4 - 0.5, -1e-17], 1.0, x * 3, True)]],
                     "reach", False, "expert", 1.0)
    save_demos(ds, tmp_path / "p.jsonl")
    got = next(load_demos(tmp_path / "p.jsonl").transitions())
    assert got.s.tobytes() == x.tobytes()
    assert got.a[1] == -1e-17


def test_ten_hundred_step_episodes_count_1000():
    eps = [episode(100, 1000.0 * e, success=False) for e in range(10)]
    ds = DemoDataset(eps, "reach", False, "corrupted(p=0.9)", 0.0)
    assert ds.n_transitions == 1000
    assert len(init_from_demos(ds, 1000)) == 1000
    with pytest.raises(ValueError, match="999"):
        init_from_demos(ds, 999)


def test_init_from_demos_only_demo_transitions():
    ds = dataset(3, 4)
    buf = init_from_demos(ds, 50)
    assert buf.transitions() == list(ds.transitions())
    demo_s = {t.s[0] for t in ds.transitions()}
    batch = buf.sample(500, np.random.default_rng(0))
    assert set(batch.s[:, 0]) <= demo_s


def test_recount_matches_metadata():
    eps = [episode(3), episode(3, success=False), episode(2)]
    ds = DemoDataset(eps, "reach", False, "corrupted(p=0.5)", 2 / 3)
    assert ds.recount_success_rate() == ds.success_rate


def test_episode_must_end_done():
    with pytest.raises(ValueError, match="done"):
        DemoDataset([[tr(0), tr(1)]], "reach", False, "expert", 1.0)


def test_inconsistent_dims_rejected():
    eps = [episode(2, obs_dim=3), episode(2, obs_dim=4)]
    with pytest.raises(ValueError, match="inconsistent"):
        DemoDataset(eps, "reach", False, "expert", 1.0)


def _write(tmp_path, lines) -> str:
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _good_lines(tmp_path) -> list[str]:
    save_demos(dataset(2, 3), tmp_path / "good.jsonl")
    return (tmp_path / "good.jsonl").read_text().splitlines()


def test_malformed_line_reports_line_number(tmp_path):
    lines = _good_lines(tmp_path)
    lines[3] = lines[3][:-5]
    with pytest.raises(DemoFormatError, match=r"bad\.jsonl:4: malformed"):
        load_demos(_write(tmp_path, lines))


def test_dimension_mismatch_reports_line(tmp_path):
    lines = _good_lines(tmp_path)
    rec = json.loads(lines[5])
    rec["s"] = rec["s"] + [0.0]
    lines[5] = json.dumps(rec)
    with pytest.raises(DemoFormatError, match=r":6: dimensions"):
        load_demos(_write(tmp_path, lines))


def test_truncated_file_rejected(tmp_path):
    lines = _good_lines(tmp_path)
    with pytest.raises(DemoFormatError, match="truncated"):
        load_demos(_write(tmp_path, lines[:-1]))


def test_out_of_order_rejected(tmp_path):
    lines = _good_lines(tmp_path)
    lines[1], lines[2] = lines[2], lines[1]
    with pytest.raises(DemoFormatError, match=r":2: out-of-order"):
        load_demos(_write(tmp_path, lines))


def test_bad_reward_in_file_reports_line(tmp_path):
    lines = _good_lines(tmp_path)
    rec = json.loads(lines[2])
    rec["r"] = 0.0
    lines[2] = json.dumps(rec)
    with pytest.raises(DemoFormatError, match=r":3: reward"):
        load_demos(_write(tmp_path, lines))
