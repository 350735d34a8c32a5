import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowmap.core import BoxDomain, DataPair, Rng, Trajectory
from flowmap.data import (
    Dataset, DatasetFormatError, GenConfig, NoiseSpec, generate_pairs, minibatches,
    pairs_from_trajectory, read_dataset, sizing_rule, write_dataset,
)
from flowmap.net import NetworkSpec
from flowmap.systems import flow_oracle, integrate_trajectory


def test_zero_lag_pair_is_identity():
    ds = generate_pairs(GenConfig("linear-scalar", 1, Idelta=BoxDomain([0.0], [0.0])))
    np.testing.assert_array_equal(ds.x_out, ds.x_in)


def test_noise_free_pairs_match_closed_form():
    ds = generate_pairs(GenConfig("linear-scalar", 2000, seed=3))
    expect = ds.x_in[:, 0] * np.exp(-ds.alpha[:, 0] * ds.delta)
    assert np.max(np.abs(ds.x_out[:, 0] - expect)) <= 1e-9
    assert np.all((ds.delta >= 0) & (ds.delta <= 0.1))


@pytest.mark.parametrize("system", ["linear-2d", "oscillator", "cell-cascade"])
def test_noise_free_pairs_match_oracle(system):
    ds = generate_pairs(GenConfig(system, 50, seed=1))
    ref = flow_oracle(system, ds.x_in, ds.alpha, ds.delta, 400)
    assert np.max(np.abs(ds.x_out - ref)) <= 1e-9


def test_noise_calibration():
    sigma = 0.01
    clean = generate_pairs(GenConfig("linear-2d", 1000, seed=9))
    noisy = generate_pairs(GenConfig("linear-2d", 1000, noise=NoiseSpec(sigma), seed=9))
    # the clean draw shares the sampled (delta, x0, alpha), so differences are pure noise
    np.testing.assert_array_equal(clean.delta, noisy.delta)
    for col in (noisy.x_out - clean.x_out, noisy.x_in - clean.x_in):
        assert abs(col.std() - sigma) <= 0.15 * sigma


def test_generation_is_deterministic():
    cfg = dict(system="oscillator", J=100, noise=NoiseSpec(0.02), seed=11)
    a, b = generate_pairs(GenConfig(**cfg)), generate_pairs(GenConfig(**cfg))
    for name in ("x_in", "alpha", "delta", "x_out"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        NoiseSpec(-0.1)


def test_pairs_from_trajectory():
    tr = integrate_trajectory("linear-2d", [0.0, 1.0], [4.0, 4.0], np.round(np.arange(0, 0.31, 0.1), 12))
    pairs = pairs_from_trajectory(tr)
    assert len(pairs) == 3
    for k, p in enumerate(pairs):
        np.testing.assert_array_equal(p.x_in, tr.states[k])
        np.testing.assert_array_equal(p.x_out, tr.states[k + 1])


def test_uniform_grid_lags_exact():
    times = np.arange(11) * 0.1
    tr = Trajectory(times, np.zeros((11, 1)), [1.0])
    assert [p.delta for p in pairs_from_trajectory(tr)] == list(np.diff(times))
    tr3 = Trajectory([0.0, 0.5, 1.0], np.zeros((3, 1)), [1.0])
    assert [p.delta for p in pairs_from_trajectory(tr3)] == [0.5, 0.5]


def test_time_shift_gives_identical_pairs():
    states = np.random.default_rng(0).normal(size=(6, 2))
    times = np.arange(6) * 0.25
    a = pairs_from_trajectory(Trajectory(times, states, [1.0]))
    b = pairs_from_trajectory(Trajectory(times + 16.0, states, [1.0]))
    assert a == b


def test_single_point_trajectory_gives_no_pairs():
    assert pairs_from_trajectory(Trajectory([0.0], np.zeros((1, 2)), [1.0])) == []


@pytest.mark.parametrize("J,sizes", [(90, [30, 30, 30]), (91, [30, 30, 30, 1])])
def test_minibatch_sizes(J, sizes):
    assert [len(b) for b in minibatches(J, 30, Rng(0))] == sizes


def test_minibatch_reshuffles():
    a = minibatches(200, 30, Rng(4))
    b = minibatches(200, 30, Rng(4))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    rng = Rng(4)
    e1, e2 = np.concatenate(minibatches(200, 30, rng)), np.concatenate(minibatches(200, 30, rng))
    assert not np.array_equal(e1, e2)


@given(J=st.integers(1, 500), B=st.integers(1, 64), seed=st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_minibatch_partition(J, B, seed):
    batches = minibatches(J, B, Rng(seed))
    flat = np.concatenate(batches)
    np.testing.assert_array_equal(np.sort(flat), np.arange(J))
    assert all(len(b) == B for b in batches[:-1]) and 1 <= len(batches[-1]) <= B


def test_sizing_rule():
    assert sizing_rule(NetworkSpec(1, 1, 3, 40).n_params) == 20 * 3481


def _random_dataset(seed, d=2, l=3, J=17):
    g = np.random.default_rng(seed)
    return Dataset(g.normal(size=(J, d)) * 10.0 ** g.integers(-300, 300, (J, d)),
                   g.normal(size=(J, l)), g.uniform(0, 0.1, J), g.normal(size=(J, d)),
                   meta={"system": "linear-2d", "seed": seed, "sigma": 0.0})


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_dataset_round_trip_bitwise(tmp_path_factory, seed):
    ds = _random_dataset(seed)
    path = tmp_path_factory.mktemp("ds") / "d.csv"
    write_dataset(ds, path)
    back = read_dataset(path)
    for name in ("x_in", "alpha", "delta", "x_out"):
        assert getattr(back, name).tobytes() == getattr(ds, name).tobytes()
    assert back.meta["system"] == "linear-2d"


def test_dataset_round_trip_generated(tmp_path):
    ds = generate_pairs(GenConfig("cell-cascade", 40, noise=NoiseSpec(0.01), seed=5))
    write_dataset(ds, tmp_path / "c.csv")
    back = read_dataset(tmp_path / "c.csv")
    assert back.inputs().tobytes() == ds.inputs().tobytes()
    assert back.x_out.tobytes() == ds.x_out.tobytes()
    assert back.meta["sigma"] == 0.01 and back.meta["seed"] == 5


def test_header_dimension_mismatch(tmp_path):
    ds = _random_dataset(0)
    write_dataset(ds, tmp_path / "d.csv")
    text = (tmp_path / "d.csv").read_text().replace("# d=2", "# d=3", 1)
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(DatasetFormatError, match="dimension mismatch"):
        read_dataset(tmp_path / "bad.csv")


def test_empty_dataset(tmp_path):
    ds = _random_dataset(0)
    write_dataset(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    header_end = next(i for i, ln in enumerate(lines) if ln.startswith("delta"))
    (tmp_path / "e.csv").write_text("\n".join(lines[: header_end + 1]) + "\n")
    with pytest.raises(DatasetFormatError, match="empty dataset"):
        read_dataset(tmp_path / "e.csv")


def test_malformed_value_names_line_and_column(tmp_path):
    ds = _random_dataset(0)
    write_dataset(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    k = next(i for i, ln in enumerate(lines) if ln.startswith("delta")) + 2
    cells = lines[k].split(",")
    cells[3] = "oops"
    lines[k] = ",".join(cells)
    (tmp_path / "m.csv").write_text("\n".join(lines) + "\n")
    # columns count characters from the start of the line
    col = len(",".join(cells[:3])) + 2
    with pytest.raises(DatasetFormatError, match=rf"line {k + 1}, column {col}:"):
        read_dataset(tmp_path / "m.csv")


def test_from_pairs_and_trajectories():
    pairs = [DataPair([0.0], [1.0], 0.1, [0.5]), DataPair([1.0], [2.0], 0.05, [0.9])]
    ds = Dataset.from_pairs(pairs)
    assert ds.J == 2 and ds.pair(1) == pairs[1]
    tr = Trajectory([0.0, 0.1, 0.2], np.array([[1.0], [0.9], [0.8]]), [1.0])
    assert Dataset.from_trajectories([tr, tr]).J == 4
