import json

import numpy as np
import pytest

from traceloc.dataset import (
    Dataset,
    NoiseConfig,
    PairedTrace,
    build_dataset,
    dataset_hash,
    derive_traces,
    inject_displacement_noise,
    inject_rssi_noise,
    load_dataset,
    save_dataset,
    split_dataset,
)
from traceloc.exceptions import ConfigError, DataIntegrityError
from traceloc.field import PathLossParams, build_anchor_grid, build_default_field
from traceloc.radiomap import fit_gpr
from traceloc.seeding import rng_from, stable_seed
from traceloc.trajectory import collides, generate_walk_bank


class FixedRng:
    """Stand-in rng returning prescribed normal draws."""

    def __init__(self, values):
        self.values = list(values)

    def normal(self, loc, scale, size=None):
        if size is None:
            return self.values.pop(0) * scale + loc
        n = int(np.prod(size))
        out = np.array([self.values.pop(0) for _ in range(n)]).reshape(size)
        return out * scale + loc


@pytest.fixture(scope="module")
def radio_env():
    layout = build_default_field(0)
    params = PathLossParams()
    anchors = build_anchor_grid(layout, params, rng_from(0, "anchors"))
    return layout, fit_gpr(layout, params, anchors)


@pytest.fixture(scope="module")
def small_dataset(radio_env):
    layout, rmap = radio_env
    bank = generate_walk_bank(64, 32, rng_from(5, "bank"))
    return build_dataset(layout, rmap, bank, size=40, m=9, noise=NoiseConfig(), seed=5)


def test_derive_traces_displacements(radio_env):
    _, rmap = radio_env
    positions = np.array([[5.0, 5.0], [6.0, 5.0], [6.0, 6.0]])
    trace = derive_traces(positions, rmap)
    assert np.array_equal(trace.dtrace, [[0, 0], [1, 0], [0, 1]])
    assert trace.ftrace.shape == (3, 20)


def test_derive_traces_stationary(radio_env):
    _, rmap = radio_env
    positions = np.tile([8.0, 9.0], (4, 1))
    trace = derive_traces(positions, rmap)
    assert np.array_equal(trace.dtrace, np.zeros((4, 2)))
    assert (trace.ftrace == trace.ftrace[0]).all()


def test_derive_traces_telescoping(radio_env):
    _, rmap = radio_env
    rng = rng_from(1)
    positions = np.cumsum(rng.uniform(-0.5, 0.5, size=(9, 2)), axis=0) + [10.0, 12.0]
    trace = derive_traces(positions, rmap)
    assert np.array_equal(trace.dtrace[1:].sum(axis=0), positions[-1] - positions[0])


def test_rssi_noise_zero_sigma_identity():
    f = np.full((3, 4), -60.0)
    out = inject_rssi_noise(f, 0.0, rng_from(0))
    assert np.array_equal(out, f)


def test_rssi_noise_formula():
    out = inject_rssi_noise(np.array([[-60.0]]), 0.05, FixedRng([1.0]))
    assert out[0, 0] == pytest.approx(-63.0)


def test_rssi_noise_empirical_std():
    f = np.full(100_000, -60.0)
    out = inject_rssi_noise(f, 0.05, rng_from(2))
    ratios = out / f - 1.0
    assert ratios.std() == pytest.approx(0.05, abs=0.002)


def test_displacement_noise_zero_sigma_identity():
    d = np.array([[0.0, 0.0], [1.0, 0.5], [-0.2, 0.3]])
    out = inject_displacement_noise(d, 0.0, 0.0, rng_from(0))
    assert np.array_equal(out, d)


def test_displacement_noise_formula():
    d = np.array([[0.0, 0.0], [1.0, 0.0]])
    out = inject_displacement_noise(d, 0.2, 0.15, FixedRng([1.0, 0.0]))
    assert out[1] == pytest.approx([1.2, 0.0])
    assert np.array_equal(out[0], [0.0, 0.0])


def test_displacement_noise_zero_step_unchanged():
    d = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    out = inject_displacement_noise(d, 0.5, 0.5, rng_from(3))
    assert np.array_equal(out[1], [0.0, 0.0])


def test_displacement_noise_first_entry_fixed():
    d = np.array([[0.0, 0.0], [0.3, 0.4]])
    out = inject_displacement_noise(d, 0.2, 0.15, rng_from(4))
    assert np.array_equal(out[0], [0.0, 0.0])


def test_build_dataset_deterministic(radio_env):
    layout, rmap = radio_env
    bank = generate_walk_bank(16, 16, rng_from(6, "bank"))
    a = build_dataset(layout, rmap, bank, size=10, m=5, noise=NoiseConfig(), seed=9)
    b = build_dataset(layout, rmap, bank, size=10, m=5, noise=NoiseConfig(), seed=9)
    for ta, tb in zip(a.traces, b.traces):
        assert np.array_equal(ta.positions, tb.positions)
        assert np.array_equal(ta.ftrace, tb.ftrace)
        assert np.array_equal(ta.dtrace, tb.dtrace)


def test_build_dataset_traces_collision_free(small_dataset, radio_env):
    layout, _ = radio_env
    for trace in small_dataset.traces:
        assert not collides(layout, trace.positions)


def test_build_dataset_trace_seeds(small_dataset):
    for i, trace in enumerate(small_dataset.traces):
        assert trace.trace_id == i
        assert trace.seed == stable_seed(5, i)


def test_build_dataset_manifest(small_dataset):
    m = small_dataset.manifest
    assert m["size"] == 40 and m["m"] == 9 and m["n"] == 20
    assert m["noise"]["sigma_f"] == 0.05
    assert m["pathloss"]["floor_dbm"] == -95.0


def test_build_dataset_cluttered_field_errors(radio_env):
    _, rmap = radio_env
    # a grid of walls so dense that placement cannot succeed
    xs = np.arange(0.25, 20.0, 0.5)
    walls = [[[x, 0.0], [x, 25.0]] for x in xs]
    ys = np.arange(0.25, 25.0, 0.5)
    walls += [[[0.0, y], [20.0, y]] for y in ys]
    from traceloc.field import FieldLayout

    cluttered = FieldLayout(walls=np.array(walls), aps=build_default_field(0).aps)
    bank = generate_walk_bank(8, 16, rng_from(7, "bank"))
    with pytest.raises(ConfigError):
        build_dataset(cluttered, rmap, bank, size=5, m=9, noise=NoiseConfig(), seed=1,
                      probe_size=200)


def test_split_sizes(small_dataset):
    ds = split_dataset(small_dataset, ratio=0.8, seed=1)
    assert len(ds.split.train) == 32 and len(ds.split.test) == 8


def test_split_partition(small_dataset):
    ds = split_dataset(small_dataset, ratio=0.8, seed=1)
    union = np.union1d(ds.split.train, ds.split.test)
    assert np.array_equal(union, np.arange(ds.size))
    assert np.intersect1d(ds.split.train, ds.split.test).size == 0


def test_split_deterministic(small_dataset):
    a = split_dataset(small_dataset, ratio=0.8, seed=2)
    b = split_dataset(small_dataset, ratio=0.8, seed=2)
    assert np.array_equal(a.split.train, b.split.train)


def test_save_load_round_trip(tmp_path, small_dataset):
    ds = split_dataset(small_dataset, ratio=0.8, seed=1)
    save_dataset(ds, tmp_path)
    loaded = load_dataset(tmp_path)
    assert loaded.manifest == ds.manifest | {"split": loaded.manifest["split"]}
    assert np.array_equal(loaded.split.train, ds.split.train)
    for ta, tb in zip(ds.traces, loaded.traces):
        assert np.array_equal(ta.positions, tb.positions)
        assert np.array_equal(ta.ftrace, tb.ftrace)
        assert np.array_equal(ta.dtrace, tb.dtrace)
        assert (ta.trace_id, ta.seed) == (tb.trace_id, tb.seed)


def test_load_truncated_names_last_good_record(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    lines = (tmp_path / "traces.jsonl").read_text().splitlines()
    (tmp_path / "traces.jsonl").write_text("\n".join(lines[:-5]) + "\n")
    with pytest.raises(DataIntegrityError, match="last good record: 34"):
        load_dataset(tmp_path)


def test_load_malformed_record(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    lines = (tmp_path / "traces.jsonl").read_text().splitlines()
    lines[3] = '{"broken": true}'
    (tmp_path / "traces.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataIntegrityError, match="line 3"):
        load_dataset(tmp_path)


def test_load_version_mismatch(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["format_version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DataIntegrityError, match="version"):
        load_dataset(tmp_path)


def test_dataset_hash_stable(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "a")
    save_dataset(small_dataset, tmp_path / "b")
    assert dataset_hash(tmp_path / "a") == dataset_hash(tmp_path / "b")


def test_paired_trace_length_mismatch():
    with pytest.raises(ValueError):
        PairedTrace(positions=np.zeros((3, 2)), ftrace=np.zeros((2, 4)), dtrace=np.zeros((3, 2)))


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(sigma_f=-0.1)
