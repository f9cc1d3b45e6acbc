import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from traceloc.field import FieldLayout, build_default_field
from traceloc.seeding import rng_from
from traceloc.trajectory import (
    collides,
    crop_subtrajectory,
    generate_walk_bank,
    place_and_rotate,
)


def test_walk_bank_step_bounds():
    bank = generate_walk_bank(50, 30, rng_from(0))
    for walk in bank:
        steps = np.linalg.norm(np.diff(walk, axis=0), axis=1)
        assert (steps >= 0.2 - 1e-12).all() and (steps <= 1.5 + 1e-12).all()


def test_walk_bank_deterministic():
    a = generate_walk_bank(5, 20, rng_from(42))
    b = generate_walk_bank(5, 20, rng_from(42))
    for wa, wb in zip(a, b):
        assert np.array_equal(wa, wb)


def test_walk_bank_mean_step_length():
    bank = generate_walk_bank(2000, 51, rng_from(1))
    steps = np.concatenate([np.linalg.norm(np.diff(w, axis=0), axis=1) for w in bank])
    assert steps.size == 100_000
    assert steps.mean() == pytest.approx(0.7, abs=0.01)


def test_crop_full_length_returns_input():
    walk = generate_walk_bank(1, 9, rng_from(2))[0]
    out = crop_subtrajectory(walk, 9, rng_from(3))
    assert np.array_equal(out, walk)


def test_crop_two_points_contiguous():
    walk = generate_walk_bank(1, 20, rng_from(4))[0]
    out = crop_subtrajectory(walk, 2, rng_from(5))
    diffs = walk[1:] - walk[:-1]
    step = out[1] - out[0]
    assert any(np.allclose(step, d) for d in diffs)


def test_crop_too_short_errors():
    walk = generate_walk_bank(1, 5, rng_from(6))[0]
    with pytest.raises(ValueError):
        crop_subtrajectory(walk, 6, rng_from(7))


def test_crop_start_uniform():
    walk = generate_walk_bank(1, 20, rng_from(8))[0]
    rng = rng_from(9)
    n_starts = 20 - 9 + 1
    counts = np.zeros(n_starts, dtype=int)
    for _ in range(10_000):
        out = crop_subtrajectory(walk, 9, rng)
        start = int(np.argmin(np.linalg.norm(walk - out[0], axis=1)))
        counts[start] += 1
    _, p = chisquare(counts)
    assert p > 1e-3


def test_place_identity():
    walk = generate_walk_bank(1, 10, rng_from(10))[0]
    out = place_and_rotate(walk, walk[0], 0.0)
    assert np.allclose(out, walk, atol=1e-12)
    assert np.array_equal(out[0], walk[0])


def test_place_half_turn():
    seg = np.array([[0.0, 0.0], [1.0, 0.0]])
    out = place_and_rotate(seg, [0.0, 0.0], np.pi)
    assert np.allclose(out, [[0.0, 0.0], [-1.0, 0.0]], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    p=st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
    angle=st.floats(0, 2 * np.pi),
    seed=st.integers(0, 100),
)
def test_place_preserves_distances(p, angle, seed):
    walk = generate_walk_bank(1, 8, rng_from(seed))[0]
    out = place_and_rotate(walk, np.array(p), angle)
    orig = np.linalg.norm(walk[:, None] - walk[None, :], axis=-1)
    moved = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
    scale = max(1.0, orig.max())
    assert np.abs(orig - moved).max() / scale < 1e-9
    assert np.allclose(out[0], p, atol=1e-12)


def test_collides_wall_crossing():
    layout = FieldLayout(width_m=20, height_m=10,
                         walls=np.array([[[5.0, 0.0], [5.0, 10.0]]]),
                         aps=np.array([[1.0, 1.0]]))
    assert collides(layout, np.array([[4.0, 5.0], [6.0, 5.0]]))


def test_collides_free_interior():
    layout = FieldLayout(width_m=20, height_m=10, walls=np.zeros((0, 2, 2)),
                         aps=np.array([[1.0, 1.0]]))
    assert not collides(layout, np.array([[0.0, 0.0], [1.0, 0.0]]))


def test_collides_out_of_bounds():
    layout = FieldLayout(width_m=20, height_m=10, walls=np.zeros((0, 2, 2)),
                         aps=np.array([[1.0, 1.0]]))
    assert collides(layout, np.array([[1.0, 1.0], [-1.0, 1.0]]))


def test_default_field_acceptance_rate_reasonable():
    # the default field must leave room for length-9 walks
    layout = build_default_field(11)
    bank = generate_walk_bank(64, 64, rng_from(0))
    rng = rng_from(1)
    accepted = 0
    for _ in range(500):
        walk = bank[int(rng.integers(0, len(bank)))]
        cropped = crop_subtrajectory(walk, 9, rng)
        p = np.array([rng.uniform(0, 20), rng.uniform(0, 25)])
        placed = place_and_rotate(cropped, p, rng.uniform(0, 2 * np.pi))
        accepted += not collides(layout, placed)
    assert accepted > 50
