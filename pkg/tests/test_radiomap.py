import numpy as np
import pytest

from traceloc.exceptions import DataIntegrityError, FitError
from traceloc.field import FieldLayout, PathLossParams, build_anchor_grid, build_default_field
from traceloc.radiomap import (
    GprKernelParams,
    GprRadioMap,
    default_kernel_params,
    fit_gpr,
    load_field_map,
    query_fingerprint,
    save_field_map,
)
from traceloc.seeding import rng_from


@pytest.fixture(scope="module")
def env():
    layout = build_default_field(0)
    params = PathLossParams()
    anchors = build_anchor_grid(layout, params, rng_from(0, "anchors"))
    return layout, params, anchors


def test_near_interpolation_at_anchors():
    # anchors spaced well apart relative to the kernel scale keep the system
    # numerically meaningful at vanishing observation noise
    params = PathLossParams()
    layout = FieldLayout(width_m=20, height_m=25, walls=np.zeros((0, 2, 2)),
                         aps=np.array([[1.0, 1.0], [19.0, 24.0]]))
    xs, ys = np.meshgrid(np.arange(1.0, 20.0, 2.5), np.arange(1.0, 25.0, 2.5))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    targets = rng_from(11).uniform(-90.0, -45.0, size=(len(pts), 2))
    kernel = GprKernelParams(length_scale_m=1.0, noise_var=1e-8)
    rmap = GprRadioMap(layout, params, pts, targets, kernel)
    preds = rmap.posterior_mean(pts)
    assert np.abs(preds - targets).max() < 1e-6
    # the public query is the clamped posterior mean
    assert np.array_equal(rmap.query(pts),
                          np.clip(preds, params.floor_dbm, params.p0_dbm))


def test_far_query_decays_to_prior():
    params = PathLossParams()
    layout = FieldLayout(width_m=200, height_m=200, walls=np.zeros((0, 2, 2)),
                         aps=np.array([[5.0, 5.0]]))
    anchors = np.array([[4.0, 4.0], [6.0, 6.0]])
    targets = np.array([[-50.0], [-52.0]])
    rmap = GprRadioMap(layout, params, anchors, targets, GprKernelParams(length_scale_m=3.0))
    far = rmap.query([150.0, 150.0])
    assert far[0] == pytest.approx(params.floor_dbm)


def test_midpoint_of_equal_anchors_symmetric():
    # independent evaluation of the posterior-mean formula for two anchors
    params = PathLossParams()
    layout = FieldLayout(width_m=20, height_m=20, walls=np.zeros((0, 2, 2)),
                         aps=np.array([[1.0, 1.0]]))
    a, b = np.array([5.0, 10.0]), np.array([15.0, 10.0])
    value = -60.0
    kernel = GprKernelParams(length_scale_m=3.0, signal_var=25.0, noise_var=0.1)
    rmap = GprRadioMap(layout, params, np.stack([a, b]), np.array([[value], [value]]), kernel)
    mid = rmap.query([10.0, 10.0])[0]

    def k(x, y):
        return kernel.signal_var * np.exp(-((x - y) ** 2).sum() / (2 * kernel.length_scale_m**2))

    gram = np.array([[k(a, a) + kernel.noise_var, k(a, b)],
                     [k(b, a), k(b, b) + kernel.noise_var]])
    kstar = np.array([k(np.array([10.0, 10.0]), a), k(np.array([10.0, 10.0]), b)])
    expected = params.floor_dbm + kstar @ np.linalg.solve(gram, np.array([value, value]) - params.floor_dbm)
    assert mid == pytest.approx(expected, abs=1e-9)
    assert params.floor_dbm < mid < value + 1e-9

    swapped = GprRadioMap(layout, params, np.stack([b, a]), np.array([[value], [value]]), kernel)
    assert swapped.query([10.0, 10.0])[0] == pytest.approx(mid, abs=1e-12)


def test_query_clamped_and_finite(env):
    layout, params, anchors = env
    rmap = fit_gpr(layout, params, anchors)
    pts = rng_from(3).uniform([0, 0], [20, 25], size=(100, 2))
    out = rmap.query(pts)
    assert np.isfinite(out).all()
    assert (out >= params.floor_dbm).all() and (out <= params.p0_dbm).all()


def test_query_deterministic(env):
    layout, params, anchors = env
    rmap = fit_gpr(layout, params, anchors)
    p = [7.3, 11.9]
    assert np.array_equal(rmap.query(p), rmap.query(p))


def test_query_out_of_bounds(env):
    layout, params, anchors = env
    rmap = fit_gpr(layout, params, anchors)
    with pytest.raises(ValueError):
        rmap.query([30.0, 5.0])


def test_duplicate_anchors_zero_noise_fit_error():
    params = PathLossParams()
    layout = FieldLayout(width_m=20, height_m=20, walls=np.zeros((0, 2, 2)),
                         aps=np.array([[1.0, 1.0]]))
    anchors = np.array([[5.0, 5.0], [5.0, 5.0], [6.0, 6.0]])
    targets = np.full((3, 1), -60.0)
    with pytest.raises(FitError):
        GprRadioMap(layout, params, anchors, targets, GprKernelParams(noise_var=0.0))


def test_default_kernel_noise_var():
    params = PathLossParams(shadow_sigma_db=2.0)
    kernel = default_kernel_params(params, 50)
    assert kernel.noise_var == pytest.approx(4.0 / 50)


def test_save_load_round_trip(tmp_path, env):
    layout, params, anchors = env
    rmap = fit_gpr(layout, params, anchors)
    path = tmp_path / "field_map.json"
    save_field_map(path, rmap)
    reloaded = load_field_map(path)
    pts = rng_from(4).uniform([0, 0], [20, 25], size=(50, 2))
    assert np.array_equal(rmap.query(pts), reloaded.query(pts))
    assert np.array_equal(reloaded.anchor_points, rmap.anchor_points)
    assert np.array_equal(reloaded.mean_targets, rmap.mean_targets)


def test_load_rejects_bad_version(tmp_path, env):
    layout, params, anchors = env
    rmap = fit_gpr(layout, params, anchors)
    path = tmp_path / "field_map.json"
    save_field_map(path, rmap)
    doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
    path.write_text(doc)
    with pytest.raises(DataIntegrityError):
        load_field_map(path)


def test_query_fingerprint_single_point(env):
    layout, params, anchors = env
    rmap = fit_gpr(layout, params, anchors)
    fp = query_fingerprint(rmap, [10.0, 12.0])
    assert fp.shape == (20,)
