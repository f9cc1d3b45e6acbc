"""Gaussian-process radio map fitted on anchor survey means.

One squared-exponential GP per AP, all sharing the same anchor inputs, so a
single Cholesky factorization serves every AP. Hyperparameters are fixed (not
optimized) for reproducibility; the prior mean equals the reporting floor so
queries far from every anchor decay to "no signal".
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from traceloc.exceptions import DataIntegrityError, FitError
from traceloc.field import AnchorGrid, FieldLayout, PathLossParams

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GprKernelParams:
    """Squared-exponential kernel k(x,x') = signal_var * exp(-|x-x'|^2 / (2 l^2))."""

    length_scale_m: float = 3.0
    signal_var: float = 25.0
    noise_var: float = 0.08

    def __post_init__(self):
        if self.length_scale_m <= 0:
            raise ValueError("length_scale_m must be positive")
        if self.signal_var <= 0:
            raise ValueError("signal_var must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")


def default_kernel_params(params: PathLossParams, samples_per_anchor: int) -> GprKernelParams:
    """Kernel defaults with observation noise set to the anchor-mean variance."""
    return GprKernelParams(noise_var=params.shadow_sigma_db**2 / samples_per_anchor)


class GprRadioMap:
    """Immutable per-AP GP posterior-mean interpolator over the field.

    Queries return the posterior mean m0 + k*(x)^T (K + sn^2 I)^-1 (y - m0),
    clamped to [floor_dbm, p0_dbm]. Safe for concurrent read-only use.
    """

    def __init__(self, layout: FieldLayout, pathloss: PathLossParams,
                 anchor_points, mean_targets, kernel: GprKernelParams):
        self._layout = layout
        self._pathloss = pathloss
        self._anchors = np.asarray(anchor_points, dtype=float).copy()
        self._targets = np.asarray(mean_targets, dtype=float).copy()
        if len(self._anchors) < 2:
            raise ValueError("need at least two anchors to fit the radio map")
        if self._targets.shape != (len(self._anchors), layout.n_aps):
            raise ValueError("mean_targets must have shape (n_anchors, n_aps)")
        self._kernel = kernel
        gram = self._k(self._anchors, self._anchors)
        gram[np.diag_indices_from(gram)] += kernel.noise_var
        try:
            chol = cho_factor(gram, lower=True)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"kernel system is singular: {exc}") from exc
        self._alpha = cho_solve(chol, self._targets - pathloss.floor_dbm)
        self._anchors.setflags(write=False)
        self._targets.setflags(write=False)
        self._alpha.setflags(write=False)

    def _k(self, a, b):
        sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        return self._kernel.signal_var * np.exp(-sq / (2.0 * self._kernel.length_scale_m**2))

    @property
    def layout(self) -> FieldLayout:
        return self._layout

    @property
    def pathloss(self) -> PathLossParams:
        return self._pathloss

    @property
    def kernel(self) -> GprKernelParams:
        return self._kernel

    @property
    def anchor_points(self) -> np.ndarray:
        return self._anchors

    @property
    def mean_targets(self) -> np.ndarray:
        return self._targets

    @property
    def n_aps(self) -> int:
        return self._layout.n_aps

    def posterior_mean(self, points) -> np.ndarray:
        """Raw GP posterior mean (dBm) at (P, 2) points, without clamping."""
        points = np.asarray(points, dtype=float)
        squeeze = points.ndim == 1
        points = np.atleast_2d(points)
        if not self._layout.contains(points).all():
            raise ValueError("query points must lie inside the field bounds")
        mean = self._pathloss.floor_dbm + self._k(points, self._anchors) @ self._alpha
        return mean[0] if squeeze else mean

    def query(self, points) -> np.ndarray:
        """Fingerprints at (P, 2) points -> (P, n_aps) dBm, clamped to the
        reportable range [floor_dbm, p0_dbm]."""
        return np.clip(self.posterior_mean(points), self._pathloss.floor_dbm,
                       self._pathloss.p0_dbm)


def fit_gpr(layout: FieldLayout, pathloss: PathLossParams, anchors: AnchorGrid,
            kernel: GprKernelParams | None = None) -> GprRadioMap:
    """Fit the per-AP GP interpolators on anchor mean targets."""
    if kernel is None:
        kernel = default_kernel_params(pathloss, anchors.samples_per_anchor)
    return GprRadioMap(layout, pathloss, anchors.anchor_points, anchors.mean_targets, kernel)


def query_fingerprint(radio_map: GprRadioMap, point) -> np.ndarray:
    """Fingerprint vector (n_aps,) at one point, clamped to [floor, p0]."""
    return radio_map.query(point)


def save_field_map(path, radio_map: GprRadioMap) -> None:
    """Write layout, path-loss params, anchors, targets, and kernel as JSON.

    Floats round-trip exactly (shortest-repr decimal), so a reloaded map
    reproduces queries bit for bit on the same platform.
    """
    layout = radio_map.layout
    doc = {
        "format_version": _FORMAT_VERSION,
        "layout": {
            "width_m": layout.width_m,
            "height_m": layout.height_m,
            "walls": layout.walls.tolist(),
            "aps": layout.aps.tolist(),
        },
        "pathloss": {
            "p0_dbm": radio_map.pathloss.p0_dbm,
            "ref_dist_m": radio_map.pathloss.ref_dist_m,
            "exponent": radio_map.pathloss.exponent,
            "wall_atten_db": radio_map.pathloss.wall_atten_db,
            "shadow_sigma_db": radio_map.pathloss.shadow_sigma_db,
            "floor_dbm": radio_map.pathloss.floor_dbm,
        },
        "kernel": {
            "length_scale_m": radio_map.kernel.length_scale_m,
            "signal_var": radio_map.kernel.signal_var,
            "noise_var": radio_map.kernel.noise_var,
        },
        "anchors": {
            "points": radio_map.anchor_points.tolist(),
            "mean_targets": radio_map.mean_targets.tolist(),
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def load_field_map(path) -> GprRadioMap:
    """Reload a map written by ``save_field_map``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIntegrityError(f"cannot read field map {path}: {exc}") from exc
    if doc.get("format_version") != _FORMAT_VERSION:
        raise DataIntegrityError(
            f"field map version mismatch: got {doc.get('format_version')}, "
            f"expected {_FORMAT_VERSION}"
        )
    layout = FieldLayout(
        width_m=doc["layout"]["width_m"],
        height_m=doc["layout"]["height_m"],
        walls=np.asarray(doc["layout"]["walls"], dtype=float).reshape(-1, 2, 2),
        aps=np.asarray(doc["layout"]["aps"], dtype=float),
    )
    pathloss = PathLossParams(**doc["pathloss"])
    kernel = GprKernelParams(**doc["kernel"])
    return GprRadioMap(
        layout, pathloss,
        np.asarray(doc["anchors"]["points"], dtype=float),
        np.asarray(doc["anchors"]["mean_targets"], dtype=float),
        kernel,
    )
