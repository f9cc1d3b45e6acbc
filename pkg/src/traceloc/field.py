"""Synthetic indoor field and its ground-truth signal model.

The field is a 20x25 m floor with a corridor, room partitions, and 20 APs.
Received signal strength follows a log-distance path-loss law with per-wall
attenuation and Gaussian shadowing; it stands in for a real measured site and
feeds the anchor observations that the radio-map regression is fitted on.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from traceloc.geometry import count_wall_crossings, points_in_bounds
from traceloc.seeding import rng_from


@dataclass(frozen=True)
class PathLossParams:
    """Parameters of the ground-truth RSSI model (dBm / meters)."""

    p0_dbm: float = -40.0
    ref_dist_m: float = 1.0
    exponent: float = 2.2
    wall_atten_db: float = 5.0
    shadow_sigma_db: float = 2.0
    floor_dbm: float = -95.0

    def __post_init__(self):
        if self.ref_dist_m <= 0:
            raise ValueError("ref_dist_m must be positive")
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")
        if self.floor_dbm >= self.p0_dbm:
            raise ValueError("floor_dbm must be below p0_dbm")


@dataclass(frozen=True)
class FieldLayout:
    """Walls and AP positions of one simulated floor.

    ``walls`` has shape (W, 2, 2): W segments with two (x, y) endpoints.
    ``aps`` has shape (n, 2).
    """

    width_m: float = 20.0
    height_m: float = 25.0
    walls: np.ndarray = dc_field(default_factory=lambda: np.zeros((0, 2, 2)))
    aps: np.ndarray = dc_field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        object.__setattr__(self, "walls", np.asarray(self.walls, dtype=float).reshape(-1, 2, 2))
        object.__setattr__(self, "aps", np.asarray(self.aps, dtype=float).reshape(-1, 2))
        if len(self.aps) < 1:
            raise ValueError("layout needs at least one AP")
        ax, ay = self.aps[:, 0], self.aps[:, 1]
        if not ((ax > 0) & (ax < self.width_m) & (ay > 0) & (ay < self.height_m)).all():
            raise ValueError("all APs must lie strictly inside the field")
        if self.walls.size and not points_in_bounds(
            self.walls.reshape(-1, 2), self.width_m, self.height_m
        ).all():
            raise ValueError("wall endpoints must lie inside the field bounds")

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    def contains(self, points) -> np.ndarray:
        return points_in_bounds(points, self.width_m, self.height_m)


@dataclass(frozen=True)
class AnchorGrid:
    """Survey anchors with raw RSSI observations.

    ``observations`` has shape (A, n_aps, samples): per anchor, per AP, the
    noisy dBm samples collected there. ``mean_targets`` averages them into the
    per-anchor regression targets.
    """

    anchor_points: np.ndarray
    samples_per_anchor: int
    observations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "anchor_points", np.asarray(self.anchor_points, dtype=float))
        object.__setattr__(self, "observations", np.asarray(self.observations, dtype=float))
        if self.observations.shape[0] != len(self.anchor_points):
            raise ValueError("observations and anchor_points disagree on anchor count")
        if self.observations.shape[2] != self.samples_per_anchor:
            raise ValueError("observations and samples_per_anchor disagree")

    @property
    def mean_targets(self) -> np.ndarray:
        return self.observations.mean(axis=2)


def _split_wall(a, b, gaps):
    """Cut segment a-b (along its single varying axis) at door gaps."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    axis = 0 if a[1] == b[1] else 1
    lo, hi = sorted((a[axis], b[axis]))
    pieces = []
    cursor = lo
    for g0, g1 in sorted(gaps):
        g0, g1 = max(lo, g0), min(hi, g1)
        if g0 > cursor:
            pieces.append((cursor, g0))
        cursor = max(cursor, g1)
    if cursor < hi:
        pieces.append((cursor, hi))
    out = []
    for s, e in pieces:
        p, q = a.copy(), b.copy()
        p[axis], q[axis] = s, e
        out.append([p, q])
    return out


def build_default_field(seed: int) -> FieldLayout:
    """Deterministic 20x25 m layout: a central corridor, partitioned rooms
    on both sides, and 20 quasi-uniform APs."""
    rng = rng_from(seed, "field")
    width, height = 20.0, 25.0
    corridor_lo, corridor_hi = 11.0, 14.0
    door = 1.8

    walls = []

    def corridor_wall(y):
        gaps = []
        for gx in rng.uniform(2.0, width - 4.0, size=2):
            gaps.append((gx, gx + door))
        walls.extend(_split_wall((0.0, y), (width, y), gaps))

    corridor_wall(corridor_lo)
    corridor_wall(corridor_hi)

    # Room partitions: 2-3 below the corridor, 1-3 above (3-6 total).
    n_lower = int(rng.integers(2, 4))
    n_upper = int(rng.integers(1, 4))
    for i in range(n_lower):
        x = (i + 1) * width / (n_lower + 1) + rng.uniform(-1.0, 1.0)
        gy = rng.uniform(1.0, corridor_lo - 1.0 - door)
        walls.extend(_split_wall((x, 0.0), (x, corridor_lo), [(gy, gy + door)]))
    for i in range(n_upper):
        x = (i + 1) * width / (n_upper + 1) + rng.uniform(-1.0, 1.0)
        gy = rng.uniform(corridor_hi + 1.0, height - 1.0 - door)
        walls.extend(_split_wall((x, corridor_hi), (x, height), [(gy, gy + door)]))

    # 20 APs on a jittered 4x5 grid, kept away from the boundary.
    margin = 1.0
    xs = margin + (width - 2 * margin) * (np.arange(4) + 0.5) / 4
    ys = margin + (height - 2 * margin) * (np.arange(5) + 0.5) / 5
    gx, gy = np.meshgrid(xs, ys)
    aps = np.stack([gx.ravel(), gy.ravel()], axis=1)
    aps += rng.uniform(-0.8, 0.8, size=aps.shape)
    aps[:, 0] = aps[:, 0].clip(0.5, width - 0.5)
    aps[:, 1] = aps[:, 1].clip(0.5, height - 0.5)

    return FieldLayout(width_m=width, height_m=height, walls=np.asarray(walls), aps=aps)


def true_rssi(layout: FieldLayout, params: PathLossParams, ap_index: int, point) -> float:
    """Noise-free RSSI (dBm) of one AP at one in-bounds point."""
    point = np.asarray(point, dtype=float)
    if not layout.contains(point):
        raise ValueError(f"point {point.tolist()} is outside the field bounds")
    if not 0 <= ap_index < layout.n_aps:
        raise ValueError(f"ap_index {ap_index} out of range")
    ap = layout.aps[ap_index]
    d = float(np.hypot(*(point - ap)))
    crossings = int(count_wall_crossings(point, ap, layout.walls))
    loss = 10.0 * params.exponent * np.log10(max(d, params.ref_dist_m) / params.ref_dist_m)
    return max(params.floor_dbm, params.p0_dbm - loss - params.wall_atten_db * crossings)


def true_rssi_grid(layout: FieldLayout, params: PathLossParams, points) -> np.ndarray:
    """Vectorized ``true_rssi`` over all APs: (P, 2) points -> (P, n_aps) dBm."""
    points = np.asarray(points, dtype=float)
    if not layout.contains(points).all():
        raise ValueError("all points must lie inside the field bounds")
    d = np.linalg.norm(points[:, None, :] - layout.aps[None, :, :], axis=-1)
    crossings = count_wall_crossings(
        np.broadcast_to(points[:, None, :], (len(points), layout.n_aps, 2)),
        np.broadcast_to(layout.aps[None, :, :], (len(points), layout.n_aps, 2)),
        layout.walls,
    )
    loss = 10.0 * params.exponent * np.log10(np.maximum(d, params.ref_dist_m) / params.ref_dist_m)
    return np.maximum(params.floor_dbm, params.p0_dbm - loss - params.wall_atten_db * crossings)


def sample_observation(layout, params, ap_index, point, rng) -> float:
    """One shadowed RSSI observation, clamped at the reporting floor."""
    base = true_rssi(layout, params, ap_index, point)
    noisy = base + rng.normal(0.0, params.shadow_sigma_db)
    return max(params.floor_dbm, float(noisy))


def build_anchor_grid(
    layout: FieldLayout,
    params: PathLossParams,
    rng,
    n_anchors: int = 337,
    samples_per_anchor: int = 50,
) -> AnchorGrid:
    """Survey ``n_anchors`` jittered grid points, collecting noisy samples.

    Mirrors a manual site survey: anchors cover the walkable floor on a
    jittered grid, and each anchor gets ``samples_per_anchor`` independent
    shadowed observations per AP (same noise model as ``sample_observation``).
    """
    margin = 0.3
    nx = max(2, int(round(np.sqrt(n_anchors * layout.width_m / layout.height_m))))
    ny = int(np.ceil(n_anchors / nx))
    xs = margin + (layout.width_m - 2 * margin) * (np.arange(nx) + 0.5) / nx
    ys = margin + (layout.height_m - 2 * margin) * (np.arange(ny) + 0.5) / ny
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    jitter_x = 0.3 * (layout.width_m - 2 * margin) / nx
    jitter_y = 0.3 * (layout.height_m - 2 * margin) / ny
    pts += rng.uniform(-1.0, 1.0, size=pts.shape) * np.array([jitter_x, jitter_y])
    pts[:, 0] = pts[:, 0].clip(margin, layout.width_m - margin)
    pts[:, 1] = pts[:, 1].clip(margin, layout.height_m - margin)
    pts = pts[:n_anchors]

    truth = true_rssi_grid(layout, params, pts)
    noise = rng.normal(0.0, params.shadow_sigma_db, size=(len(pts), layout.n_aps, samples_per_anchor))
    obs = np.maximum(params.floor_dbm, truth[:, :, None] + noise)
    return AnchorGrid(anchor_points=pts, samples_per_anchor=samples_per_anchor, observations=obs)
