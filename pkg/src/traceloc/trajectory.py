"""Random-walk trajectory synthesis and placement.

Source walks are synthetic (clamped-Gaussian step lengths, Gaussian heading
changes); downstream only their geometric statistics matter. Walks are
cropped to the trace length, rigidly placed into the field, and rejected if
any step touches a wall or leaves the bounds.
"""

import numpy as np

from traceloc.field import FieldLayout
from traceloc.geometry import any_step_hits_wall

STEP_MEAN_M = 0.7
STEP_STD_M = 0.15
STEP_MIN_M = 0.2
STEP_MAX_M = 1.5
HEADING_STD_RAD = np.deg2rad(25.0)


def generate_walk_bank(count: int, length: int, rng) -> list[np.ndarray]:
    """Generate ``count`` random walks of ``length`` positions each.

    Step length ~ N(0.7, 0.15) clamped to [0.2, 1.5] m; per-step heading
    change ~ N(0, 25deg); initial heading uniform. Walks start at the origin.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if length < 2:
        raise ValueError("length must be >= 2")
    bank = []
    for _ in range(count):
        heading0 = rng.uniform(0.0, 2.0 * np.pi)
        steps = rng.normal(STEP_MEAN_M, STEP_STD_M, size=length - 1).clip(STEP_MIN_M, STEP_MAX_M)
        turns = rng.normal(0.0, HEADING_STD_RAD, size=length - 1)
        headings = heading0 + np.cumsum(turns)
        deltas = steps[:, None] * np.stack([np.cos(headings), np.sin(headings)], axis=1)
        positions = np.vstack([np.zeros((1, 2)), np.cumsum(deltas, axis=0)])
        bank.append(positions)
    return bank


def crop_subtrajectory(trajectory: np.ndarray, m: int, rng) -> np.ndarray:
    """Contiguous window of ``m`` positions with a uniform start index."""
    trajectory = np.asarray(trajectory, dtype=float)
    if len(trajectory) < m:
        raise ValueError(f"trajectory has {len(trajectory)} positions, need >= {m}")
    start = int(rng.integers(0, len(trajectory) - m + 1))
    return trajectory[start : start + m].copy()


def place_and_rotate(trajectory: np.ndarray, p, angle: float) -> np.ndarray:
    """Rigidly move the trajectory so its first point sits at ``p``, rotated
    by ``angle`` around that point. Pairwise distances are preserved."""
    trajectory = np.asarray(trajectory, dtype=float)
    p = np.asarray(p, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    rel = trajectory - trajectory[0]
    return p + rel @ rot.T


def collides(layout: FieldLayout, trajectory: np.ndarray) -> bool:
    """True if any step segment touches a wall or any point leaves the field."""
    trajectory = np.asarray(trajectory, dtype=float)
    if not layout.contains(trajectory).all():
        return True
    return any_step_hits_wall(trajectory, layout.walls)
