"""2-D segment predicates for wall crossings and trajectory collision tests.

All predicates are inclusive: a segment touching another's endpoint counts as
an intersection. This is the tie-break used both for counting walls crossed
by a signal path and for rejecting trajectories that graze a wall.
"""

import numpy as np


def _cross(ux, uy, vx, vy):
    return ux * vy - uy * vx


def _within_bbox(ax, ay, bx, by, px, py):
    # p assumed collinear with segment a-b; test containment in its bbox
    return (
        (np.minimum(ax, bx) <= px)
        & (px <= np.maximum(ax, bx))
        & (np.minimum(ay, by) <= py)
        & (py <= np.maximum(ay, by))
    )


def segments_intersect(p1, p2, q1, q2):
    """Inclusive intersection test between segments p1-p2 and q1-q2.

    Inputs are arrays of shape (..., 2) and broadcast against each other;
    the result is a boolean array of the broadcast shape. Collinear overlap
    and endpoint touches both count as intersections.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)

    p1x, p1y = p1[..., 0], p1[..., 1]
    p2x, p2y = p2[..., 0], p2[..., 1]
    q1x, q1y = q1[..., 0], q1[..., 1]
    q2x, q2y = q2[..., 0], q2[..., 1]

    d1 = _cross(q2x - q1x, q2y - q1y, p1x - q1x, p1y - q1y)
    d2 = _cross(q2x - q1x, q2y - q1y, p2x - q1x, p2y - q1y)
    d3 = _cross(p2x - p1x, p2y - p1y, q1x - p1x, q1y - p1y)
    d4 = _cross(p2x - p1x, p2y - p1y, q2x - p1x, q2y - p1y)

    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )
    touch = (
        ((d1 == 0) & _within_bbox(q1x, q1y, q2x, q2y, p1x, p1y))
        | ((d2 == 0) & _within_bbox(q1x, q1y, q2x, q2y, p2x, p2y))
        | ((d3 == 0) & _within_bbox(p1x, p1y, p2x, p2y, q1x, q1y))
        | ((d4 == 0) & _within_bbox(p1x, p1y, p2x, p2y, q2x, q2y))
    )
    return proper | touch


def count_wall_crossings(start, end, walls):
    """Number of wall segments crossed by the segment start-end.

    ``start``/``end``: points of shape (2,) or batches (..., 2).
    ``walls``: array of shape (W, 2, 2). Returns an integer array of the
    batch shape (0-d for single points).
    """
    walls = np.asarray(walls, dtype=float)
    if walls.size == 0:
        start = np.asarray(start, dtype=float)
        return np.zeros(start.shape[:-1], dtype=int)
    start = np.asarray(start, dtype=float)[..., None, :]
    end = np.asarray(end, dtype=float)[..., None, :]
    hits = segments_intersect(start, end, walls[:, 0], walls[:, 1])
    return hits.sum(axis=-1)


def any_step_hits_wall(points, walls) -> bool:
    """True if any consecutive-point segment of ``points`` touches a wall."""
    points = np.asarray(points, dtype=float)
    walls = np.asarray(walls, dtype=float)
    if len(points) < 2 or walls.size == 0:
        return False
    starts = points[:-1, None, :]
    ends = points[1:, None, :]
    return bool(segments_intersect(starts, ends, walls[:, 0], walls[:, 1]).any())


def points_in_bounds(points, width: float, height: float):
    """Boolean mask of points inside the closed rectangle [0,w] x [0,h]."""
    points = np.asarray(points, dtype=float)
    x, y = points[..., 0], points[..., 1]
    return (x >= 0.0) & (x <= width) & (y >= 0.0) & (y <= height)
