"""
Array-backed collision and ray kernels for the team footprint.

The dataclass API in :mod:`dqct.geometry` is the reference; these kernels
repeat the same separating-axis math on packed float arrays so rollouts and
planners can run millions of queries. Obstacles are packed as rows of
``(cx, cy, cos, sin, hx, hy, ex, ey)`` where ``ex, ey`` are the half-extents
of the axis-aligned hull used as a cheap pre-filter.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numba import njit

from .geometry import OrientedBox

PACK_WIDTH = 8


def pack_boxes(boxes: Sequence[OrientedBox], margin: float = 0.0) -> np.ndarray:
    out = np.empty((len(boxes), PACK_WIDTH))
    for i, b in enumerate(boxes):
        c, s = math.cos(b.heading), math.sin(b.heading)
        hx, hy = b.half_dims.x + margin, b.half_dims.y + margin
        out[i] = (
            b.center.x,
            b.center.y,
            c,
            s,
            hx,
            hy,
            hx * abs(c) + hy * abs(s),
            hx * abs(s) + hy * abs(c),
        )
    return out


@njit(cache=True)
def box_hits_any(cx, cy, c, s, hx, hy, walls):
    ex = hx * abs(c) + hy * abs(s)
    ey = hx * abs(s) + hy * abs(c)
    for i in range(walls.shape[0]):
        dx = walls[i, 0] - cx
        dy = walls[i, 1] - cy
        if abs(dx) > ex + walls[i, 6] or abs(dy) > ey + walls[i, 7]:
            continue
        wc = walls[i, 2]
        ws = walls[i, 3]
        whx = walls[i, 4]
        why = walls[i, 5]
        separated = False
        # face normals of the moving box, then of the wall
        for k in range(4):
            if k == 0:
                ax, ay = c, s
            elif k == 1:
                ax, ay = -s, c
            elif k == 2:
                ax, ay = wc, ws
            else:
                ax, ay = -ws, wc
            ra = hx * abs(c * ax + s * ay) + hy * abs(-s * ax + c * ay)
            rb = whx * abs(wc * ax + ws * ay) + why * abs(-ws * ax + wc * ay)
            if abs(dx * ax + dy * ay) > ra + rb:
                separated = True
                break
        if not separated:
            return True
    return False


@njit(cache=True)
def team_collides(px, py, th, h1, h2, shape, walls):
    """Payload bar plus both robot footprints against every wall.

    ``shape`` is ``(half_length, payload_half_width, robot_hx, robot_hy)``.
    """
    half_len = shape[0]
    c = math.cos(th)
    s = math.sin(th)
    if box_hits_any(px, py, c, s, half_len, shape[1], walls):
        return True
    ox = half_len * c
    oy = half_len * s
    if box_hits_any(px + ox, py + oy, math.cos(h1), math.sin(h1), shape[2], shape[3], walls):
        return True
    if box_hits_any(px - ox, py - oy, math.cos(h2), math.sin(h2), shape[2], shape[3], walls):
        return True
    return False


@njit(cache=True)
def team_collides_many(poses, shape, walls):
    """Vector of collision flags for rows ``(px, py, th, h1, h2)``."""
    n = poses.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        out[i] = team_collides(poses[i, 0], poses[i, 1], poses[i, 2], poses[i, 3], poses[i, 4], shape, walls)
    return out


@njit(cache=True)
def _inside(ox, oy, wall):
    dx = ox - wall[0]
    dy = oy - wall[1]
    return abs(dx * wall[2] + dy * wall[3]) <= wall[4] and abs(-dx * wall[3] + dy * wall[2]) <= wall[5]


@njit(cache=True)
def cast_rays(ox, oy, angles, walls, max_range):
    """Exact ray/edge distances for each heading in ``angles``."""
    n = angles.shape[0]
    out = np.full(n, max_range)
    for i in range(walls.shape[0]):
        if _inside(ox, oy, walls[i]):
            out[:] = 0.0
            return out
    cx = np.empty(4)
    cy = np.empty(4)
    signs_u = (-1.0, 1.0, 1.0, -1.0)
    signs_v = (-1.0, -1.0, 1.0, 1.0)
    for i in range(walls.shape[0]):
        wc, ws, hx, hy = walls[i, 2], walls[i, 3], walls[i, 4], walls[i, 5]
        for k in range(4):
            cx[k] = walls[i, 0] + signs_u[k] * hx * wc - signs_v[k] * hy * ws
            cy[k] = walls[i, 1] + signs_u[k] * hx * ws + signs_v[k] * hy * wc
        for j in range(n):
            dx = math.cos(angles[j])
            dy = math.sin(angles[j])
            for k in range(4):
                px, py = cx[k], cy[k]
                qx, qy = cx[(k + 1) % 4], cy[(k + 1) % 4]
                exx = qx - px
                exy = qy - py
                wx = px - ox
                wy = py - oy
                denom = dx * exy - dy * exx
                if denom == 0.0:
                    if wx * dy - wy * dx != 0.0:
                        continue
                    t1 = wx * dx + wy * dy
                    t2 = (qx - ox) * dx + (qy - oy) * dy
                    t = max_range
                    if t1 >= 0.0:
                        t = min(t, t1)
                    if t2 >= 0.0:
                        t = min(t, t2)
                else:
                    t = (wx * exy - wy * exx) / denom
                    sgm = (wx * dy - wy * dx) / denom
                    if t < 0.0 or sgm < 0.0 or sgm > 1.0:
                        continue
                if t < out[j]:
                    out[j] = t
    return out
