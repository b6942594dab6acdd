"""Vectorised 2-D ray casting and distance queries."""
import numpy as np

_EPS = 1e-12


def ray_directions(heading, n_rays, fov):
    """Unit vectors from leftmost (+fov/2) to rightmost (-fov/2) ray."""
    angles = heading + np.linspace(fov / 2, -fov / 2, n_rays) if n_rays > 1 else np.array([heading])
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def ray_segment_hits(origin, dirs, segments):
    """Distance along each ray to each segment, inf where there is no hit. ``[R, S]``."""
    if len(segments) == 0:
        return np.full((len(dirs), 0), np.inf)
    p = segments[:, :2]
    e = segments[:, 2:] - p
    w = p - origin                                            # [S, 2]
    dx, dy = dirs[:, :1], dirs[:, 1:]                         # [R, 1]
    denom = dx * e[:, 1] - dy * e[:, 0]                       # cross(d, e) [R, S]
    t_num = w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]             # cross(w, e) [S]
    u_num = w[:, 0] * dy - w[:, 1] * dx                       # cross(w, d) [R, S]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / denom
        u = u_num / denom
    ok = (np.abs(denom) > _EPS) & (t >= 0) & (u >= -1e-12) & (u <= 1 + 1e-12)
    return np.where(ok, t, np.inf)


def ray_circle_hits(origin, dirs, circles):
    """Distance along each ray to each circle's boundary, inf on a miss. ``[R, K]``."""
    if len(circles) == 0:
        return np.full((len(dirs), 0), np.inf)
    oc = origin - circles[:, :2]                              # [K, 2]
    b = dirs @ oc.T                                           # [R, K]
    c = (oc ** 2).sum(axis=1) - circles[:, 2] ** 2            # [K]
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near >= 0, t_near, np.where(t_far >= 0, t_far, np.inf))
    return np.where(disc >= 0, t, np.inf)


def cast(origin, heading, n_rays, fov, d_max, segments, seg_material, circles, circ_material):
    """Depth (clamped to ``d_max``) and hit-material tag for each ray; tag 0 means no hit."""
    origin = np.asarray(origin, dtype=float)
    dirs = ray_directions(heading, n_rays, fov)
    hits = np.concatenate([ray_segment_hits(origin, dirs, segments),
                           ray_circle_hits(origin, dirs, circles)], axis=1)
    materials = np.concatenate([seg_material, circ_material])
    if hits.shape[1] == 0:
        return np.full(n_rays, float(d_max)), np.zeros(n_rays, dtype=int)
    idx = hits.argmin(axis=1)
    depth = hits[np.arange(n_rays), idx]
    tags = np.where(depth <= d_max, materials[idx], 0)
    return np.clip(depth, 1e-6, d_max), tags


def point_segment_distance(point, segments):
    if len(segments) == 0:
        return np.zeros(0)
    p = segments[:, :2]
    e = segments[:, 2:] - p
    w = np.asarray(point) - p
    ee = (e ** 2).sum(axis=1)
    u = np.clip((w * e).sum(axis=1) / np.maximum(ee, _EPS), 0.0, 1.0)
    closest = p + u[:, None] * e
    return np.sqrt(((np.asarray(point) - closest) ** 2).sum(axis=1))


def point_circle_distance(point, circles):
    """Signed distance to each circle boundary (negative inside)."""
    if len(circles) == 0:
        return np.zeros(0)
    return np.sqrt(((circles[:, :2] - np.asarray(point)) ** 2).sum(axis=1)) - circles[:, 2]


def nearest_distance(point, segments, circles):
    d = np.concatenate([point_segment_distance(point, segments), point_circle_distance(point, circles)])
    return float(d.min()) if d.size else np.inf
