"""Column renderer turning a ray scan into image pairs.

Each ray becomes one image column.  A surface at depth ``d`` covers the rows
with ``|u| <= k / d`` (``u`` in [-1, 1] is the row's vertical offset from the
horizon); the rest of the column is floor below and ceiling above, seen at
depth ``k / |u|``.
"""
import numpy as np

from .world import MATERIALS

PALETTE = np.array([
    [0.00, 0.00, 0.00],   # none (never drawn: open space shows floor/ceiling)
    [0.85, 0.82, 0.75],   # wall
    [0.70, 0.30, 0.20],   # brick
    [0.60, 0.42, 0.22],   # wood
    [0.55, 0.60, 0.65],   # metal
    [0.30, 0.35, 0.70],   # fabric
    [0.90, 0.65, 0.50],   # person
    [0.95, 0.50, 0.05],   # cone
    [0.20, 0.60, 0.25],   # plant
    [0.60, 0.85, 0.90],   # glass
])
assert len(PALETTE) == len(MATERIALS)
FLOOR = np.array([0.35, 0.32, 0.30])
CEILING = np.array([0.80, 0.80, 0.85])
HORIZON_SCALE = 0.5   # k: a surface 0.5 m away fills the whole column


def _rows(height):
    return (np.arange(height) + 0.5 - height / 2) / (height / 2)


def depth_image(depth, d_max, height):
    """Per-pixel depth ``[height, R]`` in meters, clamped to ``d_max``."""
    u = np.abs(_rows(height))[:, None]
    d = np.asarray(depth, dtype=float)[None, :]
    surface = u <= HORIZON_SCALE / d
    with np.errstate(divide="ignore"):
        plane = np.where(u > 0, HORIZON_SCALE / u, np.inf)
    return np.minimum(np.where(surface, d, plane), d_max)


def pseudo_rgb(depth, tags, d_max, height):
    """Shaded 3-channel image ``[3, height, R]`` in [0, 1]."""
    depth = np.asarray(depth, dtype=float)
    rows = _rows(height)[:, None]
    dimg = depth_image(depth, d_max, height)
    surface = np.abs(rows) <= HORIZON_SCALE / depth[None, :]
    shade = 1.0 - 0.7 * (dimg / d_max)                         # [H, R]
    base = np.where(surface[..., None], PALETTE[np.asarray(tags)][None, :, :],
                    np.where((rows > 0)[..., None], FLOOR, CEILING))
    img = np.clip(base * shade[..., None], 0.0, 1.0)
    return np.ascontiguousarray(img.transpose(2, 0, 1))
