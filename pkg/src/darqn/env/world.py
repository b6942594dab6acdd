"""World maps and the plain-text world file format.

A world file is a sequence of ``[section]`` headers followed by one entry per
line.  Lengths are meters, angles degrees, ``#`` starts a comment::

    name room-scattered
    [bounds]
    0 0 12 12
    [walls]
    segment 4 0 4 5 brick
    rect 6 6 7 9 wood              # four segments
    [obstacles]
    circle 3 3 0.4 cone
    box 8 2 9 3 metal
    [movers]
    mover 6 6 0.3 0.05 0.4 person  # x y radius speed turn_std
    [spawn]
    rect 1 1 11 11
    heading 0 360
    [goal]                         # optional; reaching it ends the episode
    rect 10 10 12 12

The bounding box is always closed by four walls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import WorldFileError

MATERIALS = ("none", "wall", "brick", "wood", "metal", "fabric", "person", "cone", "plant", "glass")
MATERIAL_TAG = {name: i for i, name in enumerate(MATERIALS)}


@dataclass
class MoverSpec:
    x: float
    y: float
    radius: float
    speed: float
    turn_std: float
    material: int = MATERIAL_TAG["person"]


@dataclass
class WorldMap:
    name: str
    bounds: tuple                     # (x0, y0, x1, y1)
    segments: np.ndarray              # [S, 4] x1 y1 x2 y2
    segment_material: np.ndarray      # [S] int
    circles: np.ndarray               # [K, 3] x y r
    circle_material: np.ndarray       # [K] int
    movers: list = field(default_factory=list)
    spawn: tuple = (0.0, 0.0, 0.0, 0.0)
    heading_range: tuple = (0.0, 2 * math.pi)
    goal: tuple | None = None

    def inside(self, x, y):
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    def in_goal(self, x, y):
        if self.goal is None:
            return False
        gx0, gy0, gx1, gy1 = self.goal
        return gx0 <= x <= gx1 and gy0 <= y <= gy1

    def with_materials(self, segment_material=None, circle_material=None):
        """Copy with materials swapped; geometry untouched."""
        return WorldMap(
            self.name, self.bounds, self.segments,
            self.segment_material if segment_material is None else np.asarray(segment_material),
            self.circles,
            self.circle_material if circle_material is None else np.asarray(circle_material),
            list(self.movers), self.spawn, self.heading_range, self.goal,
        )


def _box_segments(x0, y0, x1, y1):
    return [(x0, y0, x1, y0), (x1, y0, x1, y1), (x1, y1, x0, y1), (x0, y1, x0, y0)]


SECTIONS = ("bounds", "walls", "obstacles", "movers", "spawn", "goal")
_ARITY = {
    ("walls", "segment"): 4, ("walls", "rect"): 4,
    ("obstacles", "circle"): 3, ("obstacles", "box"): 4,
    ("movers", "mover"): 5,
    ("spawn", "rect"): 4, ("spawn", "heading"): 2,
    ("goal", "rect"): 4,
}


def parse_world(text, path=None) -> WorldMap:
    """Parse world-file text; errors carry the offending line number."""
    name = Path(path).stem if path else "world"
    section = None
    bounds = None
    segs, seg_mat, circles, circ_mat, movers = [], [], [], [], []
    spawn = heading = goal = None

    def fail(msg, lineno):
        raise WorldFileError(msg, lineno, path)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                fail(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                fail(f"unknown section [{section}]", lineno)
            continue
        tokens = line.split()
        if section is None:
            if tokens[0] == "name" and len(tokens) == 2:
                name = tokens[1]
                continue
            fail(f"entry outside any section: {line!r}", lineno)

        if section == "bounds":
            kind, args = "bounds", tokens
            arity = 4
        else:
            kind, args = tokens[0].lower(), tokens[1:]
            arity = _ARITY.get((section, kind))
            if arity is None:
                fail(f"unknown entry {kind!r} in [{section}]", lineno)
        material = None
        if len(args) == arity + 1 and section in ("walls", "obstacles", "movers"):
            material = args[-1].lower()
            args = args[:-1]
            if material not in MATERIAL_TAG or material == "none":
                fail(f"unknown material {material!r}", lineno)
        if len(args) != arity:
            fail(f"{kind} expects {arity} numbers, got {len(args)}", lineno)
        try:
            vals = [float(a) for a in args]
        except ValueError:
            fail(f"non-numeric value in {line!r}", lineno)
        if not all(math.isfinite(v) for v in vals):
            fail("non-finite value", lineno)

        if section == "bounds":
            if bounds is not None:
                fail("bounds given twice", lineno)
            if not (vals[0] < vals[2] and vals[1] < vals[3]):
                fail("bounds need x0 < x1 and y0 < y1", lineno)
            bounds = tuple(vals)
            continue
        if bounds is None:
            fail("[bounds] must come before other geometry", lineno)
        if section == "spawn" and kind == "rect":
            # a spawn region may collapse to a line or a point
            if not (vals[0] <= vals[2] and vals[1] <= vals[3]):
                fail("spawn rect needs x0 <= x1 and y0 <= y1", lineno)
        elif kind in ("rect", "box") and not (vals[0] < vals[2] and vals[1] < vals[3]):
            fail(f"{kind} needs x0 < x1 and y0 < y1", lineno)
        n_coords = 4 if kind in ("segment", "rect", "box") else 2
        pts = [] if kind == "heading" else [(vals[i], vals[i + 1]) for i in range(0, n_coords, 2)]
        for px, py in pts:
            if not (bounds[0] <= px <= bounds[2] and bounds[1] <= py <= bounds[3]):
                fail(f"point ({px}, {py}) lies outside the world bounds", lineno)
        tag = MATERIAL_TAG[material or ("person" if section == "movers" else "wall")]

        if section == "walls" and kind == "segment":
            if vals[0] == vals[2] and vals[1] == vals[3]:
                fail("degenerate segment", lineno)
            segs.append(tuple(vals))
            seg_mat.append(tag)
        elif (section, kind) in (("walls", "rect"), ("obstacles", "box")):
            for s in _box_segments(*vals):
                segs.append(s)
                seg_mat.append(tag)
        elif kind == "circle":
            if vals[2] <= 0:
                fail("circle radius must be positive", lineno)
            circles.append(tuple(vals))
            circ_mat.append(tag)
        elif kind == "mover":
            if vals[2] <= 0 or vals[3] < 0 or vals[4] < 0:
                fail("mover needs radius > 0, speed >= 0, turn_std >= 0", lineno)
            movers.append(MoverSpec(*vals, material=tag))
        elif section == "spawn" and kind == "rect":
            if spawn is not None:
                fail("spawn rect given twice", lineno)
            spawn = tuple(vals)
        elif section == "spawn" and kind == "heading":
            heading = (math.radians(vals[0]), math.radians(vals[1]))
            if heading[1] < heading[0]:
                fail("heading range must be increasing", lineno)
        elif section == "goal":
            goal = tuple(vals)

    if bounds is None:
        raise WorldFileError("missing [bounds] section", None, path)
    if spawn is None:
        raise WorldFileError("missing spawn rect", None, path)
    segs.extend(_box_segments(*bounds))
    seg_mat.extend([MATERIAL_TAG["wall"]] * 4)
    return WorldMap(
        name=name,
        bounds=bounds,
        segments=np.array(segs, dtype=float).reshape(-1, 4),
        segment_material=np.array(seg_mat, dtype=int),
        circles=np.array(circles, dtype=float).reshape(-1, 3),
        circle_material=np.array(circ_mat, dtype=int),
        movers=movers,
        spawn=spawn,
        heading_range=heading or (0.0, 2 * math.pi),
        goal=goal,
    )


def load_world(path) -> WorldMap:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise WorldFileError(f"cannot read world file: {e}", None, path) from None
    return parse_world(text, path)


def builtin_worlds():
    return sorted(p.name[:-len(".world")] for p in resources.files(__package__).joinpath("worlds").iterdir()
                  if p.name.endswith(".world"))


def get_world(name_or_path) -> WorldMap:
    """Load a shipped world by name, or any world file by path."""
    p = Path(str(name_or_path))
    if p.suffix == ".world" and p.exists():
        return load_world(p)
    res = resources.files(__package__).joinpath("worlds", f"{name_or_path}.world")
    if res.is_file():
        return parse_world(res.read_text(), f"{name_or_path}.world")
    raise WorldFileError(f"no such world {name_or_path!r}; shipped worlds: {', '.join(builtin_worlds())}")
