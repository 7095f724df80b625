"""Cone-course world: course records, the course file format, generators,
and the vehicle-footprint collision test.

Course file format (UTF-8 text, one record per line):

    # twinlane-course v1
    start,<x>,<y>,<heading>
    <x>,<y>,L
    <x>,<y>,R

`L`/`R` mark the left/right lane boundary. Lines starting with `#` after
the header are comments. Floats use repr round-trip text.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

LEFT_MARKER = "left_marker"
RIGHT_MARKER = "right_marker"
LABELS = (LEFT_MARKER, RIGHT_MARKER)

COURSE_HEADER = "# twinlane-course v1"

_LABEL_TO_CODE = {LEFT_MARKER: "L", RIGHT_MARKER: "R"}
_CODE_TO_LABEL = {"L": LEFT_MARKER, "R": RIGHT_MARKER}

DEFAULT_CONE_RADIUS = 0.1
DEFAULT_CONE_HEIGHT = 0.3


class CourseFormatError(ValueError):
    """Raised when a course file does not match the documented format."""


@dataclass(frozen=True)
class Cone:
    x: float
    y: float
    label: str
    base_radius: float = DEFAULT_CONE_RADIUS
    height: float = DEFAULT_CONE_HEIGHT

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"unknown cone label {self.label!r}")
        if self.base_radius <= 0 or self.height <= 0:
            raise ValueError("cone base_radius and height must be positive")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("cone position must be finite")


@dataclass(frozen=True)
class Course:
    """Ordered cone list plus the start pose shared by every run on it."""

    cones: tuple[Cone, ...]
    start_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    name: str = ""

    def labeled(self, label: str) -> list[Cone]:
        return [c for c in self.cones if c.label == label]


def save_course(course: Course, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(COURSE_HEADER + "\n")
        x, y, h = course.start_pose
        f.write(f"start,{x!r},{y!r},{h!r}\n")
        for cone in course.cones:
            f.write(f"{cone.x!r},{cone.y!r},{_LABEL_TO_CODE[cone.label]}\n")


def load_course(path: str, base_radius: float = DEFAULT_CONE_RADIUS,
                height: float = DEFAULT_CONE_HEIGHT, name: str = "") -> Course:
    """Parse a course file; cone geometry is supplied by the caller."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != COURSE_HEADER:
        raise CourseFormatError(f"{path}: missing header line {COURSE_HEADER!r}")

    start = (0.0, 0.0, 0.0)
    cones: list[Cone] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if parts[0] == "start":
                if len(parts) != 4:
                    raise ValueError("start line needs x,y,heading")
                start = (float(parts[1]), float(parts[2]), float(parts[3]))
            else:
                if len(parts) != 3:
                    raise ValueError("cone line needs x,y,label")
                if parts[2] not in _CODE_TO_LABEL:
                    raise ValueError(f"label must be L or R, got {parts[2]!r}")
                cones.append(Cone(float(parts[0]), float(parts[1]),
                                  _CODE_TO_LABEL[parts[2]],
                                  base_radius=base_radius, height=height))
        except ValueError as exc:
            raise CourseFormatError(f"{path}:{lineno}: {exc}") from exc
    return Course(cones=tuple(cones), start_pose=start, name=name or path)


def course_text(course: Course) -> str:
    """Canonical file text of a course (what save_course writes)."""
    x, y, h = course.start_pose
    lines = [COURSE_HEADER, f"start,{x!r},{y!r},{h!r}"]
    lines += [f"{c.x!r},{c.y!r},{_LABEL_TO_CODE[c.label]}" for c in course.cones]
    return "\n".join(lines) + "\n"


def course_hash(course: Course) -> str:
    """SHA-256 of the canonical course text; used to pair logs for gap reports."""
    return hashlib.sha256(course_text(course).encode()).hexdigest()


# ---------------------------------------------------------------------------
# generators

def _pairs_from_centerline(points, tangents, lane_width, base_radius, height):
    cones = []
    half = lane_width / 2.0
    for (px, py), (tx, ty) in zip(points, tangents):
        norm = math.hypot(tx, ty)
        nx, ny = -ty / norm, tx / norm  # left normal
        cones.append(Cone(px + half * nx, py + half * ny, LEFT_MARKER,
                          base_radius=base_radius, height=height))
        cones.append(Cone(px - half * nx, py - half * ny, RIGHT_MARKER,
                          base_radius=base_radius, height=height))
    return tuple(cones)


def generate_straight(pairs: int, lane_width: float = 1.0, spacing: float = 1.0,
                      start_offset: float = 1.5,
                      base_radius: float = DEFAULT_CONE_RADIUS,
                      height: float = DEFAULT_CONE_HEIGHT) -> Course:
    """Straight lane along +x; the vehicle starts `start_offset` before the
    first pair."""
    if pairs < 1:
        raise ValueError("need at least one cone pair")
    points = [(start_offset + i * spacing, 0.0) for i in range(pairs)]
    tangents = [(1.0, 0.0)] * pairs
    cones = _pairs_from_centerline(points, tangents, lane_width, base_radius, height)
    return Course(cones=cones, start_pose=(0.0, 0.0, 0.0),
                  name=f"straight-{pairs}p")


def generate_slalom(pairs: int, lane_width: float = 1.0, spacing: float = 1.0,
                    amplitude: float = 0.5, period: float = 4.0,
                    start_offset: float = 1.5,
                    base_radius: float = DEFAULT_CONE_RADIUS,
                    height: float = DEFAULT_CONE_HEIGHT) -> Course:
    """Sinusoidal centerline y = A sin(2 pi (x - x0) / T), sampled every
    `spacing` in x."""
    if pairs < 1:
        raise ValueError("need at least one cone pair")
    k = 2.0 * math.pi / period
    points, tangents = [], []
    for i in range(pairs):
        x = start_offset + i * spacing
        phase = k * (x - start_offset)
        points.append((x, amplitude * math.sin(phase)))
        tangents.append((1.0, amplitude * k * math.cos(phase)))
    cones = _pairs_from_centerline(points, tangents, lane_width, base_radius, height)
    return Course(cones=cones, start_pose=(0.0, 0.0, 0.0),
                  name=f"slalom-{pairs}p-a{amplitude}-t{period}")


def generate_arc(pairs: int, lane_width: float = 1.0, spacing: float = 1.0,
                 radius: float = 3.0, start_offset: float = 1.5,
                 base_radius: float = DEFAULT_CONE_RADIUS,
                 height: float = DEFAULT_CONE_HEIGHT) -> Course:
    """Constant-radius left-hand arc; arc length between pairs is `spacing`."""
    if pairs < 1:
        raise ValueError("need at least one cone pair")
    if radius <= lane_width / 2.0:
        raise ValueError("radius must exceed half the lane width")
    points, tangents = [], []
    for i in range(pairs):
        s = start_offset + i * spacing
        phi = s / radius
        points.append((radius * math.sin(phi), radius * (1.0 - math.cos(phi))))
        tangents.append((math.cos(phi), math.sin(phi)))
    cones = _pairs_from_centerline(points, tangents, lane_width, base_radius, height)
    return Course(cones=cones, start_pose=(0.0, 0.0, 0.0),
                  name=f"arc-{pairs}p-r{radius}")


# ---------------------------------------------------------------------------
# collisions

def check_collisions(course: Course, vehicle_pose: tuple[float, float, float],
                     footprint_length: float, footprint_width: float) -> list[int]:
    """Indices of cones whose base circle touches the vehicle's oriented
    rectangle footprint (closed condition), centered on the pose reference
    point."""
    if footprint_length <= 0 or footprint_width <= 0:
        raise ValueError("footprint dimensions must be positive")
    vx, vy, heading = vehicle_pose
    ch, sh = math.cos(heading), math.sin(heading)
    half_l = footprint_length / 2.0
    half_w = footprint_width / 2.0
    hits = []
    for idx, cone in enumerate(course.cones):
        dx, dy = cone.x - vx, cone.y - vy
        fwd = ch * dx + sh * dy
        left = -sh * dx + ch * dy
        cf = min(half_l, max(-half_l, fwd))
        cl = min(half_w, max(-half_w, left))
        if math.hypot(fwd - cf, left - cl) <= cone.base_radius:
            hits.append(idx)
    return hits
