"""Cone-lane autonomy stack.

Perception segments the exact cone label colors and groups them with
4-connected component labeling, emitting bounding boxes, labels and an
area-based confidence — the same output contract a learned detector would
provide, but deterministic so closed-loop tests are exact. Ranges come
from the pinhole relation on bbox height; the planner fits one low-degree
boundary curve per side and aims at the centerline a lookahead distance
out; steering is pure pursuit with proportional speed regulation.

The pipeline is stateless: every frame is processed on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .sensors import CONE_COLORS, BBox, CameraModel, Image
from .vehicle import DriverInputs, VehicleParams, VehicleState
from .world import LEFT_MARKER, RIGHT_MARKER

# Component area that maps to confidence 1.0; any monotone score in [0, 1]
# satisfies the detector interface.
REFERENCE_AREA = 1000.0

MIN_COMPONENT_AREA = 4   # px
MAX_FIT_DEGREE = 2

# 4-connectivity for component labeling
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    label: str
    confidence: float
    position: tuple[float, float] | None = None  # (x forward, y left), vehicle frame


@dataclass(frozen=True)
class ControllerParams:
    lookahead: float = 2.0      # m
    target_speed: float = 1.5   # m/s
    speed_gain: float = 0.8
    brake_gain: float = 0.5

    def __post_init__(self) -> None:
        if self.lookahead <= 0 or self.target_speed <= 0:
            raise ValueError("lookahead and target_speed must be positive")


@dataclass(frozen=True)
class Plan:
    """Boundary fits and the chosen target point, all in the vehicle frame.

    Curves are polynomial coefficients in ascending order (c0, c1, ...)
    evaluated as y(x) = c0 + c1*x + c2*x^2.
    """

    left_points: tuple[tuple[float, float], ...] = ()
    right_points: tuple[tuple[float, float], ...] = ()
    left_curve: tuple[float, ...] = ()
    right_curve: tuple[float, ...] = ()
    target: tuple[float, float] | None = None
    valid: bool = False


def polyval(coeffs: tuple[float, ...], x: float) -> float:
    """Evaluate ascending-order coefficients at x."""
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def detect_cones(img: Image) -> list[Detection]:
    """Exact-color connected-component detector.

    Components of at least MIN_COMPONENT_AREA pixels become detections
    with tight half-open bounds, sorted by bbox area descending.
    """
    detections: list[Detection] = []
    for label, color in CONE_COLORS.items():
        mask = (img.pixels == np.array(color, dtype=np.uint8)).all(axis=2)
        labeled, n = ndimage.label(mask, structure=_CROSS)
        if n == 0:
            continue
        areas = ndimage.sum_labels(mask, labeled, index=range(1, n + 1))
        slices = ndimage.find_objects(labeled)
        for comp, area in zip(slices, areas):
            if area < MIN_COMPONENT_AREA:
                continue
            vs, us = comp
            bbox = BBox(float(us.start), float(vs.start), float(us.stop), float(vs.stop))
            confidence = min(1.0, float(area) / REFERENCE_AREA)
            detections.append(Detection(bbox=bbox, label=label, confidence=confidence))
    detections.sort(key=lambda d: -(d.bbox.width * d.bbox.height))
    return detections


def estimate_position(det: Detection, cam: CameraModel,
                      cone_height: float) -> Detection:
    """Fill the vehicle-frame ground position from the pinhole relations.

    Depth follows from the apparent height of a cone of known physical
    height; the lateral offset from the horizontal bbox center. The camera
    mount offset shifts depth into the vehicle frame.
    """
    h_px = det.bbox.height
    if h_px < 1.0:
        raise ValueError("bbox height must be at least 1 px")
    z = cam.fy * cone_height / h_px
    y = -(det.bbox.u_center - cam.cx) * z / cam.fx
    x = z + cam.mount_forward
    return replace(det, position=(x, y))


def _fit_side(points: list[tuple[float, float]]) -> tuple[float, ...]:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    degree = min(MAX_FIT_DEGREE, len(points) - 1, len(set(xs.tolist())) - 1)
    if degree < 1:
        return (float(ys.mean()),)
    coeffs = np.polyfit(xs, ys, degree)   # highest order first
    return tuple(float(c) for c in coeffs[::-1])


def plan(dets: list[Detection], lookahead: float,
         lane_width: float = 1.0) -> Plan:
    """Boundary-curve fit and target point selection.

    Each side is fitted independently (degree at most 2, shrinking with
    point count); the target sits on the centerline at the lookahead
    distance, never extrapolated beyond the fitted data. With one side
    missing, the present side's curve offset by half the lane width stands
    in for the centerline. No detections yield an invalid plan.
    """
    lefts = sorted((d.position for d in dets if d.label == LEFT_MARKER),
                   key=lambda p: p[0])
    rights = sorted((d.position for d in dets if d.label == RIGHT_MARKER),
                    key=lambda p: p[0])
    if not lefts and not rights:
        return Plan()

    left_curve = _fit_side(lefts) if lefts else ()
    right_curve = _fit_side(rights) if rights else ()

    if lefts and rights:
        x_t = min(lookahead, lefts[-1][0], rights[-1][0])
        y_t = 0.5 * (polyval(left_curve, x_t) + polyval(right_curve, x_t))
    elif lefts:
        x_t = min(lookahead, lefts[-1][0])
        y_t = polyval(left_curve, x_t) - lane_width / 2.0
        right_curve = (left_curve[0] - lane_width,) + left_curve[1:]
    else:
        x_t = min(lookahead, rights[-1][0])
        y_t = polyval(right_curve, x_t) + lane_width / 2.0
        left_curve = (right_curve[0] + lane_width,) + right_curve[1:]

    return Plan(
        left_points=tuple(lefts),
        right_points=tuple(rights),
        left_curve=left_curve,
        right_curve=right_curve,
        target=(x_t, y_t),
        valid=True,
    )


def control(p: Plan, state: VehicleState, vp: VehicleParams,
            cp: ControllerParams) -> DriverInputs:
    """Pure-pursuit steering plus proportional speed regulation.

    An invalid plan commands a full stop. Throttle and braking cannot both
    be positive: they act on opposite signs of the same speed error.
    """
    if not p.valid or p.target is None:
        return DriverInputs(throttle=0.0, braking=1.0, steering=0.0)
    tx, ty = p.target
    alpha = math.atan2(ty, tx)
    l_d = math.hypot(tx, ty)
    delta = math.atan(2.0 * vp.wheelbase * math.sin(alpha) / l_d)
    steering = min(1.0, max(-1.0, delta / vp.max_steer))
    err = cp.target_speed - state.speed
    throttle = min(1.0, max(0.0, cp.speed_gain * err))
    braking = min(1.0, max(0.0, cp.brake_gain * -err))
    return DriverInputs(throttle=throttle, braking=braking, steering=steering)


def perceive_and_plan(img: Image, cam: CameraModel, cone_height: float,
                      lookahead: float, lane_width: float = 1.0,
                      ) -> tuple[list[Detection], Plan]:
    """Full perception-to-plan pipeline for one frame."""
    dets = [estimate_position(d, cam, cone_height) for d in detect_cones(img)]
    return dets, plan(dets, lookahead, lane_width=lane_width)
