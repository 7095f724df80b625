"""Synthetic sensing over the cone world.

The camera is a level pinhole fixed to the vehicle (optical axis along the
vehicle's forward direction, mounted `mount_forward` ahead of and
`mount_up` above the pose reference point on the ground). Rendering is
flat-shaded: sky above the horizon, ground below, and each visible cone as
a filled rectangle of its label color exactly covering the analytic
projection of the cone's bounding cylinder. That keeps the raster and the
analytic bounding box in exact correspondence for the perception contract.

The lidar is a single horizontal ring ray-cast against cone base circles.
IMU and mocap signals are synthesized from consecutive truth states, with
counter-based Gaussian noise so draws are reproducible and order-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import normal_draws
from .vehicle import VehicleState, wrap_angle
from .world import LEFT_MARKER, RIGHT_MARKER, Cone, Course

# Flat-shade palette: exact, separable colors. Left/right lane markers are
# a documented convention, not a physical cone color.
CONE_COLORS = {LEFT_MARKER: (255, 0, 0), RIGHT_MARKER: (0, 255, 0)}
GROUND_COLOR = (90, 90, 90)
SKY_COLOR = (200, 220, 255)


@dataclass(frozen=True)
class CameraModel:
    width: int = 640
    height: int = 480
    fx: float = 350.0
    fy: float = 350.0
    cx: float = 320.0
    cy: float = 240.0
    mount_forward: float = 0.3   # m ahead of the pose reference point
    mount_up: float = 0.15       # m above ground
    max_range: float = 6.0       # m, visibility cutoff

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class BBox:
    """Half-open pixel box, v down: [u_min, u_max) x [v_min, v_max)."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self) -> None:
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError("degenerate bounding box")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def u_center(self) -> float:
        return 0.5 * (self.u_min + self.u_max)

    def iou(self, other: "BBox") -> float:
        iu = min(self.u_max, other.u_max) - max(self.u_min, other.u_min)
        iv = min(self.v_max, other.v_max) - max(self.v_min, other.v_min)
        if iu <= 0 or iv <= 0:
            return 0.0
        inter = iu * iv
        union = self.width * self.height + other.width * other.height - inter
        return inter / union


@dataclass
class Image:
    """Row-major RGB8 raster; pixels has shape (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.height, self.width, 3)
        if self.pixels.shape != expected or self.pixels.dtype != np.uint8:
            raise ValueError(f"pixel buffer must be uint8 with shape {expected}")

    def to_ppm_bytes(self) -> bytes:
        header = f"P6\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + self.pixels.tobytes()

    def write_ppm(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.to_ppm_bytes())


@dataclass(frozen=True)
class LidarConfig:
    angle_min: float = -math.pi
    angle_max: float = math.pi
    n_beams: int = 360
    max_range: float = 10.0
    mount_forward: float = 0.0

    def __post_init__(self) -> None:
        if self.n_beams < 1:
            raise ValueError("n_beams must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


@dataclass(frozen=True)
class LidarScan:
    angle_min: float
    angle_max: float
    n_beams: int
    ranges: tuple[float, ...]
    max_range: float


@dataclass(frozen=True)
class ImuSample:
    accel: tuple[float, float]   # (ax forward, ay left) body frame, m/s^2
    gyro_z: float                # rad/s
    noise_sigma_accel: float
    noise_sigma_gyro: float


@dataclass(frozen=True)
class MocapPose:
    x: float
    y: float
    heading: float
    sigma_position: float


def _to_vehicle_frame(px: float, py: float,
                      pose: tuple[float, float, float]) -> tuple[float, float]:
    vx, vy, heading = pose
    dx, dy = px - vx, py - vy
    ch, sh = math.cos(heading), math.sin(heading)
    return ch * dx + sh * dy, -sh * dx + ch * dy  # (forward, left)


def project_cone(cone: Cone, vehicle_pose: tuple[float, float, float],
                 cam: CameraModel) -> tuple[BBox, str] | None:
    """Analytic image box of a cone's bounding cylinder, clipped to the image.

    Returns None when the cone center is behind the image plane, beyond
    max_range, or fully outside the frame.
    """
    fwd, left = _to_vehicle_frame(cone.x, cone.y, vehicle_pose)
    z = fwd - cam.mount_forward          # depth along the optical axis
    if z <= 0.0:
        return None
    if math.hypot(z, left) > cam.max_range:
        return None

    u_c = cam.cx + cam.fx * (-left) / z
    half_w = cam.fx * cone.base_radius / z
    v_base = cam.cy + cam.fy * cam.mount_up / z
    v_top = cam.cy + cam.fy * (cam.mount_up - cone.height) / z

    u_min = max(u_c - half_w, 0.0)
    u_max = min(u_c + half_w, float(cam.width))
    v_min = max(v_top, 0.0)
    v_max = min(v_base, float(cam.height))
    if u_min >= u_max or v_min >= v_max:
        return None
    return BBox(u_min, v_min, u_max, v_max), cone.label


def render_image(course: Course, vehicle_pose: tuple[float, float, float],
                 cam: CameraModel) -> Image:
    """Flat-shaded raster of the course from the vehicle's camera."""
    pixels = np.empty((cam.height, cam.width, 3), dtype=np.uint8)
    horizon = min(cam.height, max(0, int(math.ceil(cam.cy))))
    pixels[:horizon] = SKY_COLOR
    pixels[horizon:] = GROUND_COLOR

    # painter order: far to near, by camera depth
    visible = []
    for cone in course.cones:
        hit = project_cone(cone, vehicle_pose, cam)
        if hit is not None:
            depth = _to_vehicle_frame(cone.x, cone.y, vehicle_pose)[0] - cam.mount_forward
            visible.append((depth, hit))
    visible.sort(key=lambda item: -item[0])

    for _, (bbox, label) in visible:
        u0 = max(0, int(round(bbox.u_min)))
        u1 = min(cam.width, int(round(bbox.u_max)))
        v0 = max(0, int(round(bbox.v_min)))
        v1 = min(cam.height, int(round(bbox.v_max)))
        if u0 < u1 and v0 < v1:
            pixels[v0:v1, u0:u1] = CONE_COLORS[label]
    return Image(width=cam.width, height=cam.height, pixels=pixels)


def lidar_scan(course: Course, vehicle_pose: tuple[float, float, float],
               config: LidarConfig) -> LidarScan:
    """Planar ray cast against cone base circles; max_range where no hit."""
    vx, vy, heading = vehicle_pose
    ox = vx + config.mount_forward * math.cos(heading)
    oy = vy + config.mount_forward * math.sin(heading)

    if config.n_beams == 1:
        angles = [config.angle_min]
    else:
        span = config.angle_max - config.angle_min
        angles = [config.angle_min + span * i / (config.n_beams - 1)
                  for i in range(config.n_beams)]

    ranges = []
    for rel in angles:
        a = heading + rel
        dx, dy = math.cos(a), math.sin(a)
        best = config.max_range
        for cone in course.cones:
            cxo, cyo = cone.x - ox, cone.y - oy
            m = dx * cxo + dy * cyo
            disc = m * m - (cxo * cxo + cyo * cyo - cone.base_radius ** 2)
            if disc < 0.0:
                continue
            root = math.sqrt(disc)
            t = m - root
            if t <= 0.0:
                t = m + root
            if 0.0 < t < best:
                best = t
        ranges.append(best)
    return LidarScan(angle_min=config.angle_min, angle_max=config.angle_max,
                     n_beams=config.n_beams, ranges=tuple(ranges),
                     max_range=config.max_range)


def imu_sample(prev: VehicleState, curr: VehicleState,
               noise: tuple[float, float], rng_seed: int) -> ImuSample:
    """Body-frame IMU synthesis from two consecutive truth states.

    Longitudinal accel is the speed finite difference; lateral accel is the
    centripetal term v * yaw_rate; gyro is the wrapped heading difference
    over dt. Zero-mean Gaussian noise comes from the counter-based
    generator, so the same seed always yields the same sample.
    """
    dt = curr.time - prev.time
    if dt <= 0.0:
        raise ValueError("curr.time must exceed prev.time")
    sigma_a, sigma_g = noise
    gyro = wrap_angle(curr.heading - prev.heading) / dt
    ax = (curr.speed - prev.speed) / dt
    ay = curr.speed * gyro
    na_x, na_y, ng = normal_draws(rng_seed, 3)
    return ImuSample(
        accel=(ax + sigma_a * float(na_x), ay + sigma_a * float(na_y)),
        gyro_z=gyro + sigma_g * float(ng),
        noise_sigma_accel=sigma_a,
        noise_sigma_gyro=sigma_g,
    )


def mocap_pose(state: VehicleState, sigma_position: float = 0.001,
               rng_seed: int = 0) -> MocapPose:
    """Motion-capture-grade pose: truth plus isotropic position noise."""
    if sigma_position < 0:
        raise ValueError("sigma_position must be non-negative")
    nx, ny = normal_draws(rng_seed, 2)
    return MocapPose(
        x=state.x + sigma_position * float(nx),
        y=state.y + sigma_position * float(ny),
        heading=state.heading,
        sigma_position=sigma_position,
    )
