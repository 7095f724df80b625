"""Single-track plant model of the 1/6th-scale test vehicle.

Pose kinematics use a rear-axle kinematic bicycle; the longitudinal force
balance combines a linear torque-speed motor curve with brake, quadratic
drag and rolling resistance. Integration is semi-implicit Euler (speed
first, then pose) at a fixed step, so replays are bit-exact. Everything
here is a pure function over frozen value types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

# Motor and supply defaults for the stock drivetrain. The speed constant is
# the only documented motor figure; no-load speed is derived from it at the
# configured pack voltage.
MOTOR_KV = 1300.0        # rev/min per volt
SUPPLY_VOLTAGE = 11.1    # V, 3-cell LiPo nominal


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]. In-range values pass through bit-exact."""
    if -math.pi < angle <= math.pi:
        return angle
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def noload_speed_rad_s(kv: float = MOTOR_KV, voltage: float = SUPPLY_VOLTAGE) -> float:
    """Motor no-load shaft speed in rad/s from a KV rating and supply voltage."""
    return kv * voltage * TWO_PI / 60.0


@dataclass(frozen=True)
class VehicleParams:
    """Plant parameters.

    Geometry (wheelbase, track width) matches the physical platform; the
    remaining magnitudes are plausible defaults for a vehicle of this scale
    and are all overridable through the harness config.
    """

    wheelbase: float            # m
    track_width: float          # m
    mass: float                 # kg
    wheel_radius: float         # m
    max_steer: float            # rad, road-wheel angle
    steer_rate_limit: float     # rad/s
    gear_ratio: float           # motor rev per wheel rev
    motor_stall_torque: float   # N*m at the motor shaft
    motor_noload_speed: float   # rad/s at the motor shaft
    brake_force_max: float      # N at the contact patch
    drag_coeff: float           # N*s^2/m^2
    rolling_coeff: float        # dimensionless
    gravity: float = 9.81       # m/s^2

    def __post_init__(self) -> None:
        if self.wheelbase <= 0 or self.track_width <= 0:
            raise ValueError("wheelbase and track_width must be positive")
        if self.mass <= 0 or self.wheel_radius <= 0:
            raise ValueError("mass and wheel_radius must be positive")
        if not 0.0 < self.max_steer < math.pi / 2:
            raise ValueError("max_steer must lie in (0, pi/2)")
        if self.steer_rate_limit <= 0:
            raise ValueError("steer_rate_limit must be positive")
        if self.motor_stall_torque < 0 or self.brake_force_max < 0:
            raise ValueError("torque and brake limits must be non-negative")
        if self.motor_noload_speed <= 0:
            raise ValueError("motor_noload_speed must be positive")


@dataclass(frozen=True)
class DriverInputs:
    """Actuation triple; each channel is clamped to its interval on construction."""

    throttle: float = 0.0   # [0, 1]
    braking: float = 0.0    # [0, 1]
    steering: float = 0.0   # [-1, 1], positive = left turn

    def __post_init__(self) -> None:
        object.__setattr__(self, "throttle", min(1.0, max(0.0, float(self.throttle))))
        object.__setattr__(self, "braking", min(1.0, max(0.0, float(self.braking))))
        object.__setattr__(self, "steering", min(1.0, max(-1.0, float(self.steering))))


@dataclass(frozen=True)
class VehicleState:
    """Planar truth state; the pose reference point is the rear-axle center."""

    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0      # rad, wrapped to (-pi, pi]
    speed: float = 0.0        # m/s, signed longitudinal
    steer_angle: float = 0.0  # rad, actual road-wheel angle
    time: float = 0.0         # s

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


def default_art_params(supply_voltage: float = SUPPLY_VOLTAGE,
                       motor_kv: float = MOTOR_KV) -> VehicleParams:
    """Default parameter set for the 1/6th-scale platform.

    Wheelbase 0.47 m and track width 0.34 m are the measured geometry; the
    no-load speed comes from the 1300 KV rating at `supply_voltage`. The
    rest is the documented defaults table.
    """
    return VehicleParams(
        wheelbase=0.47,
        track_width=0.34,
        mass=12.0,
        wheel_radius=0.095,
        max_steer=0.4,
        steer_rate_limit=3.0,
        gear_ratio=9.0,
        motor_stall_torque=1.2,
        motor_noload_speed=noload_speed_rad_s(motor_kv, supply_voltage),
        brake_force_max=40.0,
        drag_coeff=0.8,
        rolling_coeff=0.02,
    )


def steer_map(cmd: float, current: float, dt: float, params: VehicleParams) -> float:
    """Advance the road-wheel angle toward cmd*max_steer under the slew limit.

    The steering linkage is approximated as a linear command-to-angle map;
    the servo's finite speed appears as the rate limit.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd = min(1.0, max(-1.0, cmd))
    target = cmd * params.max_steer
    max_delta = params.steer_rate_limit * dt
    delta = min(max_delta, max(-max_delta, target - current))
    new = current + delta
    return min(params.max_steer, max(-params.max_steer, new))


def motor_force(throttle: float, speed: float, params: VehicleParams) -> float:
    """Drive force at the contact patch from the linear torque-speed curve.

    Motor shaft speed follows from wheel speed through the gear ratio;
    torque falls linearly from stall to zero at the no-load speed (clamped
    below zero), and the wheel force is torque reflected back through the
    drivetrain.
    """
    omega = speed / params.wheel_radius * params.gear_ratio
    torque = throttle * params.motor_stall_torque * max(0.0, 1.0 - omega / params.motor_noload_speed)
    return torque * params.gear_ratio / params.wheel_radius


def step(state: VehicleState, inputs: DriverInputs, dt: float,
         params: VehicleParams) -> VehicleState:
    """Advance the plant one fixed step. Pure and bit-deterministic.

    Speed integrates first (semi-implicit Euler, first order); resistive
    forces (brake, drag, rolling) are clamped at the zero crossing so they
    never reverse the sign of speed within a step. Pose then advances by
    the kinematic single-track relations using the updated speed.
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must lie in (0, 0.05] s, got {dt}")
    for name in ("x", "y", "heading", "speed", "steer_angle", "time"):
        if not math.isfinite(getattr(state, name)):
            raise ValueError(f"non-finite state field {name!r}")

    steer = steer_map(inputs.steering, state.steer_angle, dt, params)

    v = state.speed
    f_drive = motor_force(inputs.throttle, v, params)
    v_after_drive = v + f_drive / params.mass * dt
    # Resistive magnitude; direction opposes the start-of-step speed sign.
    decel = (inputs.braking * params.brake_force_max
             + params.drag_coeff * v * v
             + params.rolling_coeff * params.mass * params.gravity) / params.mass * dt
    if v > 0.0:
        v_new = max(v_after_drive - decel, 0.0)
    elif v < 0.0:
        v_new = min(v_after_drive + decel, max(v_after_drive, 0.0))
    else:
        v_new = v_after_drive

    heading_new = wrap_angle(state.heading + v_new * math.tan(steer) / params.wheelbase * dt)
    x_new = state.x + v_new * math.cos(state.heading) * dt
    y_new = state.y + v_new * math.sin(state.heading) * dt

    return VehicleState(
        x=x_new,
        y=y_new,
        heading=heading_new,
        speed=v_new,
        steer_angle=steer,
        time=state.time + dt,
    )


def turn_radius(steer_angle: float, params: VehicleParams) -> float:
    """Steady-state turn radius of the rear axle for a fixed wheel angle."""
    if steer_angle == 0.0:
        raise ValueError("turn radius is infinite at zero steer angle")
    return params.wheelbase / abs(math.tan(steer_angle))


def calibrate_max_steer(min_radius_measurements: list[float],
                        params: VehicleParams) -> float:
    """Infer the maximum wheel angle from minimum-radius turn measurements.

    Mirrors the physical calibration: drive full-lock circles, measure the
    radii (e.g. with motion tracking), and invert the bicycle relation at
    their mean.
    """
    if not min_radius_measurements:
        raise ValueError("need at least one radius measurement")
    for r in min_radius_measurements:
        if r <= 0:
            raise ValueError(f"radius measurements must be positive, got {r}")
    mean_r = sum(min_radius_measurements) / len(min_radius_measurements)
    return math.atan(params.wheelbase / mean_r)
