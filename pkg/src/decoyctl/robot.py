"""Differential-drive plant model, feedback linearization, reference path, PI law.

The controlled output is the point B sitting a distance `b` ahead of the axle
midpoint along the heading.  Commanding B's planar velocity u turns the
nonholonomic unicycle into two decoupled discrete integrators: T_FL(theta)
maps u to body velocities (v, omega) and the wheel matrix H maps those to
(w_r, w_l).  Simulation advances by explicit Euler at the sampling period.

Also hosts the plaintext PI tracking controller (the ground truth that the
encrypted evaluation must reproduce) and the cubic-spline reference path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

# Khepera-class platform geometry (meters) and loop period (seconds).
WHEEL_RADIUS_DEFAULT = 0.0210
AXLE_LENGTH_DEFAULT = 0.10470
T_S_DEFAULT = 0.15
OFFSET_B_DEFAULT = 0.1

K_P_DEFAULT = 4.0
K_I_DEFAULT = 0.2

SPEED_DEFAULT = 0.09
WAYPOINT_COUNT_DEFAULT = 22


@dataclass(frozen=True)
class RobotParams:
    wheel_radius: float = WHEEL_RADIUS_DEFAULT
    axle_length: float = AXLE_LENGTH_DEFAULT
    t_s: float = T_S_DEFAULT
    b: float = OFFSET_B_DEFAULT  # axle midpoint to controlled point B

    def __post_init__(self) -> None:
        if min(self.wheel_radius, self.axle_length, self.t_s, self.b) <= 0:
            raise ValueError("robot parameters must all be positive")


@dataclass(frozen=True)
class RobotState:
    p_x: float = 0.0
    p_y: float = 0.0
    theta: float = 0.0


@dataclass(frozen=True)
class PIGains:
    k_p: float = K_P_DEFAULT
    k_i: float = K_I_DEFAULT
    t_s: float = T_S_DEFAULT


Vec2 = tuple[float, float]


def step_diff_drive(state: RobotState, wheels: Vec2, params: RobotParams) -> RobotState:
    """One Euler step of the differential-drive kinematics under (w_r, w_l)."""
    v, omega = wheel_body_transform("forward", wheels, params)
    return RobotState(
        p_x=state.p_x + params.t_s * v * math.cos(state.theta),
        p_y=state.p_y + params.t_s * v * math.sin(state.theta),
        theta=state.theta + params.t_s * omega,
    )


def wheel_body_transform(direction: str, vec: Vec2, params: RobotParams) -> Vec2:
    """Map wheel speeds to body (v, omega) via H ('forward'), or back ('inverse')."""
    r, d = params.wheel_radius, params.axle_length
    a, b = vec
    if direction == "forward":
        return (r * (a + b) / 2.0, r * (a - b) / d)
    if direction == "inverse":
        return (a / r + b * d / (2.0 * r), a / r - b * d / (2.0 * r))
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def virtual_output(state: RobotState, b: float) -> Vec2:
    """Coordinates of the controlled point B."""
    return (state.p_x + b * math.cos(state.theta),
            state.p_y + b * math.sin(state.theta))


def feedback_linearize(u: Vec2, theta: float, b: float) -> Vec2:
    """B-point velocity command to body (v, omega) via T_FL(theta)."""
    if b == 0:
        raise ValueError("linearization offset b must be nonzero")
    v = u[0] * math.cos(theta) + u[1] * math.sin(theta)
    omega = (-u[0] * math.sin(theta) + u[1] * math.cos(theta)) / b
    return (v, omega)


def recover_wheel_input(u: Vec2, theta: float, params: RobotParams) -> Vec2:
    """B-point velocity command straight to wheel speeds: H^-1 T_FL(theta) u."""
    return wheel_body_transform("inverse", feedback_linearize(u, theta, params.b), params)


def pi_step(x_c: Vec2, y: Vec2, r: Vec2, gains: PIGains) -> tuple[Vec2, Vec2]:
    """Discrete PI tracking law on each axis: returns (x_c_next, u)."""
    e = (r[0] - y[0], r[1] - y[1])
    x_c_next = (x_c[0] + gains.t_s * e[0], x_c[1] + gains.t_s * e[1])
    u = (gains.k_i * x_c[0] + gains.k_p * e[0], gains.k_i * x_c[1] + gains.k_p * e[1])
    return x_c_next, u


def gain_matrices(gains: PIGains) -> tuple[list[list[float]], list[list[float]]]:
    """Controller as two 2x6 blocks over v = (x_c, r, y): state update V, output Z."""
    t, kp, ki = gains.t_s, gains.k_p, gains.k_i
    v_block = [[1.0, 0.0, t, 0.0, -t, 0.0],
               [0.0, 1.0, 0.0, t, 0.0, -t]]
    z_block = [[ki, 0.0, kp, 0.0, -kp, 0.0],
               [0.0, ki, 0.0, kp, 0.0, -kp]]
    return v_block, z_block


class ReferencePath:
    """Natural cubic spline through waypoints, traversed at constant speed.

    The spline is parameterized by chord length, so the average speed between
    consecutive waypoints equals the configured speed.  Past the end the path
    holds its final point.
    """

    def __init__(self, waypoints: list[Vec2], speed: float = SPEED_DEFAULT):
        if len(waypoints) < 2:
            raise ValueError("need at least two waypoints")
        if speed <= 0:
            raise ValueError("speed must be positive")
        pts = np.asarray(waypoints, dtype=float)
        chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(chords == 0):
            raise ValueError("consecutive waypoints must be distinct")
        s = np.concatenate(([0.0], np.cumsum(chords)))
        self.waypoints = [tuple(p) for p in pts]
        self.speed = speed
        self.length = float(s[-1])
        self.duration = self.length / speed
        self._spline = CubicSpline(s, pts, bc_type="natural")
        self._tangent = self._spline.derivative()

    def _arc(self, t: float) -> float:
        return min(max(t, 0.0) * self.speed, self.length)

    def point_at(self, t: float) -> Vec2:
        """Spline position at time t seconds (held at the final point past the end)."""
        x, y = self._spline(self._arc(t))
        return (float(x), float(y))

    def heading_at(self, t: float) -> float:
        """Tangent angle of the path at time t."""
        dx, dy = self._tangent(self._arc(t))
        return math.atan2(float(dy), float(dx))

    def b_reference_at(self, t: float, b: float) -> Vec2:
        """Reference for point B: spline pose offset by b along the tangent."""
        x, y = self.point_at(t)
        heading = self.heading_at(t)
        return (x + b * math.cos(heading), y + b * math.sin(heading))

    def initial_pose(self) -> RobotState:
        """Pose whose B-point coincides with the t=0 reference."""
        x, y = self.point_at(0.0)
        return RobotState(p_x=x, p_y=y, theta=self.heading_at(0.0))


def reference(k: int, path: ReferencePath, b: float, t_s: float = T_S_DEFAULT) -> Vec2:
    """B-point reference at step k."""
    if k < 0:
        raise ValueError("step index must be nonnegative")
    return path.b_reference_at(k * t_s, b)


def figure_eight_waypoints(count: int = WAYPOINT_COUNT_DEFAULT, width: float = 2.0,
                           height: float = 1.0) -> list[Vec2]:
    """Closed figure-eight (Gerono lemniscate) sampled into `count` waypoints."""
    if count < 2:
        raise ValueError("need at least two waypoints")
    t = np.linspace(0.0, 2.0 * math.pi, count)
    x = (width / 2.0) * np.sin(t)
    y = height * np.sin(t) * np.cos(t)
    return list(zip(x.tolist(), y.tolist()))


def load_waypoints(path: str | Path) -> list[Vec2]:
    """Read waypoints from plain text: one 'x y' pair per line, meters."""
    points: list[Vec2] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
        points.append((float(parts[0]), float(parts[1])))
    if len(points) < 2:
        raise ValueError(f"{path}: need at least two waypoints")
    return points


def save_waypoints(path: str | Path, points: list[Vec2]) -> None:
    lines = [f"{x!r} {y!r}" for x, y in points]
    Path(path).write_text("\n".join(lines) + "\n")
