"""Friction-limited kinematic bicycle and episode termination rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .track import LaneFrameError, Route, wrap_angle


class VehicleFault(RuntimeError):
    """Non-finite state or command; the episode must abort."""


@dataclass(frozen=True)
class Action:
    steer: float = 0.0
    throttle: float = 0.0

    def clamped(self) -> "Action":
        return Action(min(max(self.steer, -1.0), 1.0), min(max(self.throttle, -1.0), 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.steer, self.throttle])

    @classmethod
    def from_array(cls, a) -> "Action":
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    yaw: float
    v: float
    last_action: Action = Action()
    # diagnostics from the step that produced this state
    yaw_rate: float = 0.0
    lat_accel: float = 0.0
    understeer: bool = False


@dataclass(frozen=True)
class FrictionModel:
    mu: float = 0.6
    g: float = 9.81

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ValueError(f"friction coefficient must lie in (0, 1], got {self.mu}")

    @property
    def max_lat_accel(self) -> float:
        return self.mu * self.g


@dataclass
class VehicleParams:
    wheelbase: float = 2.5
    max_wheel_angle: float = 0.5
    max_accel: float = 3.0
    max_speed: float = 15.0
    drag: float = 0.05
    dt: float = 0.05
    departure_margin: float = 0.3


def step(state: VehicleState, action: Action, dt: float, friction: FrictionModel,
         params: VehicleParams | None = None) -> VehicleState:
    """Advance one step. Curvature is held constant over the step, so the
    pose is integrated exactly along an arc with trapezoidal distance."""
    p = params or VehicleParams()
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    vals = (state.x, state.y, state.yaw, state.v, action.steer, action.throttle)
    if not all(math.isfinite(v) for v in vals):
        raise VehicleFault(f"non-finite state/action: {vals}")
    steer = min(max(action.steer, -1.0), 1.0)
    throttle = min(max(action.throttle, -1.0), 1.0)

    v0 = state.v
    v1 = min(max(v0 + (throttle * p.max_accel - p.drag * v0) * dt, 0.0), p.max_speed)
    curv = math.tan(steer * p.max_wheel_angle) / p.wheelbase
    v_ref = max(v0, v1)
    a_lat = v_ref * v_ref * curv
    understeer = False
    limit = friction.max_lat_accel
    if abs(a_lat) > limit:
        curv = math.copysign(limit / (v_ref * v_ref), curv)
        understeer = True

    dist = 0.5 * (v0 + v1) * dt
    dyaw = curv * dist
    yaw = state.yaw
    if abs(dyaw) < 1e-12:
        x = state.x + dist * math.cos(yaw)
        y = state.y + dist * math.sin(yaw)
    else:
        x = state.x + (math.sin(yaw + dyaw) - math.sin(yaw)) / curv
        y = state.y + (math.cos(yaw) - math.cos(yaw + dyaw)) / curv
    return VehicleState(
        x=x,
        y=y,
        yaw=wrap_angle(yaw + dyaw),
        v=v1,
        last_action=Action(steer, throttle),
        yaw_rate=dyaw / dt,
        lat_accel=v_ref * v_ref * curv,
        understeer=understeer,
    )


class Verdict(str, enum.Enum):
    RUNNING = "running"
    LANE_DEPARTURE = "lane_departure"
    ROUTE_COMPLETE = "route_complete"
    TIMEOUT = "timeout"

    @property
    def done(self) -> bool:
        return self is not Verdict.RUNNING


def check_termination(err: LaneFrameError, state: VehicleState, route: Route, step_count: int = 0,
                      max_steps: int | None = None, margin: float = 0.3) -> Verdict:
    if abs(err.d) > route.lane_width / 2.0 + margin:
        return Verdict.LANE_DEPARTURE
    if err.s >= route.s_total:
        return Verdict.ROUTE_COMPLETE
    if max_steps is not None and step_count >= max_steps:
        return Verdict.TIMEOUT
    return Verdict.RUNNING


def start_state(route: Route, v0: float, lateral_offset: float = 0.0, heading_offset: float = 0.0,
                s0: float = 0.0) -> VehicleState:
    cx, cy, th = route.pose_at(s0)
    return VehicleState(
        x=cx - lateral_offset * math.sin(th),
        y=cy + lateral_offset * math.cos(th),
        yaw=wrap_angle(th + heading_offset),
        v=v0,
    )


def with_action(state: VehicleState, action: Action) -> VehicleState:
    return replace(state, last_action=action)
