"""Per-step lane-keeping reward."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .track import LaneFrameError
from .vehicle import Action, VehicleState, Verdict


@dataclass
class RewardWeights:
    w_d: float = 1.0
    w_phi: float = 0.5
    w_v: float = 0.5
    lambda1: float = 0.1  # action smoothness
    lambda2: float = 0.05  # throttle effort
    crash_penalty: float = 10.0

    def __post_init__(self):
        for name, val in vars(self).items():
            if val < 0:
                raise ValueError(f"reward weight {name} must be >= 0, got {val}")

    def bound(self) -> float:
        """Upper bound on |r| for actions in the [-1, 1]^2 box."""
        return self.w_v + self.w_d + self.w_phi * math.pi**2 + 8.0 * self.lambda1 + self.lambda2 + self.crash_penalty


def step_reward(err: LaneFrameError, state: VehicleState, action: Action, prev_action: Action,
                verdict: Verdict, weights: RewardWeights, lane_width: float = 3.5,
                v_max: float = 15.0) -> float:
    """Progress bonus minus quadratic tracking, smoothness and throttle penalties.

    The lateral term saturates once the vehicle is past the lane edge so a
    departing step is dominated by the crash penalty.
    """
    w = weights
    d_norm = min(abs(err.d) / (lane_width / 2.0), 1.0)
    da_s = action.steer - prev_action.steer
    da_t = action.throttle - prev_action.throttle
    r = (
        w.w_v * (state.v / v_max) * math.cos(err.phi)
        - w.w_d * d_norm**2
        - w.w_phi * err.phi**2
        - w.lambda1 * (da_s * da_s + da_t * da_t)
        - w.lambda2 * action.throttle**2
    )
    if verdict is Verdict.LANE_DEPARTURE:
        r -= w.crash_penalty
    return r


def max_step_reward(weights: RewardWeights) -> float:
    """Analytic per-step maximum: on the centerline, aligned, at top speed, no action change, zero throttle."""
    return weights.w_v
