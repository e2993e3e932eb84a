"""Episode rollouts for all variants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..env import LaneKeepingEnv, StepRecord
from ..track import OutOfCorridorError
from ..vehicle import VehicleFault, Verdict
from .buffers import ReplayBuffer, SequenceReplayBuffer
from .core import Agent, AgentFault, act_mixed

# Terminal verdicts cut the bootstrap; a timeout does not.
TERMINAL = (Verdict.LANE_DEPARTURE, Verdict.ROUTE_COMPLETE)


@dataclass
class Trajectory:
    ret: float = 0.0
    records: list[StepRecord] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)  # executed (mixed) actions
    agent_actions: list[np.ndarray] = field(default_factory=list)
    verdict: Verdict = Verdict.RUNNING
    fault: str | None = None

    @property
    def length(self) -> int:
        return len(self.records)

    def action_array(self) -> np.ndarray:
        return np.array(self.actions).reshape(-1, 2)

    def lateral_errors(self) -> np.ndarray:
        return np.array([r.d for r in self.records])


def run_episode(agent: Agent, env: LaneKeepingEnv, episode_seed: int, *,
                noise_rng: np.random.Generator | None = None, noise_std: float = 0.0,
                buffer: ReplayBuffer | SequenceReplayBuffer | None = None,
                training: bool = False, alpha: float | None = None,
                disturbance: Callable[[int], np.ndarray] | None = None,
                max_steps: int | None = None, reset_kwargs: dict | None = None) -> Trajectory:
    """Play one episode, optionally storing every transition in ``buffer``.

    ``disturbance(t)`` replaces the adversary network's action at step ``t``;
    ``alpha`` overrides the agent's mixing factor.
    """
    traj = Trajectory()
    T = env.config.max_steps if max_steps is None else max_steps
    if T <= 0:
        return traj
    policy = agent.mixed_policy(alpha)
    obs = env.reset(episode_seed, **(reset_kwargs or {}))
    h_prev = agent.initial_hidden()
    if isinstance(buffer, SequenceReplayBuffer):
        buffer.new_episode()
    for t in range(T):
        feats = agent.features(obs, h_prev)
        noise = None
        if training and noise_std > 0.0:
            noise = noise_std * noise_rng.standard_normal(2)
        adv = disturbance(t) if disturbance is not None else None
        a, a_mu, _ = act_mixed(policy, feats, noise, training, adversary_action=adv)
        try:
            next_obs, r, verdict, rec = env.step(a)
        except (VehicleFault, OutOfCorridorError, AgentFault) as exc:
            traj.fault = f"{type(exc).__name__}: {exc}"
            break
        done = 1.0 if verdict in TERMINAL else 0.0
        if buffer is not None:
            if agent.recurrent:
                buffer.store(obs["kin"], h_prev, a, r, next_obs["kin"], done)
            else:
                buffer.store(obs["kin"], a, r, next_obs["kin"], done, obs.get("img"), next_obs.get("img"))
        traj.ret += r
        traj.records.append(rec)
        traj.actions.append(a)
        traj.agent_actions.append(a_mu)
        traj.verdict = verdict
        obs = next_obs
        if agent.recurrent:
            h_prev = feats
        if verdict.done:
            break
    if traj.verdict == Verdict.RUNNING and traj.fault is None:
        traj.verdict = Verdict.TIMEOUT
    return traj
