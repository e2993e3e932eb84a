"""Episode environment: route sampling, vehicle stepping, reward and termination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .reward import RewardWeights, step_reward
from .snow import NO_OCCLUSION, OcclusionConfig, OcclusionSpec, ViewConfig, render, sample_occlusion
from .track import GraphSpec, Route, RouteGraph, generate_graph, lane_frame, route_pool, sample_route, LaneFrameError
from .vehicle import (
    Action,
    FrictionModel,
    VehicleParams,
    VehicleState,
    Verdict,
    check_termination,
    start_state,
    step,
)


@dataclass
class EnvConfig:
    graph_seed: int = 0
    graph: GraphSpec = field(default_factory=GraphSpec)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    view: ViewConfig = field(default_factory=ViewConfig)
    occlusion: OcclusionSpec = field(default_factory=OcclusionSpec)
    friction: float = 0.6
    max_steps: int = 400
    initial_speed: float = 8.0
    initial_offset: float = 0.5  # max |d| at reset, m
    initial_heading: float = 0.05  # max |phi| at reset, rad
    route_min_edges: int = 3
    route_min_length: float = 320.0
    occlusion_enabled: bool = True
    render_images: bool = False
    d_scale: float = 1.75
    phi_scale: float = 0.5
    projection_window: float = 10.0
    lateral_source: str = "truth"  # truth | perception (d = -c0 from the coefficient regressor)
    perception_model: str = ""  # regressor checkpoint used when lateral_source = perception

    def __post_init__(self):
        if self.lateral_source not in ("truth", "perception"):
            raise ValueError(f"lateral_source must be 'truth' or 'perception', got {self.lateral_source!r}")


@dataclass
class StepRecord:
    d: float
    phi: float
    v: float
    s: float
    x: float
    y: float
    reward: float
    verdict: Verdict
    understeer: bool


class LaneKeepingEnv:
    """One vehicle on one route. Observations are dicts with ``kin`` (3,) and optionally ``img``."""

    def __init__(self, config: EnvConfig, graph: RouteGraph | None = None,
                 d_estimator: Callable[[np.ndarray], float] | None = None):
        self.config = config
        self.graph = graph if graph is not None else generate_graph(config.graph_seed, config.graph)
        self.friction = FrictionModel(config.friction)
        if d_estimator is None and config.lateral_source == "perception":
            from .perception import LateralEstimator, load_model

            if not config.perception_model:
                raise ValueError("lateral_source = perception needs a perception_model checkpoint")
            d_estimator = LateralEstimator(load_model(config.perception_model))
        self.d_estimator = d_estimator
        self.route: Route | None = None
        self.state: VehicleState | None = None
        self.err: LaneFrameError | None = None
        self.occlusion: OcclusionConfig = NO_OCCLUSION
        self.t = 0
        self._pool = None

    @property
    def route_pool(self) -> list[Route]:
        if self._pool is None:
            self._pool = route_pool(self.graph, self.config.route_min_edges, self.config.route_min_length)
        return self._pool

    # -- episode control -------------------------------------------------

    def reset(self, episode_seed: int, route: Route | None = None,
              occlusion: OcclusionConfig | None = None) -> dict:
        cfg = self.config
        rng = np.random.default_rng([episode_seed, 55441])
        self.route = route if route is not None else sample_route(
            self.graph, rng, pool=self.route_pool)
        if occlusion is not None:
            self.occlusion = occlusion
        elif cfg.occlusion_enabled:
            spec = cfg.occlusion
            spec = OcclusionSpec(**{**vars(spec), "route_length": self.route.s_total})
            self.occlusion = sample_occlusion(episode_seed, spec)
        else:
            self.occlusion = NO_OCCLUSION
        d0 = rng.uniform(-cfg.initial_offset, cfg.initial_offset)
        phi0 = rng.uniform(-cfg.initial_heading, cfg.initial_heading)
        self.state = start_state(self.route, cfg.initial_speed, d0, phi0)
        self.t = 0
        self.err = lane_frame(self.state, self.route, None)
        return self.observe()

    def observe(self) -> dict:
        cfg = self.config
        img = None
        if cfg.render_images or self.d_estimator is not None:
            img = render(self.state, self.route, self.occlusion, frame=self.t, s_hint=self.err.s,
                         view=cfg.view)
        d = self.err.d if self.d_estimator is None else self.d_estimator(img)
        obs = {"kin": np.array([d / cfg.d_scale, self.err.phi / cfg.phi_scale,
                                self.state.v / cfg.vehicle.max_speed])}
        if cfg.render_images:
            obs["img"] = img
        return obs

    def step(self, action) -> tuple[dict, float, Verdict, StepRecord]:
        cfg = self.config
        act = Action.from_array(action).clamped()
        prev = self.state.last_action
        self.state = step(self.state, act, cfg.vehicle.dt, self.friction, cfg.vehicle)
        self.t += 1
        self.err = lane_frame(self.state, self.route, self.err.s, cfg.projection_window)
        verdict = check_termination(self.err, self.state, self.route, self.t, cfg.max_steps,
                                    cfg.vehicle.departure_margin)
        r = step_reward(self.err, self.state, act, prev, verdict, cfg.reward, self.route.lane_width,
                        cfg.vehicle.max_speed)
        rec = StepRecord(self.err.d, self.err.phi, self.state.v, self.err.s, self.state.x, self.state.y,
                         r, verdict, self.state.understeer)
        return self.observe(), r, verdict, rec
