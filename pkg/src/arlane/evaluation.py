"""Monte Carlo validation: paired routes, lateral-error metrics and comparison reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents.core import Agent, MixedPolicy
from .agents.rollout import Trajectory, run_episode
from .env import EnvConfig, LaneKeepingEnv
from .vehicle import Verdict


class MetricError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeMetrics:
    rmse: float
    nrmse_lane: float
    sigma: float
    mean: float
    completed: bool
    steps: int


def lateral_error_series(traj: Trajectory) -> np.ndarray:
    """Signed lateral error against the true centerline (the ground truth offset is zero)."""
    if traj.length == 0:
        raise MetricError("empty trajectory")
    return traj.lateral_errors()


def compute_metrics(e, lane_width: float = 3.5, completed: bool = True) -> EpisodeMetrics:
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise MetricError(f"need a series of length >= 2, got shape {e.shape}")
    rmse = float(np.sqrt(np.mean(e * e)))
    mean = float(np.mean(e))
    sigma = float(np.sqrt(np.mean((e - mean) ** 2)))
    return EpisodeMetrics(rmse, rmse / lane_width, sigma, mean, bool(completed), int(e.size))


def action_deltas(actions) -> np.ndarray:
    a = np.asarray(actions, dtype=float).reshape(-1, 2)
    if len(a) < 2:
        return np.zeros(0)
    return np.linalg.norm(np.diff(a, axis=0), axis=1)


# --------------------------------------------------------------------------
# Disturbance shared across variants
# --------------------------------------------------------------------------


@dataclass
class DisturbanceSpec:
    """Piecewise-constant random action held for a random duration."""

    hold: tuple[float, float] = (0.5, 2.0)  # s

    def sequence(self, seed: int, steps: int, dt: float) -> np.ndarray:
        rng = np.random.default_rng([seed, 6007])
        out = np.zeros((steps, 2))
        t = 0
        while t < steps:
            n = max(1, int(round(rng.uniform(*self.hold) / dt)))
            out[t:t + n] = rng.uniform(-1.0, 1.0, 2)
            t += n
        return out


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass
class EvalConfig:
    env: EnvConfig = field(default_factory=lambda: EnvConfig(graph_seed=1, friction=0.5))
    n_routes: int = 50
    seed: int = 12345
    alpha: float = 0.1
    disturbance: str = "random"  # random | adversary | none
    hold: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        if self.n_routes < 1:
            raise ConfigError("n_routes must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.disturbance not in ("random", "adversary", "none"):
            raise ConfigError(f"unknown disturbance mode {self.disturbance!r}")


def route_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i, 2029]).generate_state(1)[0])


class ConstantAgent:
    """Fixed-action baseline with the rollout interface of ``Agent``."""

    recurrent = False
    variant = "constant"

    def __init__(self, action):
        self.action = np.asarray(action, dtype=float)

    def features(self, obs, h_prev=None):
        return obs["kin"]

    def initial_hidden(self):
        return None

    def mixed_policy(self, alpha=None):
        fixed = lambda f: np.tile(self.action, (len(f), 1))
        return MixedPolicy(fixed, fixed, 0.0 if alpha is None else alpha)


@dataclass
class EpisodeRow:
    variant: str
    route: int
    route_seed: int
    metrics: EpisodeMetrics
    verdict: str
    dmax: float
    smooth_p99: float
    errors: np.ndarray = field(repr=False, default=None)
    deltas: np.ndarray = field(repr=False, default=None)


def evaluate_agent(name: str, agent, config: EvalConfig) -> list[EpisodeRow]:
    env_cfg = config.env
    if getattr(agent, "visual", False) and not env_cfg.render_images:
        env_cfg = EnvConfig(**{**vars(env_cfg), "render_images": True})
    env = LaneKeepingEnv(env_cfg)
    dist = DisturbanceSpec(config.hold)
    rows = []
    for i in range(config.n_routes):
        rs = route_seed(config.seed, i)
        disturbance = None
        alpha = config.alpha
        if config.disturbance == "random":
            seq = dist.sequence(rs, env_cfg.max_steps, env_cfg.vehicle.dt)
            disturbance = lambda t, seq=seq: seq[t]
        elif config.disturbance == "none":
            alpha = 0.0
        traj = run_episode(agent, env, rs, alpha=alpha, disturbance=disturbance, training=False)
        e = lateral_error_series(traj)
        if e.size < 2:
            # a one-step episode still yields a defined error level
            e = np.repeat(e, 2)
        completed = traj.verdict != Verdict.LANE_DEPARTURE and traj.fault is None
        m = compute_metrics(e, env.route.lane_width, completed)
        d = action_deltas(traj.action_array())
        p99 = float(np.percentile(d, 99)) if d.size else 0.0
        rows.append(EpisodeRow(name, i, rs, m, traj.verdict.value, float(np.max(np.abs(e))), p99, e, d))
    return rows


@dataclass
class ValidationReport:
    rows: list[EpisodeRow]
    config: EvalConfig
    lane_width: float

    @property
    def variants(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def of(self, variant: str) -> list[EpisodeRow]:
        return [r for r in self.rows if r.variant == variant]

    def rmse(self, variant: str) -> np.ndarray:
        return np.array([r.metrics.rmse for r in self.of(variant)])

    def aggregate(self, variant: str) -> dict:
        rows = self.of(variant)
        n = len(rows)
        rmse = np.array([r.metrics.rmse for r in rows])
        sig = np.array([r.metrics.sigma for r in rows])
        pooled = np.concatenate([r.errors for r in rows])
        deltas = np.concatenate([r.deltas for r in rows])
        ci = None if n < 2 else float(1.96 * rmse.std(ddof=1) / math.sqrt(n))
        mean_rmse = float(rmse.mean())
        return {
            "n_routes": n,
            "rmse_mean": mean_rmse,
            "rmse_ci95": ci,
            "nrmse_lane_mean": mean_rmse / self.lane_width,
            "sigma_episode_mean": float(sig.mean()),
            "sigma_pooled": float(np.sqrt(np.mean((pooled - pooled.mean()) ** 2))),
            "completion_rate": float(np.mean([r.metrics.completed for r in rows])),
            "smoothness_p99": float(np.percentile(deltas, 99)) if deltas.size else 0.0,
        }

    def paired(self, a: str, b: str) -> dict:
        """Mean and standard error of RMSE(a) - RMSE(b) over shared routes."""
        da = {r.route_seed: r.metrics.rmse for r in self.of(a)}
        db = {r.route_seed: r.metrics.rmse for r in self.of(b)}
        keys = [k for k in da if k in db]
        diff = np.array([da[k] - db[k] for k in keys])
        se = None if len(diff) < 2 else float(diff.std(ddof=1) / math.sqrt(len(diff)))
        return {"a": a, "b": b, "mean_diff": float(diff.mean()), "se": se, "n": len(diff)}

    # -- emitters ---------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "route", "route_seed", "rmse", "nrmse", "sigma", "completed", "steps", "verdict",
                    "max_abs_d", "smoothness_p99"])
        for r in self.rows:
            m = r.metrics
            w.writerow([r.variant, r.route, r.route_seed, repr(m.rmse), repr(m.nrmse_lane), repr(m.sigma),
                        int(m.completed), m.steps, r.verdict, repr(r.dmax), repr(r.smooth_p99)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        names = self.variants
        return {
            "friction": self.config.env.friction,
            "alpha": self.config.alpha,
            "disturbance": self.config.disturbance,
            "n_routes": self.config.n_routes,
            "seed": self.config.seed,
            "graph_seed": self.config.env.graph_seed,
            "occlusion_enabled": self.config.env.occlusion_enabled,
            "lane_width": self.lane_width,
            "route_seeds": [r.route_seed for r in self.of(names[0])] if names else [],
            "variants": {v: self.aggregate(v) for v in names},
            "paired": [self.paired(a, b) for i, a in enumerate(names) for b in names[i + 1:]],
        }

    def to_text(self) -> str:
        lines = [f"Lane tracking accuracy ({self.config.n_routes} routes, friction {self.config.env.friction})",
                 f"{'Method':<10} {'RMSE (m)':>10} {'nRMSE':>8} {'Std. Dev. (ep)':>15} {'Std. Dev. (pooled)':>19}"
                 f" {'Complete':>9} {'p99 |da|':>9}"]
        for v in self.variants:
            a = self.aggregate(v)
            lines.append(f"{v:<10} {a['rmse_mean']:>10.4f} {a['nrmse_lane_mean']:>8.4f} {a['sigma_episode_mean']:>15.4f}"
                         f" {a['sigma_pooled']:>19.4f} {a['completion_rate']:>9.2f} {a['smoothness_p99']:>9.4f}")
        return "\n".join(lines) + "\n"

    def write(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.to_csv())
        (out / "report.json").write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1))
        (out / "report.txt").write_text(self.to_text())


def validate(agents: dict, config: EvalConfig | None = None) -> ValidationReport:
    """Evaluate each named agent on the same seeded routes, occlusions and disturbances."""
    config = config or EvalConfig()
    rows = []
    for name, agent in agents.items():
        rows.extend(evaluate_agent(name, agent, config))
    return ValidationReport(rows, config, config.env.graph.lane_width)


def load_agents(paths: dict[str, str | Path]) -> dict[str, Agent]:
    out = {}
    for name, p in paths.items():
        p = Path(p)
        if p.is_dir():
            p = p / "agent.ckpt"
        if not p.is_file():
            raise ConfigError(f"checkpoint not found: {p}")
        out[name] = Agent.load(p)
    return out
