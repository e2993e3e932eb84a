"""Episodic training loop, return curves, checkpoints and resume."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import pickle
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents.buffers import ReplayBuffer, SequenceReplayBuffer
from .agents.core import Agent, AgentConfig, AgentFault, ExplorationNoise
from .agents.rollout import run_episode
from .env import EnvConfig, LaneKeepingEnv

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    episodes: int = 500
    seed: int = 0
    ma_window: int = 20
    updates_per_episode: int = 0  # 0: episode steps / batch size
    update_ratio: float = 1.0  # multiplies the automatic update count
    warmup_transitions: int = 256
    noise_decay_episodes: int = 0  # 0: decay over all episodes
    checkpoint_every: int = 50

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.ma_window < 1:
            raise ValueError("ma_window must be >= 1")
        if self.update_ratio <= 0:
            raise ValueError("update_ratio must be positive")

    @property
    def steps(self) -> int:
        return self.env.max_steps

    def n_updates(self, episode_steps: int) -> int:
        if self.updates_per_episode > 0:
            return self.updates_per_episode
        return int(math.ceil(self.update_ratio * episode_steps / self.agent.batch_size))


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over the last ``min(window, i + 1)`` values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    return np.array([_running_mean(x[max(0, i + 1 - window): i + 1]) for i in range(x.size)])


def _running_mean(w: np.ndarray) -> float:
    # incremental form is exact on constant windows, unlike sum / n
    m = 0.0
    for k, v in enumerate(w, 1):
        m += (v - m) / k
    return float(m)


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, episode, 1009]).generate_state(1)[0])


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    moving_avg: float
    steps: int
    verdict: str
    critic_loss: float


@dataclass
class TrainResult:
    agent: Agent
    curve: list[EpisodeLog]
    status: str  # "ok" or "nan_abort"
    message: str = ""

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.ret for e in self.curve])

    @property
    def moving_avg(self) -> np.ndarray:
        return np.array([e.moving_avg for e in self.curve])


def _float_repr(x: float) -> str:
    return repr(float(x))


def curve_csv(curve: list[EpisodeLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "return", "moving_avg", "steps", "verdict", "critic_loss"])
    for e in curve:
        w.writerow([e.episode, _float_repr(e.ret), _float_repr(e.moving_avg), e.steps, e.verdict,
                    _float_repr(e.critic_loss)])
    return buf.getvalue()


def config_dict(cfg) -> dict:
    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple, frozenset, set)):
            return [conv(x) for x in (sorted(v) if isinstance(v, (set, frozenset)) else v)]
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        return v
    return conv(asdict(cfg))


def config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(config_dict(cfg), sort_keys=True).encode()).hexdigest()


class Trainer:
    """Holds all mutable training state so a run can be checkpointed and resumed bit-exactly."""

    def __init__(self, config: TrainConfig):
        self.config = config
        c = config
        self.agent = Agent(c.agent, seed=c.seed)
        self.env = LaneKeepingEnv(c.env)
        if self.agent.recurrent:
            self.buffer = SequenceReplayBuffer(c.agent.buffer_capacity, c.agent.bptt, seed=c.seed)
        else:
            self.buffer = ReplayBuffer(c.agent.buffer_capacity, seed=c.seed)
        decay = c.noise_decay_episodes or c.episodes
        self.noise = ExplorationNoise(c.agent.noise_initial, c.agent.noise_final, decay)
        self.noise_rng = np.random.default_rng([c.seed, 777])
        self.curve: list[EpisodeLog] = []
        self.episode = 0

    # -- loop -------------------------------------------------------------

    def run_one(self) -> EpisodeLog:
        c = self.config
        ep = self.episode
        traj = run_episode(self.agent, self.env, episode_seed(c.seed, ep), noise_rng=self.noise_rng,
                           noise_std=self.noise.std(ep), buffer=self.buffer, training=True)
        if not math.isfinite(traj.ret):
            raise AgentFault(f"non-finite return in episode {ep}")
        loss = float("nan")
        if len(self.buffer) >= max(c.warmup_transitions, 1) and traj.length > 0:
            losses = []
            for _ in range(c.n_updates(traj.length)):
                out = self.agent.update(self.buffer.sample(c.agent.batch_size))
                losses.append(out["critic_loss"])
            loss = float(np.mean(losses)) if losses else float("nan")
        rets = [e.ret for e in self.curve] + [traj.ret]
        ma = float(moving_average(rets[-c.ma_window:], c.ma_window)[-1])
        rec = EpisodeLog(ep, float(traj.ret), ma, traj.length, traj.verdict.value, loss)
        self.curve.append(rec)
        self.episode += 1
        return rec

    def train(self, out_dir: str | Path | None = None, on_episode=None) -> TrainResult:
        c = self.config
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            if not (out / "agent.ckpt").exists():
                self.save(out)
        status, message = "ok", ""
        while self.episode < c.episodes:
            try:
                rec = self.run_one()
            except AgentFault as exc:
                status, message = "nan_abort", str(exc)
                log.error("training aborted: %s", exc)
                break
            if on_episode is not None:
                on_episode(rec)
            if out is not None and (self.episode % c.checkpoint_every == 0 or self.episode == c.episodes):
                self.save(out)
        if out is not None:
            # on abort the last periodic checkpoint is kept; only the curve and manifest advance
            (out / "curve.csv").write_text(curve_csv(self.curve))
            self.write_manifest(out, status, message)
        return TrainResult(self.agent, list(self.curve), status, message)

    # -- persistence ------------------------------------------------------

    def save(self, out: Path) -> None:
        out = Path(out)
        self.agent.save(out / "agent.ckpt")
        (out / "curve.csv").write_text(curve_csv(self.curve))
        with open(out / "trainer_state.pkl", "wb") as f:
            pickle.dump(self, f, protocol=4)

    @staticmethod
    def resume(out: str | Path) -> "Trainer":
        with open(Path(out) / "trainer_state.pkl", "rb") as f:
            return pickle.load(f)

    def write_manifest(self, out: Path, status: str, message: str = "") -> None:
        man = {
            "status": status,
            "message": message,
            "variant": self.agent.variant,
            "seed": self.config.seed,
            "episodes_completed": self.episode,
            "n_updates": self.agent.n_updates,
            "config": config_dict(self.config),
            "config_hash": config_hash(self.config),
            "versions": {"python": platform.python_version(), "numpy": np.__version__},
        }
        (out / "manifest.json").write_text(json.dumps(man, sort_keys=True, indent=1))


def train(config: TrainConfig, out_dir: str | Path | None = None, on_episode=None) -> TrainResult:
    return Trainer(config).train(out_dir, on_episode)
