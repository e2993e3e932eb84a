"""Run configuration: one INI file covering every module's settings.

Sections and keys mirror the dataclass fields they populate; any key not
listed here is rejected. Example::

    [agent]
    variant = ar-rdpg
    lr_critic = 1e-3

    [train]
    episodes = 300

    [eval]
    friction = 0.5
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agents.core import AgentConfig
from .env import EnvConfig
from .evaluation import ConfigError, EvalConfig
from .reward import RewardWeights
from .snow import OcclusionSpec, ViewConfig
from .track import GraphSpec
from .training import TrainConfig
from .vehicle import VehicleParams


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {type(default).__name__}") from exc


@dataclass
class TrainSection:
    episodes: int = 500
    seed: int = 0
    ma_window: int = 20
    updates_per_episode: int = 0
    update_ratio: float = 1.0
    warmup_transitions: int = 256
    noise_decay_episodes: int = 0
    checkpoint_every: int = 50


@dataclass
class EvalSection:
    n_routes: int = 50
    seed: int = 12345
    alpha: float = 0.1
    friction: float = 0.5
    graph_seed: int = 1
    disturbance: str = "random"
    hold: tuple[float, float] = (0.5, 2.0)
    occlusion_enabled: bool = True


@dataclass
class DatasetSection:
    n_sunny: int = 125
    n_snowy: int = 125
    seed: int = 0
    n_graphs: int = 4
    max_offset: float = 1.2
    max_heading: float = 0.15
    epochs: int = 40
    lr: float = 1e-3
    batch_size: int = 32
    mirror: bool = True


# section name -> dataclass type; env-level scalars live in [env]
SECTIONS = {
    "agent": AgentConfig,
    "env": EnvConfig,
    "graph": GraphSpec,
    "vehicle": VehicleParams,
    "reward": RewardWeights,
    "view": ViewConfig,
    "occlusion": OcclusionSpec,
    "train": TrainSection,
    "eval": EvalSection,
    "dataset": DatasetSection,
}
_NESTED_ENV = ("graph", "vehicle", "reward", "view", "occlusion")


@dataclass
class RunConfig:
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    source: str | None = None
    sha256: str | None = None

    def train_config(self, variant: str | None = None, seed: int | None = None,
                     friction: float | None = None, alpha: float | None = None) -> TrainConfig:
        agent = self.agent
        if variant is not None or alpha is not None:
            try:
                agent = replace(agent, **({"variant": variant} if variant is not None else {}),
                                **({"alpha": alpha} if alpha is not None else {}))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        env = replace(self.env, render_images=self.env.render_images or agent.variant == "ar-cadpg")
        if friction is not None:
            env = replace(env, friction=friction)
        t = self.train
        return TrainConfig(agent=agent, env=env, episodes=t.episodes, seed=t.seed if seed is None else seed,
                           ma_window=t.ma_window, updates_per_episode=t.updates_per_episode,
                           update_ratio=t.update_ratio, warmup_transitions=t.warmup_transitions,
                           noise_decay_episodes=t.noise_decay_episodes, checkpoint_every=t.checkpoint_every)

    def eval_config(self, n_routes: int | None = None, friction: float | None = None,
                    alpha: float | None = None, seed: int | None = None) -> EvalConfig:
        e = self.eval
        env = replace(self.env, friction=e.friction if friction is None else friction, graph_seed=e.graph_seed,
                      occlusion_enabled=e.occlusion_enabled)
        try:
            return EvalConfig(env=env, n_routes=e.n_routes if n_routes is None else n_routes,
                              seed=e.seed if seed is None else seed, alpha=e.alpha if alpha is None else alpha,
                              disturbance=e.disturbance, hold=tuple(e.hold))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _apply(obj, section: str, items: dict[str, str]):
    known = {f.name: f for f in fields(obj) if f.name not in _NESTED_ENV}
    updates = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]; valid keys: {', '.join(sorted(known))}")
        updates[key] = _parse(raw, getattr(obj, key), f"[{section}] {key}")
    try:
        return replace(obj, **updates)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        cp.read_string(text, source=source or "<string>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]; valid sections: {', '.join(SECTIONS)}")
    sec = {name: dict(cp.items(name)) if cp.has_section(name) else {} for name in SECTIONS}
    env = EnvConfig()
    nested = {n: _apply(getattr(env, n), n, sec[n]) for n in _NESTED_ENV}
    env = _apply(replace(env, **nested), "env", sec["env"])
    return RunConfig(
        agent=_apply(AgentConfig(), "agent", sec["agent"]),
        env=env,
        train=_apply(TrainSection(), "train", sec["train"]),
        eval=_apply(EvalSection(), "eval", sec["eval"]),
        dataset=_apply(DatasetSection(), "dataset", sec["dataset"]),
        source=source,
        sha256=hashlib.sha256(text.encode()).hexdigest(),
    )


def load_config(path: str | Path | None) -> RunConfig:
    """Parse an INI file; ``None`` gives all defaults."""
    if path is None:
        return parse_config("", None)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


def dump_config(cfg: RunConfig) -> str:
    """INI text that round-trips through ``parse_config``."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    objs = {"agent": cfg.agent, "env": cfg.env, "train": cfg.train, "eval": cfg.eval, "dataset": cfg.dataset}
    objs.update({n: getattr(cfg.env, n) for n in _NESTED_ENV})
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for f in fields(objs[name]):
            if name == "env" and f.name in _NESTED_ENV:
                continue
            lines.append(f"{f.name} = {fmt(getattr(objs[name], f.name))}")
        lines.append("")
    return "\n".join(lines)
