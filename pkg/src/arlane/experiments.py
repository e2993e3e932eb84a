"""End-to-end experiments shared by the scripts and the acceptance suite."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents.core import VARIANTS
from .config import RunConfig
from .evaluation import ValidationReport, validate
from .perception import (
    DatasetSpec, RegressorConfig, build_dataset, c0_sign_accuracy, normalized_mse, rerender, split_dataset,
    train_regressor,
)
from .reward import max_step_reward
from .snow import NO_OCCLUSION, OcclusionConfig
from .training import Trainer

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Smoke learning
# --------------------------------------------------------------------------


@dataclass
class SmokeResult:
    threshold: float
    best_moving_avg: float
    first_episode_reached: int | None  # None if never reached
    episodes: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.first_episode_reached is not None


def smoke_threshold(cfg: RunConfig, fraction: float = 0.8) -> float:
    return fraction * max_step_reward(cfg.env.reward) * cfg.env.max_steps


def run_smoke(cfg: RunConfig, out_dir: str | Path | None = None, variant: str = "ddpg",
              fraction: float = 0.8) -> SmokeResult:
    """Train one variant and record when the moving-average return first reaches the threshold."""
    tc = cfg.train_config(variant)
    thr = smoke_threshold(cfg, fraction)
    t0 = time.perf_counter()
    result = Trainer(tc).train(out_dir)
    secs = time.perf_counter() - t0
    ma = result.moving_avg
    hit = np.nonzero(ma >= thr)[0]
    return SmokeResult(thr, float(ma.max()) if ma.size else float("nan"),
                       int(hit[0]) if hit.size else None, len(ma), secs)


# --------------------------------------------------------------------------
# Robustness ordering
# --------------------------------------------------------------------------


@dataclass
class OrderingCheck:
    lhs: str
    rhs: str
    relation: str  # "<" or "<="
    mean_diff: float  # mean RMSE(lhs) - RMSE(rhs) over paired routes
    se: float

    @property
    def passed(self) -> bool:
        if self.relation == "<":
            return self.mean_diff < 0.0 and -self.mean_diff > self.se
        # ties allowed: lhs must not be worse by more than one standard error
        return self.mean_diff <= self.se

    def describe(self) -> str:
        return (f"RMSE({self.lhs}) {self.relation} RMSE({self.rhs}): diff {self.mean_diff:+.4f} m, "
                f"se {self.se:.4f}")


ORDERING = (("ar-ddpg", "ddpg", "<"), ("ar-rdpg", "ddpg", "<"), ("ar-cadpg", "ar-rdpg", "<="))


def ordering_checks(report: ValidationReport) -> list[OrderingCheck]:
    out = []
    for lhs, rhs, rel in ORDERING:
        if lhs in report.variants and rhs in report.variants:
            p = report.paired(lhs, rhs)
            out.append(OrderingCheck(lhs, rhs, rel, p["mean_diff"], p["se"] if p["se"] is not None else 0.0))
    return out


def full_ordering(report: ValidationReport) -> str:
    """Variants sorted by mean RMSE, with ties (gap within one paired SE) shown as '~'."""
    names = sorted(report.variants, key=lambda v: report.aggregate(v)["rmse_mean"])
    parts = [names[0]] if names else []
    for a, b in zip(names, names[1:]):
        p = report.paired(b, a)
        tie = p["se"] is not None and abs(p["mean_diff"]) <= p["se"]
        parts += ["~" if tie else "<", b]
    return " ".join(parts)


@dataclass
class RobustnessResult:
    report: ValidationReport
    checks: list[OrderingCheck]
    train_seconds: dict[str, float] = field(default_factory=dict)
    eval_seconds: float = 0.0

    @property
    def seconds(self) -> float:
        return sum(self.train_seconds.values()) + self.eval_seconds

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)


def run_robustness(cfg: RunConfig, out_dir: str | Path | None = None, variants=VARIANTS,
                   seed: int | None = None) -> RobustnessResult:
    """Train every variant under the training regime, then validate them on shared routes."""
    out = Path(out_dir) if out_dir is not None else None
    agents, secs = {}, {}
    for v in variants:
        tc = cfg.train_config(v, seed)
        t0 = time.perf_counter()
        res = Trainer(tc).train(out / v if out is not None else None)
        secs[v] = time.perf_counter() - t0
        log.info("trained %s in %.0f s, final moving average %.1f", v, secs[v], res.moving_avg[-1])
        agents[v] = res.agent
    t0 = time.perf_counter()
    report = validate(agents, cfg.eval_config())
    eval_secs = time.perf_counter() - t0
    if out is not None:
        report.write(out / "eval")
    return RobustnessResult(report, ordering_checks(report), secs, eval_secs)


# --------------------------------------------------------------------------
# Perception sanity
# --------------------------------------------------------------------------


@dataclass
class PerceptionResult:
    overfit_mse: float
    accuracy_clean: float
    accuracy_one_dropped: float
    n_train: int
    n_val: int
    seconds: float


def one_marker_dropped(i: int) -> OcclusionConfig:
    """Alternate the dropped side across frames; no snow."""
    return OcclusionConfig(frozenset({"left" if i % 2 else "right"}), (), 0.0, i)


def run_perception(cfg: RunConfig, overfit_epochs: int = 300) -> PerceptionResult:
    d = cfg.dataset
    spec = DatasetSpec(cfg.env.graph, cfg.env.view, cfg.env.occlusion, d.n_graphs, d.max_offset, d.max_heading)
    t0 = time.perf_counter()
    frames = build_dataset(d.n_sunny, d.n_snowy, d.seed, spec)
    one, _ = train_regressor(frames[:1], epochs=overfit_epochs, lr=d.lr, batch_size=1, seed=d.seed,
                             config=RegressorConfig(image_size=cfg.env.view.height))
    overfit = normalized_mse(one, frames[:1])
    train, val = split_dataset(frames, 0.2, d.seed)
    model, _ = train_regressor(train, val, epochs=d.epochs, lr=d.lr, batch_size=d.batch_size, seed=d.seed,
                               config=RegressorConfig(image_size=cfg.env.view.height), mirror=d.mirror)
    clean = rerender(val, lambda i: NO_OCCLUSION, cfg.env.view)
    dropped = rerender(val, one_marker_dropped, cfg.env.view)
    return PerceptionResult(overfit, c0_sign_accuracy(model, clean), c0_sign_accuracy(model, dropped),
                            len(train), len(val), time.perf_counter() - t0)
