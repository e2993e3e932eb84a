"""Action-robust deterministic policy gradient agents.

One ``Agent`` class covers the four variants; they differ in the feature
trunk and in whether an adversary is mixed into executed actions:

=========  ===============  =========
variant    trunk            adversary
=========  ===============  =========
ddpg       identity         no (alpha forced to 0)
ar-ddpg    identity         yes
ar-rdpg    recurrent        yes
ar-cadpg   conv+attention   yes
=========  ===============  =========
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..nn import Adam, Module, mlp, soft_update
from ..nn import checkpoint as ckpt
from .networks import IdentityTrunk, RecurrentTrunk, VisualTrunk

VARIANTS = ("ddpg", "ar-ddpg", "ar-rdpg", "ar-cadpg")


class AgentFault(RuntimeError):
    """Non-finite network output, loss or gradient."""


@dataclass
class AgentConfig:
    variant: str = "ar-ddpg"
    alpha: float = 0.1
    gamma: float = 0.95
    tau: float = 0.01  # 0 freezes the target networks
    lr_actor: float = 2e-5
    lr_adversary: float = 2e-5
    lr_critic: float = 2e-4
    hidden: tuple[int, ...] = (64, 64)
    rnn_hidden: int = 32
    bptt: int = 8
    conv_channels: tuple[int, int] = (8, 16)
    visual_embed: int = 64
    kin_embed: int = 16
    fusion_dim: int = 64
    channel_attention: bool = False
    image_size: int = 64
    image_channels: int = 1
    batch_size: int = 64
    buffer_capacity: int = 800_000
    noise_initial: float = 0.2
    noise_final: float = 0.02
    grad_clip: float = 0.0  # global-norm clip on the critic; 0 disables

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        for name in ("lr_actor", "lr_adversary", "lr_critic"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# --------------------------------------------------------------------------
# Pure pieces
# --------------------------------------------------------------------------


def mix_actions(a_mu, a_adv, alpha: float) -> np.ndarray:
    """Convex combination ``(1 - alpha) a_mu + alpha a_adv`` before clamping."""
    return (1.0 - alpha) * np.asarray(a_mu, dtype=float) + alpha * np.asarray(a_adv, dtype=float)


def clamp_action(a) -> np.ndarray:
    return np.clip(a, -1.0, 1.0)


def critic_target(r, done, gamma: float, q_next):
    """``y = r + gamma (1 - done) Q'(s', mu'(s'))``."""
    return r + gamma * (1.0 - done) * q_next


@dataclass
class ExplorationNoise:
    """Gaussian action noise with a linear std decay over episodes."""

    initial: float = 0.2
    final: float = 0.02
    decay_episodes: int = 500

    def std(self, episode: int) -> float:
        if self.decay_episodes <= 0:
            return self.final
        frac = min(max(episode / self.decay_episodes, 0.0), 1.0)
        return max(0.0, self.initial + (self.final - self.initial) * frac)

    def sample(self, rng: np.random.Generator, episode: int, dim: int = 2) -> np.ndarray:
        return self.std(episode) * rng.standard_normal(dim)


@dataclass
class MixedPolicy:
    """Actor, adversary and mixing factor; the callables map features to actions."""

    actor: object
    adversary: object
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def act_mixed(policy: MixedPolicy, features: np.ndarray, noise: np.ndarray | None = None,
              training: bool = False, adversary_action: np.ndarray | None = None
              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(a_tilde, a_mu, a_adv)``. Noise is added to the agent action
    before mixing, and only in training mode. ``adversary_action`` replaces
    the adversary network's output (used for shared evaluation disturbances)."""
    f = np.atleast_2d(features)
    a_mu = np.asarray(policy.actor(f))[0]
    if adversary_action is None:
        a_adv = np.asarray(policy.adversary(f))[0]
    else:
        a_adv = np.asarray(adversary_action, dtype=float)
    if not (np.all(np.isfinite(a_mu)) and np.all(np.isfinite(a_adv))):
        raise AgentFault(f"non-finite policy output: mu={a_mu}, adv={a_adv}")
    if training and noise is not None:
        a_mu = a_mu + noise
    return clamp_action(mix_actions(a_mu, a_adv, policy.alpha)), a_mu, a_adv


# --------------------------------------------------------------------------
# Agent
# --------------------------------------------------------------------------


def _clip_grads(params, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


class Agent:
    def __init__(self, config: AgentConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng([seed, 9001])
        c = config
        if c.variant == "ar-rdpg":
            self.trunk: Module = RecurrentTrunk(c.rnn_hidden, rng)
        elif c.variant == "ar-cadpg":
            self.trunk = VisualTrunk(rng, c.image_size, c.image_channels, tuple(c.conv_channels),
                                     c.visual_embed, c.kin_embed, c.fusion_dim, c.channel_attention)
        else:
            self.trunk = IdentityTrunk()
        fdim = self.trunk.feature_dim
        self.actor = mlp([fdim, *c.hidden, 2], rng, out_act="tanh")
        self.adversary = mlp([fdim, *c.hidden, 2], rng, out_act="tanh")
        self.critic = mlp([fdim + 2, *c.hidden, 1], rng)
        self.target_trunk = self.trunk.clone()
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.critic_opt = Adam(self.trunk.params() + self.critic.params(), c.lr_critic)
        self.actor_opt = Adam(self.actor.params(), c.lr_actor)
        self.adversary_opt = Adam(self.adversary.params(), c.lr_adversary)
        self.n_updates = 0

    # -- properties -------------------------------------------------------

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def alpha(self) -> float:
        return 0.0 if self.variant == "ddpg" else self.config.alpha

    @property
    def recurrent(self) -> bool:
        return self.variant == "ar-rdpg"

    @property
    def visual(self) -> bool:
        return self.variant == "ar-cadpg"

    @property
    def trains_adversary(self) -> bool:
        return self.variant != "ddpg"

    def mixed_policy(self, alpha: float | None = None) -> MixedPolicy:
        return MixedPolicy(self.actor.forward, self.adversary.forward, self.alpha if alpha is None else alpha)

    # -- acting -----------------------------------------------------------

    def features(self, obs: dict, h_prev: np.ndarray | None = None) -> np.ndarray:
        """Trunk features for a single observation (recurrent: the new hidden state)."""
        if self.recurrent:
            return self.trunk.step(h_prev, obs["kin"])
        batch = {"kin": obs["kin"][None]}
        if self.visual:
            batch["img"] = obs["img"][None]
        return self.trunk.forward(batch)[0]

    def initial_hidden(self) -> np.ndarray | None:
        return self.trunk.initial_state() if self.recurrent else None

    # -- learning ---------------------------------------------------------

    def policy_gradient(self, head: Module, feats: np.ndarray, ascend: bool,
                        weights: np.ndarray | None = None) -> tuple[float, list[np.ndarray]]:
        """Raw parameter gradient of ``-/+ mean Q(f, head(f))`` with the critic held fixed.

        ``ascend=True`` is the actor (maximise Q), ``False`` the adversary.
        Returns (mean Q, gradients in ``head.params()`` order).
        """
        n = feats.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights / weights.sum()
        head.zero_grad()
        a = head.forward(feats)
        q = self.critic.forward(np.concatenate([feats, a], axis=1))[:, 0]
        sign = -1.0 if ascend else 1.0
        dq = (sign * w)[:, None]
        dinp = self.critic.backward(dq)
        self.critic.zero_grad()
        head.backward(dinp[:, feats.shape[1]:])
        grads = [p.grad.copy() for p in head.params()]
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise AgentFault("non-finite policy gradient")
        return float(np.sum(w * q)), grads

    def _critic_step(self, loss_grad_fn) -> float:
        self.critic_opt.zero_grad()
        loss = loss_grad_fn()
        if not math.isfinite(loss):
            raise AgentFault(f"non-finite critic loss {loss}")
        _clip_grads(self.critic_opt.params, self.config.grad_clip)
        self.critic_opt.step()
        return loss

    def _policy_steps(self, feats, weights=None) -> tuple[float, float]:
        actor_obj, g_act = self.policy_gradient(self.actor, feats, ascend=True, weights=weights)
        for p, g in zip(self.actor.params(), g_act):
            p.grad[...] = g
        self.actor_opt.step()
        adv_obj = float("nan")
        if self.trains_adversary:
            adv_obj, g_adv = self.policy_gradient(self.adversary, feats, ascend=False, weights=weights)
            for p, g in zip(self.adversary.params(), g_adv):
                p.grad[...] = g
            self.adversary_opt.step()
        return actor_obj, adv_obj

    def soft_update_targets(self) -> None:
        tau = self.config.tau
        if tau == 0.0:
            return
        soft_update(self.target_trunk.params(), self.trunk.params(), tau)
        soft_update(self.target_actor.params(), self.actor.params(), tau)
        soft_update(self.target_critic.params(), self.critic.params(), tau)

    def update(self, batch: dict) -> dict[str, float]:
        """One critic, actor and adversary step on a minibatch, then a soft target update."""
        if self.recurrent:
            out = self._update_recurrent(batch)
        else:
            out = self._update_flat(batch)
        self.soft_update_targets()
        self.n_updates += 1
        return out

    def _flat_inputs(self, batch, prefix=""):
        x = {"kin": batch[prefix + "kin"]}
        if self.visual:
            x["img"] = batch[prefix + "img"]
        return x

    def _update_flat(self, batch) -> dict[str, float]:
        gamma = self.config.gamma
        f2 = self.target_trunk.forward(self._flat_inputs(batch, "next_"))
        a2 = self.target_actor.forward(f2)
        q2 = self.target_critic.forward(np.concatenate([f2, a2], axis=1))[:, 0]
        y = critic_target(batch["reward"], batch["done"], gamma, q2)
        feats_holder = {}

        def loss_grad():
            f = self.trunk.forward(self._flat_inputs(batch))
            feats_holder["f"] = f
            q = self.critic.forward(np.concatenate([f, batch["action"]], axis=1))[:, 0]
            td = q - y
            n = len(td)
            dinp = self.critic.backward((2.0 * td / n)[:, None])
            self.trunk.backward(dinp[:, : f.shape[1]])
            return float(np.mean(td * td))

        loss = self._critic_step(loss_grad)
        actor_obj, adv_obj = self._policy_steps(feats_holder["f"])
        return {"critic_loss": loss, "actor_q": actor_obj, "adversary_q": adv_obj}

    def _update_recurrent(self, batch) -> dict[str, float]:
        gamma = self.config.gamma
        obs, nobs = batch["obs"], batch["next_obs"]  # (L, B, 3)
        L, B = obs.shape[:2]
        mask = batch["mask"]
        # target hidden states: unroll the target cell over o_0, o'_0 .. o'_{L-1}
        tseq = np.concatenate([obs[:1], nobs], axis=0)
        th = self.target_trunk.forward(batch["h0"], tseq)[1:]
        h2 = th.reshape(L * B, -1)
        a2 = self.target_actor.forward(h2)
        q2 = self.target_critic.forward(np.concatenate([h2, a2], axis=1))[:, 0]
        y = critic_target(batch["reward"].reshape(-1), batch["done"].reshape(-1), gamma, q2)
        w = mask.reshape(-1)
        wsum = w.sum()
        holder = {}

        def loss_grad():
            hs = self.trunk.forward(batch["h0"], obs)
            hf = hs.reshape(L * B, -1)
            holder["h"] = hf
            q = self.critic.forward(np.concatenate([hf, batch["action"].reshape(L * B, -1)], axis=1))[:, 0]
            td = (q - y) * w
            dinp = self.critic.backward((2.0 * td / wsum)[:, None])
            self.trunk.backward(dinp[:, : hf.shape[1]].reshape(L, B, -1))
            return float(np.sum(td * td) / wsum)

        loss = self._critic_step(loss_grad)
        keep = w > 0
        actor_obj, adv_obj = self._policy_steps(holder["h"][keep])
        return {"critic_loss": loss, "actor_q": actor_obj, "adversary_q": adv_obj}

    # -- persistence ------------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("trunk", "actor", "adversary", "critic", "target_trunk", "target_actor", "target_critic"):
            out.update(ckpt.module_state(getattr(self, name), name + "."))
        return out

    def manifest(self) -> dict:
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "gamma": self.config.gamma,
            "n_updates": self.n_updates,
            "config": _jsonable(asdict(self.config)),
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        ckpt.save(path, self.state_tensors(), {"format": "arlane-agent"})
        path.with_suffix(".manifest.json").write_text(json.dumps(self.manifest(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Agent":
        path = Path(path)
        tensors, _ = ckpt.load(path)
        man_path = path.with_suffix(".manifest.json")
        if not man_path.is_file():
            raise ckpt.CheckpointError(f"manifest not found: {man_path}")
        man = json.loads(man_path.read_text())
        cfg = dict(man["config"])
        for k in ("hidden", "conv_channels"):
            cfg[k] = tuple(cfg[k])
        agent = cls(AgentConfig(**cfg))
        for name in ("trunk", "actor", "adversary", "critic", "target_trunk", "target_actor", "target_critic"):
            ckpt.load_module_state(getattr(agent, name), tensors, name + ".")
        agent.n_updates = int(man["n_updates"])
        return agent


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    return d
