"""Central finite-difference gradient checks for every layer type.

Each probe builds a freshly seeded layer plus random inputs, and defines a
scalar loss ``sum(G * output)`` with a fixed random cotangent ``G``. The
analytic gradient (layer ``backward``) is compared against central
differences on every input entry and every parameter entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .layers import (
    ChannelAttention,
    Conv2d,
    Dense,
    Fusion,
    Module,
    ReLU,
    RNNCell,
    Sigmoid,
    SpatialAttention,
    Tanh,
)

FD_STEP = 1e-5
REL_TOL = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / (||a|| + ||n||)``, zero when both vanish."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def numeric_grad(loss: Callable[[], float], arr: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        fp = loss()
        arr[idx] = orig - step
        fm = loss()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * step)
    return grad


@dataclass
class Probe:
    """A layer under test: ``run(inputs)`` returns outputs, ``back(cotangents)`` input grads."""

    module: Module
    inputs: dict[str, np.ndarray]
    run: Callable[[dict[str, np.ndarray]], tuple[np.ndarray, ...]]
    back: Callable[[tuple[np.ndarray, ...]], dict[str, np.ndarray]]


@dataclass
class GradCheckResult:
    layer: str
    seed: int
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < REL_TOL


def check_probe(probe: Probe, rng: np.random.Generator, step: float = FD_STEP) -> dict[str, float]:
    outs = probe.run(probe.inputs)
    cot = tuple(rng.standard_normal(o.shape) for o in outs)

    def loss() -> float:
        return float(sum(np.sum(c * o) for c, o in zip(cot, probe.run(probe.inputs))))

    probe.module.zero_grad()
    probe.run(probe.inputs)
    in_grads = probe.back(cot)
    errors: dict[str, float] = {}
    for name, x in probe.inputs.items():
        errors[f"input:{name}"] = relative_error(in_grads[name], numeric_grad(loss, x, step))
    analytic = {k: p.grad.copy() for k, p in probe.module.named_params().items()}
    for name, p in probe.module.named_params().items():
        errors[f"param:{name}"] = relative_error(analytic[name], numeric_grad(loss, p.value, step))
    return errors


# --------------------------------------------------------------------------
# Probe builders, one per layer kind
# --------------------------------------------------------------------------


def _dense(rng):
    m = Dense(5, 4, rng)
    return Probe(m, {"x": rng.standard_normal((3, 5))},
                 lambda i: (m.forward(i["x"]),), lambda g: {"x": m.backward(g[0])})


def _conv(rng):
    m = Conv2d(2, 3, 3, stride=2, padding=1, rng=rng)
    return Probe(m, {"x": rng.standard_normal((2, 2, 7, 7))},
                 lambda i: (m.forward(i["x"]),), lambda g: {"x": m.backward(g[0])})


def _conv_strided_valid(rng):
    m = Conv2d(1, 2, 5, stride=2, padding=0, rng=rng)
    return Probe(m, {"x": rng.standard_normal((2, 1, 11, 11))},
                 lambda i: (m.forward(i["x"]),), lambda g: {"x": m.backward(g[0])})


def _rnn(rng):
    m = RNNCell(3, 4, rng)
    # random biases so the check does not sit at the zero-bias init
    m.b.value[:] = rng.uniform(-0.5, 0.5, 4)

    def back(g):
        dh0, dobs = m.backward(g[0])
        return {"h0": dh0, "obs": dobs}

    return Probe(m, {"h0": rng.uniform(-0.9, 0.9, (2, 4)), "obs": rng.standard_normal((6, 2, 3))},
                 lambda i: (m.forward(i["h0"], i["obs"]),), back)


def _spatial_attention(rng):
    m = SpatialAttention(7, rng)
    return Probe(m, {"F": rng.standard_normal((2, 3, 6, 6))},
                 lambda i: m.forward(i["F"]), lambda g: {"F": m.backward(g[0], g[1])})


def _channel_attention(rng):
    m = ChannelAttention(4, reduction=2, rng=rng)
    return Probe(m, {"F": rng.standard_normal((2, 4, 5, 5))},
                 lambda i: (m.forward(i["F"]),), lambda g: {"F": m.backward(g[0])})


def _fusion(rng):
    m = Fusion(4, 3, 5, rng, activation="tanh")

    def back(g):
        dv, dk = m.backward(g[0])
        return {"zv": dv, "zk": dk}

    return Probe(m, {"zv": rng.standard_normal((3, 4)), "zk": rng.standard_normal((3, 3))},
                 lambda i: (m.forward(i["zv"], i["zk"]),), back)


def _activation(cls):
    def build(rng):
        m = cls()
        return Probe(m, {"x": rng.standard_normal((4, 6))},
                     lambda i: (m.forward(i["x"]),), lambda g: {"x": m.backward(g[0])})
    return build


PROBES: dict[str, Callable[[np.random.Generator], Probe]] = {
    "dense": _dense,
    "conv": _conv,
    "conv_valid_s2": _conv_strided_valid,
    "rnn_step": _rnn,
    "spatial_attention": _spatial_attention,
    "channel_attention": _channel_attention,
    "fusion": _fusion,
    "tanh": _activation(Tanh),
    "sigmoid": _activation(Sigmoid),
    "relu": _activation(ReLU),
}


def run_suite(
    n_seeds: int = 20,
    probes: dict[str, Callable[[np.random.Generator], Probe]] | None = None,
) -> list[GradCheckResult]:
    probes = PROBES if probes is None else probes
    results = []
    for name, build in probes.items():
        for seed in range(n_seeds):
            rng = np.random.default_rng([seed, 7919])
            probe = build(rng)
            results.append(GradCheckResult(name, seed, check_probe(probe, rng)))
    return results


def summarize(results: list[GradCheckResult]) -> dict[str, float]:
    """Per-layer worst relative error across seeds."""
    worst: dict[str, float] = {}
    for r in results:
        worst[r.layer] = max(worst.get(r.layer, 0.0), r.max_rel_err)
    return worst
