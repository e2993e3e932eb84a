"""Dense-tensor layers with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward``; calling
``backward`` returns the gradient w.r.t. the layer input and *accumulates*
parameter gradients into ``Tensor.grad``. A layer therefore supports one
outstanding forward at a time: call ``backward`` before the next ``forward``
on the same instance if gradients are wanted.

All arrays are float64. Activations travel as plain ``np.ndarray``; only
trainable parameters are wrapped in :class:`Tensor`.
"""

from __future__ import annotations

import copy
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class Tensor:
    """A parameter array with an attached gradient slot."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.array(value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Module:
    """Base class. Parameters and submodules are discovered from attributes
    in assignment order, which fixes the parameter naming and ordering."""

    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, attr in vars(self).items():
            if name.startswith("_"):
                continue
            key = f"{prefix}{name}"
            if isinstance(attr, Tensor):
                out[key] = attr
            elif isinstance(attr, Module):
                out.update(attr.named_params(key + "."))
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        out.update(item.named_params(f"{key}.{i}."))
        return out

    def params(self) -> list[Tensor]:
        return list(self.named_params().values())

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def clone(self):
        """Deep copy with caches dropped."""
        other = copy.deepcopy(self)
        other.clear_cache()
        return other

    def clear_cache(self) -> None:
        for name, attr in vars(self).items():
            if name == "_cache":
                setattr(self, name, None)
            elif isinstance(attr, Module):
                attr.clear_cache()
            elif isinstance(attr, (list, tuple)):
                for item in attr:
                    if isinstance(item, Module):
                        item.clear_cache()

    def num_params(self) -> int:
        return sum(p.value.size for p in self.params())


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --------------------------------------------------------------------------
# Activations
# --------------------------------------------------------------------------


class Tanh(Module):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, g):
        y = self._cache
        return g * (1.0 - y * y)


class ReLU(Module):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, g):
        return g * self._cache


def sigmoid(x):
    # split by sign to stay finite for large |x|
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Sigmoid(Module):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, g):
        y = self._cache
        return g * y * (1.0 - y)


class Flatten(Module):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._cache)


# --------------------------------------------------------------------------
# Affine layers
# --------------------------------------------------------------------------


class Dense(Module):
    """``y = x @ W + b`` for ``x`` of shape (N, in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = Tensor(uniform_init(rng, (n_in, n_out), n_in))
        self.b = Tensor(uniform_init(rng, (n_out,), n_in))
        self._cache = None

    @property
    def n_in(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[1]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"Dense expects (N, {self.n_in}), got {x.shape}")
        self._cache = x
        return x @ self.W.value + self.b.value

    def backward(self, g):
        x = self._cache
        self.W.grad += x.T @ g
        self.b.grad += g.sum(axis=0)
        return g @ self.W.value.T


class Conv2d(Module):
    """2-D cross-correlation over NCHW input with zero padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: int = 0,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        self.W = Tensor(uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.b = Tensor(uniform_init(rng, (out_channels,), fan_in))
        self._stride = stride
        self._padding = padding
        self._cache = None

    @property
    def kernel_size(self) -> int:
        return self.W.shape[2]

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel_size, self._stride, self._padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x):
        n, c, h, w = x.shape
        oc, ic, k, _ = self.W.shape
        if c != ic:
            raise ValueError(f"Conv2d expects {ic} input channels, got {c}")
        s, p = self._stride, self._padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        ho, wo = self.output_hw(h, w)
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, : s * (ho - 1) + 1 : s, : s * (wo - 1) + 1 : s]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        out = cols @ self.W.value.reshape(oc, -1).T + self.b.value
        self._cache = (cols, xp.shape, (n, c, h, w), ho, wo)
        return out.reshape(n, ho, wo, oc).transpose(0, 3, 1, 2)

    def backward(self, g, input_grad: bool = True):
        cols, xp_shape, x_shape, ho, wo = self._cache
        n, c, h, w = x_shape
        oc, _, k, _ = self.W.shape
        s, p = self._stride, self._padding
        gm = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, oc)
        self.W.grad += (gm.T @ cols).reshape(self.W.shape)
        self.b.grad += gm.sum(axis=0)
        if not input_grad:
            return None
        # (k, k, c, n, ho, wo) so each kernel tap scatters a contiguous block
        wt = self.W.value.transpose(2, 3, 1, 0).reshape(k * k * c, oc)
        gt = g.transpose(1, 0, 2, 3).reshape(oc, n * ho * wo)
        taps = (wt @ gt).reshape(k, k, c, n, ho, wo)
        dxp = np.zeros((c, n) + tuple(xp_shape[2:]), dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += taps[i, j]
        dxp = dxp.transpose(1, 0, 2, 3)
        if p:
            dxp = dxp[:, :, p : p + h, p : p + w]
        return np.ascontiguousarray(dxp)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def __iter__(self) -> Iterator[Module]:
        return iter(self.layers)


def mlp(sizes: list[int], rng: np.random.Generator, out_act: str | None = None) -> Sequential:
    """Dense stack with ReLU between layers and an optional output squashing."""
    layers: list[Module] = []
    for i in range(len(sizes) - 1):
        layers.append(Dense(sizes[i], sizes[i + 1], rng))
        if i < len(sizes) - 2:
            layers.append(ReLU())
    if out_act == "tanh":
        layers.append(Tanh())
    elif out_act == "sigmoid":
        layers.append(Sigmoid())
    elif out_act is not None:
        raise ValueError(f"unknown output activation {out_act!r}")
    return Sequential(*layers)


class Fusion(Module):
    """``z = act(FC(concat(z_v, z_k)))`` joining a visual and a kinematic embedding."""

    def __init__(self, dim_v: int, dim_k: int, dim_out: int, rng: np.random.Generator | None = None,
                 activation: str = "relu"):
        self.fc = Dense(dim_v + dim_k, dim_out, rng)
        self.act = ReLU() if activation == "relu" else Tanh()
        self._cache = None

    def forward(self, zv, zk):
        self._cache = zv.shape[1]
        return self.act.forward(self.fc.forward(np.concatenate([zv, zk], axis=1)))

    def backward(self, g):
        g = self.fc.backward(self.act.backward(g))
        dv = self._cache
        return g[:, :dv], g[:, dv:]


# --------------------------------------------------------------------------
# Recurrent cell
# --------------------------------------------------------------------------


def spectral_norm_estimate(W: np.ndarray, iters: int = 50) -> float:
    v = np.ones(W.shape[1]) / np.sqrt(W.shape[1])
    for _ in range(iters):
        u = W @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = W.T @ (u / nu)
        v /= np.linalg.norm(v)
    return float(np.linalg.norm(W @ v))


def rnn_step(cell: "RNNCell", h_prev: np.ndarray, o: np.ndarray) -> np.ndarray:
    """One stateless step ``tanh(W_h h_prev + W_o o + b)``; accepts single vectors or batches."""
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    o = np.asarray(o, dtype=DTYPE)
    if h_prev.shape[-1] != cell.hidden_dim or o.shape[-1] != cell.obs_dim:
        raise ValueError(
            f"rnn_step: expected h[..., {cell.hidden_dim}] and o[..., {cell.obs_dim}], "
            f"got {h_prev.shape} and {o.shape}"
        )
    return np.tanh(h_prev @ cell.W_h.value.T + o @ cell.W_o.value.T + cell.b.value)


class RNNCell(Module):
    """Simple (Elman) recurrent unit with truncated-BPTT support."""

    def __init__(self, obs_dim: int, hidden_dim: int, rng: np.random.Generator | None = None,
                 recurrent_gain: float = 0.9):
        rng = rng if rng is not None else np.random.default_rng(0)
        W_h = uniform_init(rng, (hidden_dim, hidden_dim), hidden_dim)
        sn = spectral_norm_estimate(W_h)
        if sn > 0:
            W_h *= recurrent_gain / sn
        self.W_h = Tensor(W_h)
        self.W_o = Tensor(uniform_init(rng, (hidden_dim, obs_dim), obs_dim))
        self.b = Tensor(np.zeros(hidden_dim))
        self._cache = None

    @property
    def hidden_dim(self) -> int:
        return self.W_h.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.W_o.shape[1]

    def step(self, h_prev, o):
        return rnn_step(self, h_prev, o)

    def forward(self, h0, obs_seq):
        """Unroll over ``obs_seq`` (T, N, obs) from ``h0`` (N, hidden); returns (T, N, hidden)."""
        T = obs_seq.shape[0]
        hs = np.empty((T, h0.shape[0], self.hidden_dim), dtype=DTYPE)
        h = h0
        for t in range(T):
            h = rnn_step(self, h, obs_seq[t])
            hs[t] = h
        self._cache = (h0, obs_seq, hs)
        return hs

    def backward(self, dhs):
        """Backprop through time. ``dhs`` is dL/dh_t for every step; returns (dL/dh0, dL/dobs)."""
        h0, obs_seq, hs = self._cache
        T = obs_seq.shape[0]
        dobs = np.empty_like(obs_seq)
        carry = np.zeros_like(h0)
        for t in range(T - 1, -1, -1):
            h_prev = hs[t - 1] if t > 0 else h0
            dz = (dhs[t] + carry) * (1.0 - hs[t] * hs[t])
            self.W_h.grad += dz.T @ h_prev
            self.W_o.grad += dz.T @ obs_seq[t]
            self.b.grad += dz.sum(axis=0)
            carry = dz @ self.W_h.value
            dobs[t] = dz @ self.W_o.value
        return carry, dobs


# --------------------------------------------------------------------------
# Attention
# --------------------------------------------------------------------------


class SpatialAttention(Module):
    """Mask from channel-pooled features: ``sigmoid(conv7x7([mean_c F, max_c F]))``.

    ``forward`` returns ``(F * mask, mask)`` with mask shape (N, H, W).
    """

    def __init__(self, kernel_size: int = 7, rng: np.random.Generator | None = None):
        self.conv = Conv2d(2, 1, kernel_size, stride=1, padding=kernel_size // 2, rng=rng)
        self._cache = None

    def forward(self, F):
        if F.ndim != 4 or F.shape[1] < 1:
            raise ValueError(f"SpatialAttention expects (N, C, H, W) with C >= 1, got {F.shape}")
        avg = F.mean(axis=1)
        arg = F.argmax(axis=1)
        mx = np.take_along_axis(F, arg[:, None], axis=1)[:, 0]
        pooled = np.stack([avg, mx], axis=1)
        mask = sigmoid(self.conv.forward(pooled))[:, 0]
        self._cache = (F, arg, mask)
        return F * mask[:, None], mask

    def backward(self, g_out, g_mask=None):
        F, arg, mask = self._cache
        dF = g_out * mask[:, None]
        dmask = (g_out * F).sum(axis=1)
        if g_mask is not None:
            dmask = dmask + g_mask
        dz = (dmask * mask * (1.0 - mask))[:, None]
        dpooled = self.conv.backward(dz)
        C = F.shape[1]
        dF += dpooled[:, 0][:, None] / C
        np.put_along_axis(
            dF, arg[:, None],
            np.take_along_axis(dF, arg[:, None], axis=1) + dpooled[:, 1][:, None],
            axis=1,
        )
        return dF


class ChannelAttention(Module):
    """Per-channel gate ``sigmoid(MLP(avg_hw F) + MLP(max_hw F))`` with a shared two-layer MLP."""

    def __init__(self, channels: int, reduction: int = 4, rng: np.random.Generator | None = None):
        hidden = max(1, channels // reduction)
        self.fc1 = Dense(channels, hidden, rng)
        self.fc2 = Dense(hidden, channels, rng)
        self._cache = None

    def _mlp(self, x):
        pre = x @ self.fc1.W.value + self.fc1.b.value
        r = pre > 0
        return (pre * r) @ self.fc2.W.value + self.fc2.b.value, r

    def _mlp_backward(self, g, x, r):
        hr = (x @ self.fc1.W.value + self.fc1.b.value) * r
        self.fc2.W.grad += hr.T @ g
        self.fc2.b.grad += g.sum(axis=0)
        gh = (g @ self.fc2.W.value.T) * r
        self.fc1.W.grad += x.T @ gh
        self.fc1.b.grad += gh.sum(axis=0)
        return gh @ self.fc1.W.value.T

    def forward(self, F):
        n, c = F.shape[:2]
        flat = F.reshape(n, c, -1)
        avg = flat.mean(axis=2)
        arg = flat.argmax(axis=2)
        mx = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]
        oa, ra = self._mlp(avg)
        om, rm = self._mlp(mx)
        gate = sigmoid(oa + om)
        self._cache = (F, avg, mx, arg, ra, rm, gate)
        return F * gate[:, :, None, None]

    def backward(self, g):
        F, avg, mx, arg, ra, rm, gate = self._cache
        n, c = F.shape[:2]
        dF = g * gate[:, :, None, None]
        dgate = (g * F).sum(axis=(2, 3))
        dz = dgate * gate * (1.0 - gate)
        davg = self._mlp_backward(dz, avg, ra)
        dmx = self._mlp_backward(dz, mx, rm)
        hw = F.shape[2] * F.shape[3]
        dflat = dF.reshape(n, c, -1) + davg[:, :, None] / hw
        np.put_along_axis(
            dflat, arg[:, :, None],
            np.take_along_axis(dflat, arg[:, :, None], axis=2) + dmx[:, :, None],
            axis=2,
        )
        return dflat.reshape(F.shape)
