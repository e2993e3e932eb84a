"""Feature trunks shared by actor, adversary and critic heads.

* ``IdentityTrunk`` - normalised kinematics pass straight through (DDPG, AR-DDPG).
* ``RecurrentTrunk`` - Elman cell over the kinematic stream (AR-RDPG).
* ``VisualTrunk`` - conv encoder, spatial attention, visual/kinematic fusion (AR-CADPG).

The critic's TD loss is the only signal that trains a trunk; policy heads
read its features as constants.
"""

from __future__ import annotations

import numpy as np

from ..nn import (
    ChannelAttention,
    Conv2d,
    Dense,
    Flatten,
    Fusion,
    Module,
    ReLU,
    RNNCell,
    SpatialAttention,
)

KIN_DIM = 3


class IdentityTrunk(Module):
    feature_dim = KIN_DIM

    def forward(self, batch):
        return batch["kin"]

    def backward(self, g):
        return None


class RecurrentTrunk(Module):
    def __init__(self, hidden: int, rng: np.random.Generator):
        self.rnn = RNNCell(KIN_DIM, hidden, rng)

    @property
    def feature_dim(self) -> int:
        return self.rnn.hidden_dim

    def initial_state(self, n: int | None = None) -> np.ndarray:
        return np.zeros(self.feature_dim) if n is None else np.zeros((n, self.feature_dim))

    def step(self, h_prev, kin):
        return self.rnn.step(h_prev, kin)

    def forward(self, h0, obs_seq):
        return self.rnn.forward(h0, obs_seq)

    def backward(self, dhs):
        return self.rnn.backward(dhs)


class VisualTrunk(Module):
    def __init__(self, rng: np.random.Generator, image_size: int = 64, image_channels: int = 1,
                 channels: tuple[int, int] = (8, 16), visual_embed: int = 64, kin_embed: int = 16,
                 fusion_dim: int = 64, channel_attention: bool = False):
        c1, c2 = channels
        self.conv1 = Conv2d(image_channels, c1, 5, stride=2, rng=rng)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(c1, c2, 3, stride=2, rng=rng)
        self.relu2 = ReLU()
        self.chan_att = ChannelAttention(c2, reduction=4, rng=rng) if channel_attention else None
        self.attention = SpatialAttention(7, rng=rng)
        self.flatten = Flatten()
        h1 = self.conv1.output_hw(image_size, image_size)
        h2 = self.conv2.output_hw(*h1)
        self.fc_v = Dense(c2 * h2[0] * h2[1], visual_embed, rng)
        self.relu_v = ReLU()
        self.fc_k = Dense(KIN_DIM, kin_embed, rng)
        self.relu_k = ReLU()
        self.fusion = Fusion(visual_embed, kin_embed, fusion_dim, rng, activation="relu")
        self._fusion_dim = fusion_dim
        self._mask = None

    @property
    def feature_dim(self) -> int:
        return self._fusion_dim

    @property
    def last_mask(self):
        return self._mask

    def forward(self, batch):
        F = self.relu2.forward(self.conv2.forward(self.relu1.forward(self.conv1.forward(batch["img"]))))
        if self.chan_att is not None:
            F = self.chan_att.forward(F)
        Fa, self._mask = self.attention.forward(F)
        zv = self.relu_v.forward(self.fc_v.forward(self.flatten.forward(Fa)))
        zk = self.relu_k.forward(self.fc_k.forward(batch["kin"]))
        return self.fusion.forward(zv, zk)

    def backward(self, g):
        dzv, dzk = self.fusion.backward(g)
        self.fc_k.backward(self.relu_k.backward(dzk))
        dFa = self.flatten.backward(self.fc_v.backward(self.relu_v.backward(dzv)))
        dF = self.attention.backward(dFa)
        if self.chan_att is not None:
            dF = self.chan_att.backward(dF)
        self.conv1.backward(self.relu1.backward(self.conv2.backward(self.relu2.backward(dF))), input_grad=False)
        return None
