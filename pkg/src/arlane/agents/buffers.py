"""FIFO ring buffers for flat transitions and recurrent windows.

Storage is allocated lazily and grown geometrically up to ``capacity`` so a
large nominal capacity costs nothing until it is used.
"""

from __future__ import annotations

import numpy as np


class RingStorage:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.ptr = 0
        self.size = 0
        self.n_inserted = 0
        self.data: dict[str, np.ndarray] = {}
        self._alloc = 0

    def _ensure(self, record: dict[str, np.ndarray]) -> None:
        if not self.data:
            self._alloc = min(self.capacity, 1024)
            for k, v in record.items():
                v = np.asarray(v)
                self.data[k] = np.zeros((self._alloc,) + v.shape, dtype=v.dtype)
        elif self.ptr >= self._alloc and self._alloc < self.capacity:
            new = min(self.capacity, self._alloc * 2)
            for k, arr in self.data.items():
                grown = np.zeros((new,) + arr.shape[1:], dtype=arr.dtype)
                grown[: self._alloc] = arr
                self.data[k] = grown
            self._alloc = new

    def add(self, **record) -> None:
        self._ensure(record)
        for k, v in record.items():
            self.data[k][self.ptr] = v
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.n_inserted += 1

    def __len__(self) -> int:
        return self.size

    def ordered(self, key: str) -> np.ndarray:
        """Stored values of ``key`` from oldest to newest."""
        arr = self.data[key]
        if self.size < self.capacity:
            return arr[: self.size].copy()
        return np.concatenate([arr[self.ptr : self.capacity], arr[: self.ptr]])


class ReplayBuffer(RingStorage):
    """Uniform sampler over (s, a~, r, s', done)."""

    def __init__(self, capacity: int, seed: int = 0):
        super().__init__(capacity)
        self.rng = np.random.default_rng([seed, 4242])

    def store(self, kin, action, reward, next_kin, done, img=None, next_img=None) -> None:
        rec = {
            "kin": np.asarray(kin, dtype=np.float64),
            "action": np.asarray(action, dtype=np.float64),
            "reward": np.float64(reward),
            "next_kin": np.asarray(next_kin, dtype=np.float64),
            "done": np.float64(done),
        }
        if img is not None:
            # frames are multiples of 1/255, so uint8 storage is lossless
            rec["img"] = np.round(np.asarray(img) * 255.0).astype(np.uint8)
            rec["next_img"] = np.round(np.asarray(next_img) * 255.0).astype(np.uint8)
        self.add(**rec)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, batch_size)
        out = {}
        for k, arr in self.data.items():
            v = arr[idx]
            out[k] = v.astype(np.float64) / 255.0 if v.dtype == np.uint8 else v
        return out


class SequenceReplayBuffer(RingStorage):
    """Per-step records ``(o, h_prev, a~, r, o', done)`` sampled as contiguous windows.

    A window starts at a uniformly drawn stored step and extends up to
    ``window`` steps within the same episode; the hidden state returned is
    the one stored at the window start (the state before its first
    observation). Padded steps are masked out.
    """

    def __init__(self, capacity: int, window: int = 8, seed: int = 0):
        super().__init__(capacity)
        self.window = int(window)
        self.rng = np.random.default_rng([seed, 4243])
        self.episode = 0

    def new_episode(self) -> None:
        self.episode += 1

    def store(self, obs, h_prev, action, reward, next_obs, done) -> None:
        self.add(
            obs=np.asarray(obs, dtype=np.float64),
            h_prev=np.asarray(h_prev, dtype=np.float64),
            action=np.asarray(action, dtype=np.float64),
            reward=np.float64(reward),
            next_obs=np.asarray(next_obs, dtype=np.float64),
            done=np.float64(done),
            episode=np.int64(self.episode),
            serial=np.int64(self.n_inserted),
        )

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        L = self.window
        if self.size < self.capacity:
            starts = self.rng.integers(0, self.size, batch_size)
        else:
            starts = self.rng.integers(0, self.capacity, batch_size)
        idx = (starts[None, :] + np.arange(L)[:, None]) % self.capacity  # (L, B)
        if self.size < self.capacity:
            # unfilled tail: clipped slots fail the serial check below
            idx = np.minimum(idx, self.size - 1)
        ep = self.data["episode"]
        serial = self.data["serial"]
        mask = (ep[idx] == ep[starts][None, :]) & (serial[idx] == serial[starts][None, :] + np.arange(L)[:, None])
        mask &= serial[idx] < self.n_inserted
        # a window stops at the first gap
        mask = np.cumprod(mask, axis=0).astype(bool)
        return {
            "h0": self.data["h_prev"][starts],
            "obs": self.data["obs"][idx],
            "action": self.data["action"][idx],
            "reward": self.data["reward"][idx],
            "next_obs": self.data["next_obs"][idx],
            "done": self.data["done"][idx],
            "mask": mask.astype(np.float64),
        }
