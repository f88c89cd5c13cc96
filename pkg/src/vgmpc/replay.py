"""Replay buffer with episode structure, mirror augmentation, n-step targets.

Transitions are kept in episode order (n-step segments must not cross episode
boundaries); eviction drops oldest whole episodes. Mirrored twins are stored
as separate episodes, doubling the effective data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .critic import CriticParams, value_forward
from .frenet import FrenetError


@dataclass(frozen=True)
class Transition:
    s: FrenetError
    a: tuple          # (v_cmd, omega_cmd)
    r: float
    s_next: FrenetError
    done: bool

    def mirrored(self) -> "Transition":
        return Transition(self.s.mirrored(), (self.a[0], -self.a[1]),
                          self.r, self.s_next.mirrored(), self.done)


def augment(t: Transition) -> list:
    """The transition plus its mirror across the reference path."""
    return [t, t.mirrored()]


@dataclass
class TrainConfig:
    gamma: float = 0.99
    n_step: int = 5
    rho: float = 0.01          # Polyak factor
    beta: float = 1e-3         # Jacobian-regularization weight
    lam: float = 1e-5          # weight decay
    batch_size: int = 64
    update_interval: int = 10  # env steps between critic updates
    learning_rate: float = 1e-3
    value_scale: float = 25.0  # fixed critic output multiplier (value units)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.n_step < 1 or self.batch_size < 1 or self.update_interval < 1:
            raise ValueError("n_step, batch_size, update_interval must be >= 1")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if self.value_scale <= 0:
            raise ValueError("value_scale must be > 0")


class _Episode:
    __slots__ = ("s", "a", "r", "s_next", "done", "closed")

    def __init__(self):
        self.s = []
        self.a = []
        self.r = []
        self.s_next = []
        self.done = []
        self.closed = False

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """Ring of transitions grouped by episode."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._episodes: list[_Episode] = []
        self._size = 0

    def __len__(self):
        return self._size

    @property
    def n_episodes(self):
        return len(self._episodes)

    def start_episode(self) -> None:
        if self._episodes and not self._episodes[-1].closed:
            self._episodes[-1].closed = True
        self._episodes.append(_Episode())

    def add(self, t: Transition) -> None:
        if not self._episodes or self._episodes[-1].closed:
            self._episodes.append(_Episode())
        ep = self._episodes[-1]
        ep.s.append(t.s.as_array())
        ep.a.append(np.array(t.a))
        ep.r.append(t.r)
        ep.s_next.append(t.s_next.as_array())
        ep.done.append(t.done)
        if t.done:
            ep.closed = True
        self._size += 1
        self._evict()

    def add_episode(self, transitions) -> None:
        self.start_episode()
        for t in transitions:
            self.add(t)
        self._episodes[-1].closed = True

    def _evict(self) -> None:
        while self._size > self.capacity and len(self._episodes) > 1:
            gone = self._episodes.pop(0)
            self._size -= len(gone)

    def sample_indices(self, rng: np.random.Generator, m: int):
        """m uniform (episode, offset) start indices."""
        if self._size == 0:
            raise ValueError("buffer is empty")
        flat = rng.integers(0, self._size, size=m)
        out = []
        lengths = [len(ep) for ep in self._episodes]
        bounds = np.cumsum([0] + lengths)
        for f in flat:
            ei = int(np.searchsorted(bounds, f, side="right")) - 1
            out.append((ei, int(f - bounds[ei])))
        return out

    def n_step_target(self, ep_idx: int, offset: int, target: CriticParams,
                      cfg: TrainConfig) -> tuple[np.ndarray, float]:
        """State at the segment start and its bootstrapped n-step return.

        The horizon truncates at the episode end; the bootstrap always uses
        the last observed state (continuing task: aborts/timeouts are
        truncations, never value-zeroed terminals).
        """
        ep = self._episodes[ep_idx]
        if offset >= len(ep):
            raise ValueError("segment start beyond episode end")
        m = min(cfg.n_step, len(ep) - offset)
        if m < 1:
            raise ValueError("empty segment")
        ret = 0.0
        g = 1.0
        for i in range(m):
            ret += g * ep.r[offset + i]
            g *= cfg.gamma
        boot = ep.s_next[offset + m - 1]
        ret += g * value_forward(target, boot)
        return ep.s[offset], float(ret)

    def sample_batch(self, rng: np.random.Generator, target: CriticParams,
                     cfg: TrainConfig):
        """(M, 5) states and (M,) n-step targets for one training step."""
        idx = self.sample_indices(rng, cfg.batch_size)
        ss = np.empty((cfg.batch_size, 5))
        ys = np.empty(cfg.batch_size)
        # batch the bootstrap evaluations for speed
        segs = []
        for k, (ei, off) in enumerate(idx):
            ep = self._episodes[ei]
            m = min(cfg.n_step, len(ep) - off)
            ret = 0.0
            g = 1.0
            for i in range(m):
                ret += g * ep.r[off + i]
                g *= cfg.gamma
            segs.append((ep.s_next[off + m - 1], g, ret))
            ss[k] = ep.s[off]
        boots = value_forward(target, np.stack([b for b, _, _ in segs]))
        for k, (_, g, ret) in enumerate(segs):
            ys[k] = ret + g * boots[k]
        return ss, ys
