"""Replay buffer that samples consecutive-state triples within one episode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientDataError(RuntimeError):
    pass


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    episode: int
    step: int
    s_prev: np.ndarray | None = None


@dataclass
class TripleBatch:
    s_prev: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.s)


class ReplayBuffer:
    """Append-only transition store.

    Index ``i`` is a valid triple centre when transitions ``i-1``, ``i`` and
    ``i+1`` exist, share an episode and have consecutive step indices. Episode
    start transitions are stored but never sampled as centres.
    """

    def __init__(self, obs_dim: int, act_dim: int, capacity: int = 1024):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.size = 0
        self._alloc(max(int(capacity), 4))
        self._valid: list[int] = []

    def _alloc(self, capacity: int) -> None:
        def grow(old, shape, dtype=np.float64):
            new = np.zeros((capacity,) + shape, dtype=dtype)
            if old is not None:
                new[: self.size] = old[: self.size]
            return new

        self.capacity = capacity
        self.s_prev = grow(getattr(self, "s_prev", None), (self.obs_dim,))
        self.s = grow(getattr(self, "s", None), (self.obs_dim,))
        self.a = grow(getattr(self, "a", None), (self.act_dim,))
        self.r = grow(getattr(self, "r", None), ())
        self.s_next = grow(getattr(self, "s_next", None), (self.obs_dim,))
        self.done = grow(getattr(self, "done", None), ())
        self.episode = grow(getattr(self, "episode", None), (), np.int64)
        self.step = grow(getattr(self, "step", None), (), np.int64)
        self.has_prev = grow(getattr(self, "has_prev", None), (), bool)

    def __len__(self) -> int:
        return self.size

    @property
    def n_triples(self) -> int:
        return len(self._valid)

    def _consecutive(self, i: int, j: int) -> bool:
        return self.episode[i] == self.episode[j] and self.step[j] == self.step[i] + 1

    def push(self, tr: Transition) -> None:
        if self.size == self.capacity:
            self._alloc(2 * self.capacity)
        i = self.size
        if i > 0 and self.episode[i - 1] == tr.episode and tr.step <= self.step[i - 1]:
            raise ValueError("step indices must increase within an episode")
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.r[i] = tr.r
        self.s_next[i] = tr.s_next
        self.done[i] = float(tr.done)
        self.episode[i] = tr.episode
        self.step[i] = tr.step
        self.has_prev[i] = tr.s_prev is not None
        if tr.s_prev is not None:
            self.s_prev[i] = tr.s_prev
        self.size += 1
        c = i - 1
        if c >= 1 and self.has_prev[c] and self._consecutive(c - 1, c) and self._consecutive(c, i):
            self._valid.append(c)

    def triple_indices(self) -> np.ndarray:
        return np.asarray(self._valid, dtype=np.int64)

    def sample_triples(self, n: int, rng: np.random.Generator) -> TripleBatch:
        if n < 1 or self.n_triples < n:
            raise InsufficientDataError(f"need {n} valid triples, buffer has {self.n_triples}")
        idx = np.asarray(self._valid)[rng.integers(0, self.n_triples, size=n)]
        return self.batch(idx)

    def batch(self, idx) -> TripleBatch:
        idx = np.asarray(idx)
        return TripleBatch(
            self.s_prev[idx], self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]
        )
