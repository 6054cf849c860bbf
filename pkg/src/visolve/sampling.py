"""Index schedules: independent sampling, random reshuffling, shuffle-once, cyclic.

Randomness comes from numpy's PCG64 generator (``numpy.random.default_rng``)
seeded with the schedule seed; permutations are drawn with
``Generator.permutation`` (a Fisher-Yates shuffle).  Equal ``(kind, n, seed)``
therefore gives identical index streams on every platform numpy supports.
"""
from __future__ import annotations

import enum

import numpy as np


class ScheduleKind(enum.Enum):
    INDEPENDENT = "independent"
    RANDOM_RESHUFFLING = "rr"
    SHUFFLE_ONCE = "so"
    CYCLIC = "cyclic"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown schedule {text!r}; expected one of independent, rr, so, cyclic")


class EpochError(RuntimeError):
    pass


class Schedule:
    def __init__(self, kind, n, seed=0):
        self.kind = ScheduleKind.parse(kind)
        if n < 1:
            raise ValueError("a schedule needs n >= 1")
        self.n = int(n)
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self.permutation = None
        if self.kind is ScheduleKind.SHUFFLE_ONCE:
            self.permutation = self._rng.permutation(self.n)
        elif self.kind is ScheduleKind.CYCLIC:
            self.permutation = np.arange(self.n)
        self.cursor = self.n
        self.epoch = -1

    @property
    def is_permutation(self):
        return self.kind is not ScheduleKind.INDEPENDENT

    def begin_epoch(self, s=None):
        if self.cursor != self.n and self.epoch >= 0:
            raise EpochError(f"epoch {self.epoch} still has {self.n - self.cursor} indices left")
        if self.kind is ScheduleKind.RANDOM_RESHUFFLING:
            self.permutation = self._rng.permutation(self.n)
        self.cursor = 0
        self.epoch = self.epoch + 1 if s is None else int(s)

    def next_index(self):
        if self.kind is ScheduleKind.INDEPENDENT:
            self.cursor = min(self.cursor + 1, self.n)
            return int(self._rng.integers(self.n))
        if self.cursor >= self.n:
            raise EpochError("epoch exhausted; call begin_epoch first")
        i = int(self.permutation[self.cursor])
        self.cursor += 1
        return i

    def epoch_indices(self):
        """Begin an epoch and return its ``n`` indices in order."""
        self.begin_epoch()
        out = [self.next_index() for _ in range(self.n)]
        self.cursor = self.n
        return out

    def __repr__(self):
        return f"Schedule({self.kind.value!r}, n={self.n}, seed={self.seed})"


def new_schedule(kind, n, seed=0):
    return Schedule(kind, n, seed)
