"""Uniform discretizations of the time horizon and of the index space I = [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` on ``[0, T]`` with ``K = n_steps`` steps."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be a positive finite number, got {self.horizon!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * int(factor))


@dataclass(frozen=True)
class IndexGrid:
    """Midpoint grid ``u_i = (i + 1/2) / N`` with uniform weights ``1/N``.

    The weights are the finite stand-in for the index measure; they sum to one.
    """

    n_index: int

    def __post_init__(self):
        if int(self.n_index) != self.n_index or self.n_index < 1:
            raise ValueError(f"n_index must be a positive integer, got {self.n_index!r}")
        object.__setattr__(self, "n_index", int(self.n_index))

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_index) + 0.5) / self.n_index

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_index, 1.0 / self.n_index)


@dataclass(frozen=True)
class Grids:
    time: TimeGrid
    index: IndexGrid

    @classmethod
    def make(cls, horizon: float, n_steps: int, n_index: int) -> "Grids":
        return cls(TimeGrid(horizon, n_steps), IndexGrid(n_index))
