"""Array containers shared by the noise, solver and Girsanov modules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .grids import Grids

if TYPE_CHECKING:
    from .noise import NoiseEnsemble


def path_mean(values: np.ndarray) -> np.ndarray:
    """Average over the path axis of an ``(N, M, ...)`` array.

    Reduces along a contiguous axis so numpy's pairwise summation applies in the
    same fixed order as a per-step ``state.mean(axis=1)`` on ``(N, M)`` slices.
    """
    if values.ndim == 2:
        return np.ascontiguousarray(values).mean(axis=1)
    moved = np.ascontiguousarray(np.moveaxis(values, 1, -1))
    return moved.mean(axis=-1)


@dataclass(frozen=True)
class PathEnsemble:
    """States ``values[i, m, k]`` for index ``i``, path ``m`` and time node ``k``.

    Averaging over both leading axes is the extension-space expectation;
    averaging over paths alone is the expectation at a fixed index.
    """

    values: np.ndarray
    grids: Grids
    noise: "NoiseEnsemble | None" = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 3:
            raise ValueError(f"path ensemble must be 3-d (index, path, time), got shape {v.shape}")
        if v.shape[0] != self.grids.index.n_index or v.shape[2] != self.grids.time.n_steps + 1:
            raise ValueError(f"shape {v.shape} does not match grids")

    @property
    def n_index(self) -> int:
        return self.values.shape[0]

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]

    def at(self, t_idx: int) -> np.ndarray:
        return self.values[:, :, t_idx]

    def pooled(self, t_idx: int) -> np.ndarray:
        return self.values[:, :, t_idx].ravel()

    def mean_flow(self) -> "MeanFlow":
        return MeanFlow(path_mean(self.values), self.grids)


@dataclass(frozen=True)
class MeanFlow:
    """Deterministic array ``values[i, k]``: the path average at each index and time."""

    values: np.ndarray
    grids: Grids

    def __post_init__(self):
        n, k = self.grids.index.n_index, self.grids.time.n_steps + 1
        if self.values.shape != (n, k):
            raise ValueError(f"mean flow shape {self.values.shape} does not match grids ({n}, {k})")

    def to_csv(self, path) -> None:
        """Rows are time nodes, columns are index nodes; first column is time."""
        t = self.grids.time.nodes
        u = self.grids.index.nodes
        lines = ["t," + ",".join(f"u={x:.17g}" for x in u)]
        for k in range(t.shape[0]):
            row = [f"{t[k]:.17g}"] + [f"{x:.17g}" for x in self.values[:, k]]
            lines.append(",".join(row))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, grids: Grids) -> "MeanFlow":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(np.ascontiguousarray(data[:, 1:].T), grids)
