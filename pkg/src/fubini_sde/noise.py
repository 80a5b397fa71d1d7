"""Essentially pairwise independent Brownian ensembles and the sign-flip counterexamples."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import PathEnsemble
from .grids import Grids, IndexGrid, TimeGrid
from .rng import STREAM_BROWNIAN, STREAM_MIXTURE, keyed_normals

DUMP_MAGIC = "fubini-noise-v1"


@dataclass(frozen=True)
class NoiseEnsemble:
    """Brownian increments ``dB[i, m, k] ~ N(0, dt)``, independent over ``(i, m, k)``.

    Levels are cumulative sums along the time axis with ``B_0 = 0``.
    """

    dB: np.ndarray
    grids: Grids
    seed: int

    def __post_init__(self):
        n, k = self.grids.index.n_index, self.grids.time.n_steps
        if self.dB.ndim != 3 or self.dB.shape[0] != n or self.dB.shape[2] != k:
            raise ValueError(f"increment tensor shape {self.dB.shape} does not match grids")
        self.dB.setflags(write=False)

    @property
    def n_index(self) -> int:
        return self.dB.shape[0]

    @property
    def n_paths(self) -> int:
        return self.dB.shape[1]

    @property
    def n_steps(self) -> int:
        return self.dB.shape[2]

    def level_at(self, k: int) -> np.ndarray:
        """``B_{t_k}`` as an ``(N, M)`` array, accumulated in time order."""
        if not 0 <= k <= self.n_steps:
            raise IndexError(f"time index {k} outside [0, {self.n_steps}]")
        out = np.zeros(self.dB.shape[:2])
        for j in range(k):
            out += self.dB[:, :, j]
        return out

    def levels(self) -> np.ndarray:
        """Full level tensor ``(N, M, K + 1)``; same rounding as :meth:`level_at`."""
        out = np.zeros(self.dB.shape[:2] + (self.n_steps + 1,))
        np.cumsum(self.dB, axis=2, out=out[:, :, 1:])
        return out

    def as_paths(self) -> PathEnsemble:
        return PathEnsemble(self.levels(), self.grids, self)

    def coarsen(self, factor: int) -> "NoiseEnsemble":
        """Sum blocks of ``factor`` consecutive increments (same paths, coarser grid)."""
        factor = int(factor)
        if factor < 1 or self.n_steps % factor:
            raise ValueError(f"cannot coarsen {self.n_steps} steps by {factor}")
        n, m, k = self.dB.shape
        coarse = self.dB.reshape(n, m, k // factor, factor).sum(axis=3)
        grids = Grids(TimeGrid(self.grids.time.horizon, k // factor), self.grids.index)
        return NoiseEnsemble(coarse, grids, self.seed)

    def header(self) -> dict:
        return {
            "format": DUMP_MAGIC,
            "N": self.n_index,
            "M": self.n_paths,
            "K": self.n_steps,
            "T": self.grids.time.horizon,
            "seed": int(self.seed),
        }


def generate_epi_brownian(grids: Grids, n_paths: int, seed: int, workers: int = 1) -> NoiseEnsemble:
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"n_paths must be a positive integer, got {n_paths!r}")
    z = keyed_normals(
        seed, STREAM_BROWNIAN, grids.index.n_index, int(n_paths), grids.time.n_steps, workers=workers
    )
    z *= np.sqrt(grids.time.dt)
    return NoiseEnsemble(z, grids, int(seed))


def pooled_increments(noise: NoiseEnsemble, s_idx: int, t_idx: int) -> np.ndarray:
    """Flattened ``B_t - B_s`` over every ``(index, path)`` pair."""
    if not 0 <= s_idx < t_idx <= noise.n_steps:
        raise ValueError(f"need 0 <= s_idx < t_idx <= {noise.n_steps}, got ({s_idx}, {t_idx})")
    out = np.zeros(noise.dB.shape[:2])
    for j in range(s_idx, t_idx):
        out += noise.dB[:, :, j]
    return out.ravel()


def _index_signs(grid: IndexGrid) -> np.ndarray:
    return np.where(grid.nodes >= 0.5, 1.0, -1.0)


def sign_flip_counterexample(noise: NoiseEnsemble) -> PathEnsemble:
    """``X = |B|`` on indices ``u >= 1/2`` and ``X = -|B|`` below, applied to levels."""
    signs = _index_signs(noise.grids.index)
    x = np.abs(noise.levels())
    x *= signs[:, None, None]
    return PathEnsemble(x, noise.grids, noise)


def half_gaussian_mixture_sample(grid: IndexGrid, n_paths: int, t: float, seed: int, workers: int = 1) -> np.ndarray:
    """``(N, M)`` draws: ``|Z| sqrt(t)`` for ``u >= 1/2``, ``-|Z| sqrt(t)`` below."""
    if not t > 0:
        raise ValueError("t must be positive")
    z = keyed_normals(seed, STREAM_MIXTURE, grid.n_index, n_paths, 1, workers=workers)[:, :, 0]
    return _index_signs(grid)[:, None] * np.abs(z) * np.sqrt(t)


def save_noise(noise: NoiseEnsemble, path: str | Path, fmt: str = "bin") -> None:
    """Write increments row-major in ``(i, m, k)`` order after a one-line header.

    ``bin``: JSON header line, then little-endian float64 bytes.
    ``csv``: ``#``-prefixed JSON header line, then one row of ``K`` values per ``(i, m)``.
    """
    head = json.dumps(noise.header(), sort_keys=True)
    flat = np.ascontiguousarray(noise.dB, dtype="<f8")
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(head.encode() + b"\n")
            fh.write(flat.tobytes(order="C"))
    elif fmt == "csv":
        rows = flat.reshape(-1, noise.n_steps)
        with open(path, "w", newline="\n") as fh:
            fh.write("# " + head + "\n")
            for row in rows:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    else:
        raise ValueError(f"unknown dump format {fmt!r}")


def load_noise(path: str | Path) -> NoiseEnsemble:
    with open(path, "rb") as fh:
        first = fh.readline().decode()
        rest = fh.read()
    csv = first.startswith("#")
    head = json.loads(first[1:] if csv else first)
    if head.get("format") != DUMP_MAGIC:
        raise ValueError(f"{path}: not a noise dump")
    n, m, k = head["N"], head["M"], head["K"]
    if csv:
        data = np.loadtxt(rest.decode().splitlines(), delimiter=",", ndmin=2)
    else:
        data = np.frombuffer(rest, dtype="<f8")
    dB = np.array(data, dtype=float).reshape(n, m, k)
    return NoiseEnsemble(dB, Grids.make(head["T"], k, n), head["seed"])
