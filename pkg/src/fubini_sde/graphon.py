"""Graphon kernels and the interaction operator they induce on the index grid.

The operator acts on functions of the index variable as
``W[eta](u) = int_0^1 w(u, v) eta(v) dv``; on the midpoint grid it becomes the
matrix-vector product ``sum_j K_ij eta_j lambda_j`` with ``K_ij = w(u_i, u_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grids import IndexGrid

GRAPHON_KINDS = ("constant", "product", "min", "piecewise")


class GraphonError(ValueError):
    pass


@dataclass(frozen=True)
class Graphon:
    """Symmetric kernel ``w: [0,1]^2 -> [0,1]``.

    ``kind`` is one of ``constant`` (``w = p``), ``product`` (``w = u v``),
    ``min`` (``w = min(u, v)``) or ``piecewise`` (block values from a symmetric
    matrix over a uniform partition of the unit square). Symmetry and range are
    checked once here, never per evaluation.
    """

    kind: str
    p: float = 1.0
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in GRAPHON_KINDS:
            raise GraphonError(f"unknown graphon kind {self.kind!r}; expected one of {GRAPHON_KINDS}")
        if self.kind == "constant":
            if not (0.0 <= self.p <= 1.0):
                raise GraphonError(f"constant graphon value must lie in [0, 1], got {self.p}")
        if self.kind == "piecewise":
            if self.matrix is None:
                raise GraphonError("piecewise graphon requires a matrix")
            mat = np.array(self.matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
                raise GraphonError(f"piecewise matrix must be square and non-empty, got shape {mat.shape}")
            if not np.all(np.isfinite(mat)) or mat.min() < 0.0 or mat.max() > 1.0:
                raise GraphonError("piecewise matrix entries must lie in [0, 1]")
            if not np.array_equal(mat, mat.T):
                raise GraphonError("piecewise matrix must equal its transpose")
            mat.setflags(write=False)
            object.__setattr__(self, "matrix", mat)

    @classmethod
    def constant(cls, p: float) -> "Graphon":
        return cls("constant", p=float(p))

    @classmethod
    def product(cls) -> "Graphon":
        return cls("product")

    @classmethod
    def min(cls) -> "Graphon":
        return cls("min")

    @classmethod
    def piecewise(cls, matrix) -> "Graphon":
        return cls("piecewise", matrix=np.asarray(matrix, dtype=float))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Graphon":
        mat = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls.piecewise(mat)

    @classmethod
    def from_spec(cls, spec: dict, base_dir: str | Path | None = None) -> "Graphon":
        """Build from a config mapping such as ``{"kind": "constant", "p": 0.5}``.

        Piecewise graphons take either ``matrix`` (nested lists) or ``csv`` (a
        path, resolved against ``base_dir`` when relative).
        """
        kind = spec.get("kind")
        if kind == "constant":
            return cls.constant(spec.get("p", 1.0))
        if kind == "product":
            return cls.product()
        if kind == "min":
            return cls.min()
        if kind == "piecewise":
            if "matrix" in spec:
                return cls.piecewise(spec["matrix"])
            if "csv" in spec:
                path = Path(spec["csv"])
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                return cls.from_csv(path)
            raise GraphonError("piecewise graphon spec needs 'matrix' or 'csv'")
        raise GraphonError(f"unknown graphon kind {kind!r}; expected one of {GRAPHON_KINDS}")

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "p": self.p}
        if self.kind == "piecewise":
            return {"kind": "piecewise", "matrix": self.matrix.tolist()}
        return {"kind": self.kind}

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "constant":
            return np.full(np.broadcast(u, v).shape, self.p)
        if self.kind == "product":
            return u * v
        if self.kind == "min":
            return np.minimum(u, v)
        n = self.matrix.shape[0]
        bu = np.clip(np.floor(u * n).astype(int), 0, n - 1)
        bv = np.clip(np.floor(v * n).astype(int), 0, n - 1)
        return self.matrix[bu, bv]


@dataclass(frozen=True)
class QuadratureKernel:
    """Kernel matrix ``K_ij = w(u_i, u_j)`` together with the quadrature weights."""

    matrix: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def build_quadrature_kernel(graphon: Graphon, grid: IndexGrid) -> QuadratureKernel:
    u = grid.nodes
    n = grid.n_index
    iu, ju = np.triu_indices(n)
    upper = graphon(u[iu], u[ju])
    mat = np.empty((n, n))
    mat[iu, ju] = upper
    mat[ju, iu] = upper
    if mat.min() < 0.0 or mat.max() > 1.0:
        raise GraphonError("graphon values outside [0, 1] on the grid")
    mat.setflags(write=False)
    weights = grid.weights
    weights.setflags(write=False)
    return QuadratureKernel(mat, weights)


def apply_W(kernel: QuadratureKernel, eta) -> np.ndarray:
    """Discrete interaction operator: ``out_i = sum_j K_ij eta_j lambda_j``."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (kernel.n,):
        raise ValueError(f"expected a vector of length {kernel.n}, got shape {eta.shape}")
    return kernel.matrix @ (eta * kernel.weights)


def weighted_norm(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.sum(weights * values * values)))


def operator_norm_check(kernel: QuadratureKernel, trials: int = 100, rng_seed: int = 0) -> dict:
    """Largest observed ``||W eta|| / ||eta||`` in the weighted L2 norm.

    Probes are the constant vector, the leading eigenvector of the weighted
    operator, and ``trials`` standard normal vectors. The discrete operator is
    bounded by one whenever all kernel entries lie in ``[0, 1]``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    lam = kernel.weights
    root = np.sqrt(lam)
    sym = root[:, None] * kernel.matrix * root[None, :]
    eigvals, eigvecs = np.linalg.eigh(sym)
    top = int(np.argmax(np.abs(eigvals)))
    spectral_norm = float(abs(eigvals[top]))

    rng = np.random.default_rng(rng_seed)
    probes = [np.ones(kernel.n), eigvecs[:, top] / root]
    probes.extend(rng.standard_normal((trials, kernel.n)))

    ratios = []
    for eta in probes:
        denom = weighted_norm(eta, lam)
        if denom == 0.0:
            continue
        ratios.append(weighted_norm(apply_W(kernel, eta), lam) / denom)
    return {
        "max_ratio": float(max(ratios)),
        "spectral_norm": spectral_norm,
        "n_probes": len(ratios),
        "bounded": bool(max(ratios) <= 1.0 + 1e-12),
    }
