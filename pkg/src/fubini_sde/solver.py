"""Graphon McKean-Vlasov dynamics on the (index x path) discretization.

Each state ``Theta[i, m]`` follows

    dTheta = b(Theta, W[Phi_t](u_i)) dt + sigma(Theta) dB,    Phi_t(u) = E[Theta_t(u, .)]

where the expectation at fixed index is replaced by the average over paths.
Two solvers are provided: a coupled particle scheme that re-estimates the mean
flow at every step, and the Picard iteration that freezes the flow, solves the
decoupled equations and re-averages until the flow stops moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import MeanFlow, PathEnsemble, path_mean
from .graphon import Graphon, QuadratureKernel, apply_W, build_quadrature_kernel
from .grids import Grids
from .noise import NoiseEnsemble
from .rng import STREAM_INITIAL, keyed_normals
from .stattest import path_space_norm

DRIFT_KINDS = ("linear", "lipschitz_tanh")
DIFFUSION_KINDS = ("linear", "constant")
INITIAL_KINDS = ("constant", "affine", "sine", "iid_normal")


class NonFiniteState(FloatingPointError):
    def __init__(self, step: int | None, index: int, path: int):
        self.step, self.index, self.path = step, index, path
        super().__init__(f"non-finite state at step {step}, index {index}, path {path}")


@dataclass(frozen=True)
class Coefficients:
    """Drift ``b(x, m)`` and diffusion ``sigma(x)``.

    drift ``linear``: ``a x + c m + d``; ``lipschitz_tanh``: ``a tanh(x) + c tanh(m) + d``.
    diffusion ``linear``: ``s x + s0``; ``constant``: ``s0``.
    Both satisfy the Lipschitz and linear-growth bounds with the constant
    :attr:`lipschitz_constant`.
    """

    drift_kind: str = "linear"
    a: float = 0.0
    c: float = 0.0
    d: float = 0.0
    diffusion_kind: str = "constant"
    s: float = 0.0
    s0: float = 0.0

    def __post_init__(self):
        if self.drift_kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.drift_kind!r}; expected one of {DRIFT_KINDS}")
        if self.diffusion_kind not in DIFFUSION_KINDS:
            raise ValueError(f"unknown diffusion kind {self.diffusion_kind!r}; expected one of {DIFFUSION_KINDS}")
        for name in ("a", "c", "d", "s", "s0"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"coefficient {name} must be finite")
        if self.diffusion_kind == "constant" and self.s != 0.0:
            raise ValueError("constant diffusion takes only s0")

    @property
    def lipschitz_constant(self) -> float:
        return max(abs(self.a), abs(self.c), abs(self.s))

    @property
    def interacting(self) -> bool:
        return self.c != 0.0

    def drift(self, x, m):
        if self.drift_kind == "linear":
            return self.a * x + self.c * m + self.d
        return self.a * np.tanh(x) + self.c * np.tanh(m) + self.d

    def diffusion(self, x):
        if self.diffusion_kind == "linear":
            return self.s * x + self.s0
        return np.full_like(x, self.s0)

    @classmethod
    def from_spec(cls, spec: dict) -> "Coefficients":
        drift = spec.get("drift", {})
        diff = spec.get("diffusion", {})
        return cls(
            drift_kind=drift.get("kind", "linear"),
            a=float(drift.get("a", 0.0)),
            c=float(drift.get("c", 0.0)),
            d=float(drift.get("d", 0.0)),
            diffusion_kind=diff.get("kind", "constant"),
            s=float(diff.get("s", 0.0)),
            s0=float(diff.get("s0", 0.0)),
        )


@dataclass(frozen=True)
class InitialCondition:
    """Initial state ``Theta_0(u, omega)``.

    ``constant``: ``x0``; ``affine``: ``x0 + slope u``; ``sine``: ``x0 + slope sin(2 pi u)``;
    ``iid_normal``: independent ``N(mean, var)`` draws per ``(index, path)``.
    """

    kind: str = "constant"
    x0: float = 1.0
    slope: float = 0.0
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial condition kind {self.kind!r}; expected one of {INITIAL_KINDS}")
        if self.kind == "iid_normal" and not self.var >= 0:
            raise ValueError("iid_normal variance must be non-negative")
        for name in ("x0", "slope", "mean", "var"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"initial condition field {name} must be finite")

    def index_mean(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full(u.shape, self.x0)
        if self.kind == "affine":
            return self.x0 + self.slope * u
        if self.kind == "sine":
            return self.x0 + self.slope * np.sin(2.0 * np.pi * u)
        return np.full(u.shape, self.mean)

    def sample(self, grids: Grids, n_paths: int, seed: int, workers: int = 1) -> np.ndarray:
        n = grids.index.n_index
        base = self.index_mean(grids.index.nodes)[:, None]
        if self.kind != "iid_normal":
            return np.repeat(base, n_paths, axis=1)
        z = keyed_normals(seed, STREAM_INITIAL, n, n_paths, 1, workers=workers)[:, :, 0]
        return base + np.sqrt(self.var) * z

    @classmethod
    def from_spec(cls, spec: dict) -> "InitialCondition":
        return cls(**{k: spec[k] for k in ("kind", "x0", "slope", "mean", "var") if k in spec})


def _check_finite(state: np.ndarray, step: int | None) -> None:
    if not np.all(np.isfinite(state)):
        i, m = np.argwhere(~np.isfinite(state))[0]
        raise NonFiniteState(step, int(i), int(m))


def euler_step(state, phi, coeffs: Coefficients, kernel: QuadratureKernel, dB, dt: float, step: int | None = None):
    """One Euler-Maruyama step for every ``(index, path)``.

    ``phi`` is the mean-flow column at the current time; the interaction seen by
    index ``i`` is ``W[phi](u_i)``.
    """
    state = np.asarray(state, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if state.shape != dB.shape or state.shape[0] != kernel.n:
        raise ValueError(f"inconsistent shapes: state {state.shape}, dB {dB.shape}, kernel {kernel.n}")
    interaction = apply_W(kernel, phi)[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = state + coeffs.drift(state, interaction) * dt + coeffs.diffusion(state) * dB
    _check_finite(nxt, step)
    return nxt


def _initial_state(grids, ic, noise, workers):
    x0 = ic.sample(grids, noise.n_paths, noise.seed, workers=workers)
    _check_finite(x0, 0)
    return x0


def _validate(grids: Grids, noise: NoiseEnsemble) -> None:
    if noise.grids != grids:
        raise ValueError("noise ensemble was generated on different grids")


def solve_coupled(
    grids: Grids,
    coeffs: Coefficients,
    graphon: Graphon,
    ic: InitialCondition,
    noise: NoiseEnsemble,
    workers: int = 1,
) -> tuple[PathEnsemble, MeanFlow]:
    """Particle scheme: the path average at step ``k`` is taken before stepping."""
    _validate(grids, noise)
    kernel = build_quadrature_kernel(graphon, grids.index)
    dt = grids.time.dt
    K = grids.time.n_steps
    paths = np.empty((grids.index.n_index, noise.n_paths, K + 1))
    flow = np.empty((grids.index.n_index, K + 1))
    state = _initial_state(grids, ic, noise, workers)
    paths[:, :, 0] = state
    for k in range(K):
        flow[:, k] = path_mean(state)
        state = euler_step(state, flow[:, k], coeffs, kernel, noise.dB[:, :, k], dt, step=k)
        paths[:, :, k + 1] = state
    flow[:, K] = path_mean(state)
    return PathEnsemble(paths, grids, noise), MeanFlow(flow, grids)


def solve_frozen(grids, coeffs, kernel, x0, noise, frozen_flow) -> np.ndarray:
    """Decoupled solve with the interaction computed from a given flow."""
    dt = grids.time.dt
    K = grids.time.n_steps
    paths = np.empty((grids.index.n_index, noise.n_paths, K + 1))
    state = x0
    paths[:, :, 0] = state
    for k in range(K):
        state = euler_step(state, frozen_flow[:, k], coeffs, kernel, noise.dB[:, :, k], dt, step=k)
        paths[:, :, k + 1] = state
    return paths


@dataclass
class PicardResult:
    paths: PathEnsemble
    flow: MeanFlow
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    residuals_x_norm: list[float] = field(default_factory=list)
    residuals_time_integrated: list[float] = field(default_factory=list)

    def __iter__(self):
        # unpacks as (paths, flow, iterations, residuals)
        return iter((self.paths, self.flow, self.iterations, self.residuals))

    def contraction_ratios(self) -> list[float]:
        r = self.residuals
        return [r[j + 1] / r[j] if r[j] > 0 else 0.0 for j in range(len(r) - 1)]


def solve_picard(
    grids: Grids,
    coeffs: Coefficients,
    graphon: Graphon,
    ic: InitialCondition,
    noise: NoiseEnsemble,
    tol: float = 1e-4,
    max_iter: int = 50,
    workers: int = 1,
) -> PicardResult:
    """Fixed-point iteration on the mean flow.

    Starts from the initial path average held constant in time. Each sweep
    solves the decoupled equations with the current flow frozen inside the
    interaction and replaces the flow by the resulting path average. Sweep
    ``j`` records ``sup_{i,k} |m^j - m^{j-1}|``; iteration stops at the first
    sweep below ``tol``, and ``iterations`` counts the sweeps before it, i.e.
    how many updates were needed to reach the fixed point.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    _validate(grids, noise)
    kernel = build_quadrature_kernel(graphon, grids.index)
    lam = grids.index.weights
    dt = grids.time.dt
    x0 = _initial_state(grids, ic, noise, workers)
    flow = np.repeat(path_mean(x0)[:, None], grids.time.n_steps + 1, axis=1)
    result = PicardResult(None, None, 0, False)
    for sweep in range(1, max_iter + 1):
        paths = solve_frozen(grids, coeffs, kernel, x0, noise, flow)
        new_flow = path_mean(paths)
        diff = new_flow - flow
        sq = diff * diff
        result.residuals.append(float(np.max(np.abs(diff))))
        result.residuals_x_norm.append(float(np.sqrt(np.sum(lam * sq.max(axis=1)))))
        integrated = 0.5 * (sq[:, 1:] + sq[:, :-1]).sum(axis=1) * dt
        result.residuals_time_integrated.append(float(np.sqrt(np.sum(lam * integrated))))
        flow = new_flow
        if result.residuals[-1] < tol:
            result.converged = True
            result.iterations = sweep - 1
            break
    else:
        result.iterations = max_iter
    result.paths = PathEnsemble(paths, grids, noise)
    result.flow = MeanFlow(flow, grids)
    return result


def mean_flow_ode_oracle(
    grids: Grids, coeffs: Coefficients, graphon: Graphon, ic: InitialCondition, refine: int = 10
) -> MeanFlow:
    """Mean flow of a linear-drift system from ``phi' = a phi + c W[phi] + d`` (RK4).

    The diffusion term has zero mean, so the path average obeys this
    deterministic integro-ODE. Integrated on a ``refine``-times finer grid.
    """
    if coeffs.drift_kind != "linear":
        raise ValueError("the mean-flow ODE oracle is defined for linear drift only")
    kernel = build_quadrature_kernel(graphon, grids.index)
    a, c, d = coeffs.a, coeffs.c, coeffs.d

    def rhs(phi):
        return a * phi + c * apply_W(kernel, phi) + d

    K = grids.time.n_steps
    h = grids.time.dt / refine
    phi = ic.index_mean(grids.index.nodes)
    out = np.empty((grids.index.n_index, K + 1))
    out[:, 0] = phi
    for k in range(K):
        for _ in range(refine):
            k1 = rhs(phi)
            k2 = rhs(phi + 0.5 * h * k1)
            k3 = rhs(phi + 0.5 * h * k2)
            k4 = rhs(phi + h * k3)
            phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, k + 1] = phi
    return MeanFlow(out, grids)


def elln_check(pe: PathEnsemble, t_idx: int) -> dict:
    """Per-path index averages against the pooled mean at one time node.

    Only meaningful for decoupled dynamics driven by independent noise across
    indices; the caller is responsible for that.
    """
    x = pe.at(t_idx)
    lam = pe.grids.index.weights
    per_path = lam @ x
    grand = float(np.mean(per_path))
    dev = np.abs(per_path - grand)
    return {
        "t_idx": int(t_idx),
        "n_index": pe.n_index,
        "n_paths": pe.n_paths,
        "grand_mean": grand,
        "max_deviation": float(dev.max()),
        "p95_deviation": float(np.quantile(dev, 0.95)),
        "index_average_per_path": per_path,
    }


def elln_scaling(small: dict, large: dict, window=(1.5, 2.8)) -> dict:
    """Compare 95th-percentile deviations of two :func:`elln_check` reports."""
    ratio = small["p95_deviation"] / large["p95_deviation"]
    expected = float(np.sqrt(large["n_index"] / small["n_index"]))
    return {
        "n_small": small["n_index"],
        "n_large": large["n_index"],
        "ratio": float(ratio),
        "expected_ratio": expected,
        "window": list(window),
        "pass": bool(window[0] <= ratio <= window[1]),
    }


def path_norm(pe: PathEnsemble) -> float:
    """Weighted path-space norm: sup over time, then averaged over ``(u, omega)``."""
    return path_space_norm(pe.values, pe.grids.index.weights)
