"""Exponential density processes and the change of measure they define on the pooled space.

For an adapted drift ``theta`` the density is

    E_t = exp( int_0^t theta dB - 1/2 int_0^t theta^2 ds ),

accumulated in log space with left-endpoint (Ito) evaluation. Reweighting the
pooled ``(index, path)`` sample by ``E_T`` turns ``W = B - int theta ds`` into a
standard Brownian motion, while each fixed-index ``W^u`` keeps its original law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .ensemble import PathEnsemble
from .noise import NoiseEnsemble
from .stattest import (
    InsufficientSample,
    WeightedSample,
    kish_ess,
    ks_test_normal,
    ks_test_normal_weighted,
    moment_check,
    pairwise_independence_check,
)

THETA_KINDS = ("constant", "time_function", "adapted_linear")
MIN_EFFECTIVE_SAMPLE = 1000


class InsufficientEffectiveSample(InsufficientSample):
    pass


@dataclass(frozen=True)
class ThetaProcess:
    """Adapted drift ``theta_{t,u}``.

    ``constant``: ``c``; ``time_function``: ``c + slope * t``;
    ``adapted_linear``: ``kappa * B_t^u`` (uses only the same index's past).
    """

    kind: str = "constant"
    c: float = 0.0
    slope: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in THETA_KINDS:
            raise ValueError(f"unknown theta kind {self.kind!r}; expected one of {THETA_KINDS}")
        for name in ("c", "slope", "kappa"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"theta field {name} must be finite")

    @classmethod
    def from_spec(cls, spec: dict) -> "ThetaProcess":
        return cls(**{k: spec[k] for k in ("kind", "c", "slope", "kappa") if k in spec})

    @property
    def is_zero(self) -> bool:
        if self.kind == "adapted_linear":
            return self.kappa == 0.0
        return self.c == 0.0 and (self.kind == "constant" or self.slope == 0.0)

    def at_step(self, noise: NoiseEnsemble, k: int, level: np.ndarray | None = None) -> np.ndarray:
        """``theta`` at node ``t_k`` for every ``(index, path)``.

        ``level`` may pass ``B_{t_k}`` when the caller already accumulates it.
        """
        shape = noise.dB.shape[:2]
        if self.kind == "constant":
            return np.full(shape, self.c)
        if self.kind == "time_function":
            return np.full(shape, self.c + self.slope * noise.grids.time.nodes[k])
        if level is None:
            level = noise.level_at(k)
        return self.kappa * level

    def integrated_mean(self, horizon: float) -> float:
        """``int_0^T E[theta_t] dt`` under the original measure."""
        if self.kind == "constant":
            return self.c * horizon
        if self.kind == "time_function":
            return self.c * horizon + 0.5 * self.slope * horizon**2
        return 0.0

    def novikov_closed_form(self, horizon: float) -> float:
        """Exact ``E exp(int_0^T theta^2 dt)`` for one index; ``inf`` when it diverges."""
        if self.kind == "constant":
            return float(np.exp(self.c**2 * horizon))
        if self.kind == "time_function":
            c, s, T = self.c, self.slope, horizon
            return float(np.exp(c * c * T + c * s * T**2 + s * s * T**3 / 3.0))
        # E exp(alpha int B^2) = cos(sqrt(2 alpha) T)^(-1/2) while sqrt(2 alpha) T < pi/2
        arg = np.sqrt(2.0) * abs(self.kappa) * horizon
        if arg >= 0.5 * np.pi:
            return float("inf")
        return float(np.cos(arg) ** -0.5)


@dataclass(frozen=True)
class DensityWeights:
    """``log E_{t_k}`` for every ``(index, path, k)``."""

    log_density: np.ndarray

    def log_at(self, k: int = -1) -> np.ndarray:
        return self.log_density[:, :, k]

    def density(self, k: int = -1) -> np.ndarray:
        return np.exp(self.log_at(k))

    def normalized(self, k: int = -1) -> np.ndarray:
        """Weights summing to one over the pooled sample, via a max-log shift."""
        lw = self.log_at(k)
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def pooled_mean(self, k: int = -1) -> float:
        lw = self.log_at(k).ravel()
        return float(np.exp(logsumexp(lw) - np.log(lw.size)))

    def pooled_ess(self, k: int = -1) -> float:
        return kish_ess(self.normalized(k).ravel())

    def path_marginal(self, k: int = -1, exclude=()) -> np.ndarray:
        """Index average of ``E`` per path: the weight the new measure puts on each path.

        Indices in ``exclude`` are left out of the average. A single index is
        null for the index measure, but on a finite grid it would otherwise
        leak its own tilt into the weight of its own path.
        """
        lw = self.log_at(k)
        keep = np.ones(lw.shape[0], dtype=bool)
        keep[list(exclude)] = False
        lw = lw[keep]
        shift = lw.max()
        return np.exp(lw - shift).mean(axis=0) * np.exp(shift)


def density_process(noise: NoiseEnsemble, theta: ThetaProcess) -> DensityWeights:
    dt = noise.grids.time.dt
    n, m, K = noise.dB.shape
    log_e = np.zeros((n, m, K + 1))
    level = np.zeros((n, m))
    for k in range(K):
        th = theta.at_step(noise, k, level)
        log_e[:, :, k + 1] = log_e[:, :, k] + th * noise.dB[:, :, k] - 0.5 * th * th * dt
        level = level + noise.dB[:, :, k]
    return DensityWeights(log_e)


def shifted_process(noise: NoiseEnsemble, theta: ThetaProcess) -> PathEnsemble:
    """``W_k = B_k - sum_{j<k} theta_j dt``."""
    dt = noise.grids.time.dt
    n, m, K = noise.dB.shape
    out = np.zeros((n, m, K + 1))
    level = np.zeros((n, m))
    drift = np.zeros((n, m))
    for k in range(K):
        drift = drift + theta.at_step(noise, k, level) * dt
        level = level + noise.dB[:, :, k]
        out[:, :, k + 1] = level - drift
    return PathEnsemble(out, noise.grids, noise)


def novikov_estimate(noise: NoiseEnsemble, theta: ThetaProcess, heavy_tail_share: float = 0.5) -> dict:
    """Monte-Carlo estimate of ``E exp(int_0^T theta^2 dt)`` over the pooled sample.

    Flags a heavy tail when the largest 1% of terms carry more than
    ``heavy_tail_share`` of the sum. Reports; never raises on divergence.
    """
    dt = noise.grids.time.dt
    n, m, K = noise.dB.shape
    expo = np.zeros((n, m))
    level = np.zeros((n, m))
    for k in range(K):
        th = theta.at_step(noise, k, level)
        expo += th * th * dt
        level = level + noise.dB[:, :, k]
    x = expo.ravel()
    size = x.size
    shift = x.max()
    scaled = np.exp(x - shift)
    log_est = float(np.log(scaled.mean()) + shift)
    sd_scaled = float(scaled.std(ddof=1)) if size > 1 else 0.0
    estimate = float(np.exp(log_est)) if log_est < 709 else float("inf")
    std_error = sd_scaled / np.sqrt(size) * np.exp(shift) if shift < 709 else float("inf")
    top = max(1, size // 100)
    top_share = float(np.sort(scaled)[-top:].sum() / scaled.sum())
    closed = theta.novikov_closed_form(noise.grids.time.horizon)
    return {
        "estimate": estimate,
        "log_estimate": log_est,
        "std_error": float(std_error),
        "finite_flag": bool(np.isfinite(estimate)),
        "top1_share": top_share,
        "heavy_tail": bool(top_share > heavy_tail_share),
        "closed_form": closed if np.isfinite(closed) else None,
    }


def _check(name: str, statistic: float, p_value: float | None, passed: bool, **extra) -> dict:
    out = {"name": name, "statistic": float(statistic), "p_value": None if p_value is None else float(p_value)}
    out["pass"] = bool(passed)
    out.update(extra)
    return out


def verify_girsanov(
    noise: NoiseEnsemble,
    theta: ThetaProcess,
    alpha: float = 0.01,
    n_pairs: int = 20,
    n_mean_indices: int = 10,
    n_bins: int = 4,
    z_bound: float = 4.0,
) -> dict:
    """Run the pooled-Brownian and per-index checks under the reweighted measure.

    Gating checks: the reweighted pooled ``W_T`` and ``B_T`` are ``N(0, T)``,
    reweighted increments of ``W`` are independent, fixed-index ``W^u_T`` keep the
    mean ``-int E[theta] dt``, fixed-index pairs stay independent, and the
    density has unit mean. ``B_T`` and the index pairs are fixed-index laws, so
    they are weighted by the path marginal of the new measure (the index average
    of ``E_T`` on each path, leaving out the indices under test) rather than by
    the density at the same index.
    """
    T = noise.grids.time.horizon
    K = noise.n_steps
    dens = density_process(noise, theta)
    pooled_ess = dens.pooled_ess()
    if pooled_ess < MIN_EFFECTIVE_SAMPLE:
        raise InsufficientEffectiveSample(
            f"effective sample size {pooled_ess:.1f} < {MIN_EFFECTIVE_SAMPLE}; "
            "increase the number of paths or reduce the tilt"
        )
    w_pooled = dens.normalized().ravel()
    path_w = dens.path_marginal()
    path_ess = kish_ess(path_w)
    W = shifted_process(noise, theta)
    B_T = noise.level_at(K)
    W_T = W.at(K)
    n, m = W_T.shape
    rng = np.random.default_rng([int(noise.seed) & (2**63 - 1), 0x6952])

    checks = []
    n_gating = 5
    alpha_each = alpha / n_gating

    r = ks_test_normal_weighted(WeightedSample(W_T.ravel(), w_pooled), 0.0, T)
    checks.append(_check("pooled_W_T_weighted_ks", r.statistic, r.p_value, r.p_value >= alpha_each,
                         n_effective=r.n_effective))

    s_idx = K // 2
    W_s = W.at(s_idx)
    r = pairwise_independence_check((W_T - W_s).ravel(), W_s.ravel(), n_bins, weights=w_pooled)
    checks.append(_check("increment_independence_weighted", r["statistic"], r["p_value"],
                         r["p_value"] >= alpha_each, n_effective=r["n_effective"], s_idx=s_idx))

    target = -theta.integrated_mean(T)
    idx = np.sort(rng.choice(n, size=min(n_mean_indices, n), replace=False))
    zs = [moment_check(W_T[i], target, T)["z_mean"] for i in idx]
    worst = float(np.max(np.abs(zs)))
    checks.append(_check("per_index_mean_unweighted", worst, 2.0 * stats.norm.sf(worst), worst <= z_bound,
                         target_mean=target, indices=idx.tolist(), z_scores=[float(z) for z in zs]))

    loo = np.stack([dens.path_marginal(exclude=(i,)) for i in range(n)])
    r = ks_test_normal_weighted(WeightedSample(B_T.ravel(), loo.ravel()), 0.0, T)
    checks.append(_check("pooled_B_T_weighted_ks", r.statistic, r.p_value, r.p_value >= alpha_each,
                         n_effective=r.n_effective))

    pair_alpha = alpha_each / n_pairs
    stats_, pvals, pairs = [], [], []
    for _ in range(n_pairs):
        i, j = rng.choice(n, size=2, replace=False)
        res = pairwise_independence_check(W_T[i], W_T[j], n_bins, weights=dens.path_marginal(exclude=(i, j)))
        stats_.append(res["statistic"])
        pvals.append(res["p_value"])
        pairs.append([int(i), int(j)])
    checks.append(_check("pairwise_independence_weighted", max(stats_), min(pvals), min(pvals) >= pair_alpha,
                         pairs=pairs, alpha_per_pair=pair_alpha))

    mean_e = dens.pooled_mean()
    e_T = dens.density().ravel()
    se = float(e_T.std(ddof=1) / np.sqrt(e_T.size))
    z = (mean_e - 1.0) / se if se > 0 else 0.0
    checks.append(_check("density_unit_mean", z, 2.0 * stats.norm.sf(abs(z)), abs(z) <= z_bound,
                         mean=mean_e, std_error=se))

    # informational
    info = []
    per_path = dens.density().mean(axis=0)
    var_e = float(e_T.var(ddof=1))
    band = z_bound * np.sqrt(var_e / n)
    frac = float(np.mean(np.abs(per_path - 1.0) <= band)) if var_e > 0 else 1.0
    info.append(_check("elln_density_per_path", frac, None, frac >= 0.99, band=float(band)))

    shift = theta.integrated_mean(T)
    if theta.kind != "adapted_linear":
        r = ks_test_normal_weighted(WeightedSample(B_T.ravel(), w_pooled), shift, T)
        info.append(_check("same_index_weighted_B_T_tilted", r.statistic, r.p_value, r.p_value >= alpha,
                           tilted_mean=shift))

    agree = 0
    inv_idx = np.sort(rng.choice(n, size=min(20, n), replace=False))
    for i in inv_idx:
        plain = ks_test_normal(W_T[i], 0.0, T).reject_at(alpha)
        weighted = ks_test_normal_weighted(WeightedSample(W_T[i], loo[i]), 0.0, T).reject_at(alpha)
        agree += plain == weighted
    info.append(_check("individual_law_invariance", agree / len(inv_idx), None, agree == len(inv_idx)))

    nov = novikov_estimate(noise, theta)
    return {
        "theta": {"kind": theta.kind, "c": theta.c, "slope": theta.slope, "kappa": theta.kappa},
        "alpha": alpha,
        "checks": checks,
        "diagnostics": info,
        "novikov": {"estimate": nov["estimate"], "std_error": nov["std_error"], "flag": nov["heavy_tail"],
                    "closed_form": nov["closed_form"]},
        "effective_sample_size": {"pooled": pooled_ess, "path_marginal": path_ess, "pooled_size": int(n * m)},
        "weights_uniform": bool(theta.is_zero),
        "pass": all(ch["pass"] for ch in checks),
    }
