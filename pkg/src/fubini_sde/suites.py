"""Statistical batteries run by the command line and the acceptance tests.

Each battery returns a JSON-ready dict with a list of ``checks`` (name,
statistic, p_value, pass) and an overall ``pass``.
"""

from __future__ import annotations

import numpy as np

from .ensemble import PathEnsemble
from .grids import Grids
from .noise import NoiseEnsemble, generate_epi_brownian, half_gaussian_mixture_sample, sign_flip_counterexample
from .solver import elln_check, elln_scaling
from .stattest import bonferroni, ks_test_normal, moment_check, pairwise_independence_check


def _check(name, statistic, p_value, passed, **extra) -> dict:
    out = {
        "name": name,
        "statistic": float(statistic),
        "p_value": None if p_value is None else float(p_value),
        "pass": bool(passed),
    }
    out.update(extra)
    return out


def interval_bounds(n_steps: int, n_intervals: int) -> list[tuple[int, int]]:
    """Split ``[0, K]`` into ``n_intervals`` disjoint, nearly equal step ranges."""
    if n_intervals < 1 or n_intervals > n_steps:
        raise ValueError(f"cannot split {n_steps} steps into {n_intervals} intervals")
    edges = np.linspace(0, n_steps, n_intervals + 1).round().astype(int)
    return [(int(edges[j]), int(edges[j + 1])) for j in range(n_intervals)]


def _increments(noise: NoiseEnsemble, s: int, t: int) -> np.ndarray:
    """``B_t - B_s`` as an ``(N, M)`` array."""
    out = np.zeros(noise.dB.shape[:2])
    for j in range(s, t):
        out += noise.dB[:, :, j]
    return out


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**63 - 1), tag])


def pooled_brownian_checks(noise: NoiseEnsemble, alpha: float = 0.01, n_intervals: int = 5, n_bins: int = 4) -> list[dict]:
    """Pooled increments are ``N(0, t - s)`` and increments over disjoint intervals are independent."""
    dt = noise.grids.time.dt
    bounds = interval_bounds(noise.n_steps, n_intervals)
    incs = [_increments(noise, s, t) for s, t in bounds]
    checks = []
    a = bonferroni(alpha, n_intervals)
    for (s, t), inc in zip(bounds, incs):
        r = ks_test_normal(inc.ravel(), 0.0, (t - s) * dt)
        checks.append(_check(f"pooled_increment_ks[{s}:{t}]", r.statistic, r.p_value, r.p_value >= a,
                             n_effective=r.n_effective))
    if n_intervals >= 2:
        a = bonferroni(alpha, n_intervals - 1)
        worst_p, worst_stat = 1.0, 0.0
        corr = []
        for j in range(n_intervals - 1):
            r = pairwise_independence_check(incs[j].ravel(), incs[j + 1].ravel(), n_bins)
            if r["p_value"] <= worst_p:
                worst_p, worst_stat = r["p_value"], r["statistic"]
            corr.append(float(np.corrcoef(incs[j].ravel(), incs[j + 1].ravel())[0, 1]))
        checks.append(_check("pooled_increment_independence", worst_stat, worst_p, worst_p >= a,
                             correlations=corr, correlation_bound=4.0 / np.sqrt(incs[0].size)))
    return checks


def per_index_checks(noise: NoiseEnsemble, alpha: float = 0.01, n_indices: int = 20, n_pairs: int = 50,
                     pair_alpha: float = 0.001, n_intervals: int = 5, n_bins: int = 4) -> list[dict]:
    """Each sampled index is a Brownian motion on its own; sampled index pairs are independent."""
    n = noise.n_index
    dt = noise.grids.time.dt
    rng = _rng(noise.seed, 0xB0)
    bounds = interval_bounds(noise.n_steps, n_intervals)
    idx = np.sort(rng.choice(n, size=min(n_indices, n), replace=False))
    a = bonferroni(alpha, len(idx))
    standardized = np.concatenate(
        [_increments(noise, s, t)[idx] / np.sqrt((t - s) * dt) for s, t in bounds], axis=1
    )
    pvals = []
    stats_ = []
    for row in standardized:
        r = ks_test_normal(row, 0.0, 1.0)
        pvals.append(r.p_value)
        stats_.append(r.statistic)
    checks = [_check("per_index_brownian_ks", max(stats_), min(pvals), min(pvals) >= a,
                     indices=idx.tolist(), alpha_per_index=a)]

    if n >= 2:
        B_T = noise.level_at(noise.n_steps)
        a = bonferroni(pair_alpha, n_pairs)
        pvals, stats_, pairs = [], [], []
        for _ in range(n_pairs):
            i, j = rng.choice(n, size=2, replace=False)
            r = pairwise_independence_check(B_T[i], B_T[j], n_bins)
            pvals.append(r["p_value"])
            stats_.append(r["statistic"])
            pairs.append([int(i), int(j)])
        checks.append(_check("pairwise_index_independence", max(stats_), min(pvals), min(pvals) >= a,
                             pairs=pairs, alpha_per_pair=a))
    return checks


def noise_elln_check(noise: NoiseEnsemble, bound_sd: float = 4.0, min_fraction: float = 0.99) -> dict:
    """Index averages of ``B_T`` per path stay within ``bound_sd * sqrt(T / N)`` of zero."""
    T = noise.grids.time.horizon
    avg = noise.grids.index.weights @ noise.level_at(noise.n_steps)
    band = bound_sd * np.sqrt(T / noise.n_index)
    frac = float(np.mean(np.abs(avg) <= band))
    return _check("index_average_elln", frac, None, frac >= min_fraction, band=float(band))


def verify_bm_suite(noise: NoiseEnsemble, alpha: float = 0.01, n_intervals: int = 5, n_indices: int = 20,
                    n_pairs: int = 50, pair_alpha: float = 0.001) -> dict:
    checks = pooled_brownian_checks(noise, alpha, n_intervals)
    checks += per_index_checks(noise, alpha, n_indices, n_pairs, pair_alpha, n_intervals)
    checks.append(noise_elln_check(noise))
    return {"kind": "verify_bm_report", "checks": checks, "pass": all(c["pass"] for c in checks)}


def counterexample_suite(noise: NoiseEnsemble, alpha: float = 0.01, n_indices: int = 10,
                         reject_p: float = 1e-6, mixture_paths: int | None = None) -> dict:
    """Sign-flipped levels: each index fails to be Gaussian while the pooled sample is ``N(0, t)``.

    Also checks the half-Gaussian mixture with the same seed.
    """
    K = noise.n_steps
    T = noise.grids.time.horizon
    u = noise.grids.index.nodes
    X = sign_flip_counterexample(noise)
    X_T = X.at(K)
    rng = _rng(noise.seed, 0xC0)
    idx = np.sort(rng.choice(noise.n_index, size=min(n_indices, noise.n_index), replace=False))
    pvals = [ks_test_normal(X_T[i], 0.0, T).p_value for i in idx]
    stats_ = [ks_test_normal(X_T[i], 0.0, T).statistic for i in idx]
    checks = [_check("per_index_rejects_normal", min(stats_), max(pvals), max(pvals) < reject_p,
                     indices=idx.tolist(), reject_below=reject_p)]
    upper = u >= 0.5
    signs_ok = bool(np.all(X.values[upper] >= 0.0) and np.all(X.values[~upper] <= 0.0))
    checks.append(_check("sign_support", float(signs_ok), None, signs_ok))
    balanced = int(upper.sum()) * 2 == noise.n_index
    r = ks_test_normal(X_T.ravel(), 0.0, T)
    checks.append(_check("pooled_accepts_normal", r.statistic, r.p_value, r.p_value >= alpha,
                         n_effective=r.n_effective, balanced_split=balanced))

    m = mixture_paths or noise.n_paths
    mix = half_gaussian_mixture_sample(noise.grids.index, m, T, noise.seed)
    mc = moment_check(mix.ravel(), 0.0, T)
    checks.append(_check("mixture_pooled_mean", mc["z_mean"], None, abs(mc["z_mean"]) <= 4.0))
    half_mean = np.sqrt(2.0 * T / np.pi)
    zs = [moment_check(mix[i], half_mean, T)["z_mean"] for i in np.nonzero(upper)[0][:n_indices]]
    worst = float(np.max(np.abs(zs))) if zs else 0.0
    checks.append(_check("mixture_half_normal_mean", worst, None, worst <= 4.0, target_mean=float(half_mean)))
    return {"kind": "counterexample_report", "checks": checks, "pass": all(c["pass"] for c in checks)}


def elln_suite(horizon: float, n_steps: int, n_paths: int, seed: int, n_small: int = 64, n_large: int = 256,
               window=(1.5, 2.8), workers: int = 1, n_bins: int = 30) -> tuple[dict, dict]:
    """Index-average deviations for pure Brownian states at two index resolutions.

    Returns the report and histogram data for the deviations.
    """
    out = {}
    hist = {}
    reports = {}
    for label, n in (("small", n_small), ("large", n_large)):
        noise = generate_epi_brownian(Grids.make(horizon, n_steps, n), n_paths, seed, workers=workers)
        pe = PathEnsemble(noise.levels(), noise.grids, noise)
        rep = elln_check(pe, n_steps)
        per_path = rep.pop("index_average_per_path")
        dev = np.abs(per_path - rep["grand_mean"])
        counts, edges = np.histogram(dev, bins=n_bins)
        hist[label] = (edges, counts)
        sd_band = 1.96 * np.sqrt(horizon / n)
        rep["clt_p95"] = float(sd_band)
        reports[label] = rep
    scaling = elln_scaling(reports["small"], reports["large"], window)
    checks = [
        _check("p95_scaling", scaling["ratio"], None, scaling["pass"], expected=scaling["expected_ratio"],
               window=list(window)),
    ]
    for label in ("small", "large"):
        rep = reports[label]
        rel = abs(rep["p95_deviation"] / rep["clt_p95"] - 1.0)
        checks.append(_check(f"p95_matches_clt_{label}", rel, None, rel <= 0.3, n_index=rep["n_index"]))
    out = {"kind": "elln_report", "checks": checks, "reports": reports, "scaling": scaling,
           "pass": all(c["pass"] for c in checks)}
    return out, hist
