"""Command-line front end.

Exit codes: 0 all checks pass, 1 a verification failed or the run diverged,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .girsanov import InsufficientEffectiveSample, verify_girsanov
from .noise import generate_epi_brownian, save_noise
from .solver import NonFiniteState, mean_flow_ode_oracle, path_norm, solve_coupled, solve_picard
from .suites import counterexample_suite, elln_suite, verify_bm_suite

log = logging.getLogger("fubini_sde")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path: Path, obj) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _zscores(err, se):
    safe = np.where(se > 0, se, 1.0)
    return np.where(se > 0, err / safe, np.where(err > 1e-12, np.inf, 0.0))


class Run:
    def __init__(self, cfg: RunConfig, out: Path, workers: int, config_dir: Path | None):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.config_dir = config_dir
        self.csv = "csv" in cfg.output.formats

    def noise(self, grids=None):
        grids = grids or self.cfg.build_grids()
        noise = generate_epi_brownian(grids, self.cfg.n_paths, self.cfg.seed, workers=self.workers)
        if self.cfg.output.dump_noise:
            fmt = self.cfg.output.dump_noise
            save_noise(noise, self.out / f"noise.{fmt}", fmt)
        return noise

    def report(self, body: dict, name: str = "report.json") -> int:
        body = dict(body)
        body["config"] = self.cfg.echo()
        body["version"] = __version__
        write_json(self.out / name, body)
        status = "PASS" if body.get("pass") else "FAIL"
        for check in body.get("checks", []):
            log.info("%-40s %s", check["name"], "pass" if check["pass"] else "FAIL")
        print(f"{body['kind']}: {status} -> {self.out / name}")
        return EXIT_OK if body.get("pass") else EXIT_FAIL


def cmd_verify_bm(run: Run) -> int:
    v = run.cfg.verify
    noise = run.noise()
    if v.n_intervals > noise.n_steps:
        raise ConfigError(f"verify.n_intervals ({v.n_intervals}) exceeds grids.n_steps ({noise.n_steps})")
    report = verify_bm_suite(noise, v.alpha, v.n_intervals, v.n_indices, v.n_pairs, v.pair_alpha)
    if v.counterexample:
        ce = counterexample_suite(noise, v.alpha)
        report["counterexample"] = ce
        report["pass"] = report["pass"] and ce["pass"]
    return run.report(report)


def cmd_counterexample(run: Run) -> int:
    return run.report(counterexample_suite(run.noise(), run.cfg.verify.alpha))


def cmd_elln(run: Run) -> int:
    e = run.cfg.elln
    report, hist = elln_suite(run.cfg.grids.T, e.n_steps, run.cfg.n_paths, run.cfg.seed, e.n_small, e.n_large,
                              workers=run.workers)
    if run.csv:
        rows = []
        for label, (edges, counts) in hist.items():
            rows += [[label, float(edges[j]), float(edges[j + 1]), int(counts[j])] for j in range(counts.size)]
        _write_csv(run.out / "elln_hist.csv", ["grid", "lower", "upper", "count"], rows)
    return run.report(report)


def cmd_simulate(run: Run) -> int:
    cfg = run.cfg
    grids = cfg.build_grids()
    coeffs = cfg.build_coefficients()
    graphon = cfg.build_graphon(run.config_dir)
    ic = cfg.build_initial_condition()
    noise = run.noise(grids)
    s = cfg.solver
    summary = {"kind": "simulate_summary", "mode": s.mode}

    def picard():
        return solve_picard(grids, coeffs, graphon, ic, noise, s.tol, s.max_iter, workers=run.workers)

    try:
        if s.mode == "picard":
            res = picard()
            paths, flow = res.paths, res.flow
            summary["picard"] = {
                "iterations": res.iterations,
                "converged": res.converged,
                "residuals": res.residuals,
                "residuals_x_norm": res.residuals_x_norm,
                "residuals_time_integrated": res.residuals_time_integrated,
            }
        else:
            paths, flow = solve_coupled(grids, coeffs, graphon, ic, noise, workers=run.workers)
        if s.compare:
            if s.mode == "picard":
                _, other = solve_coupled(grids, coeffs, graphon, ic, noise, workers=run.workers)
            else:
                other = picard().flow
            se = float(np.max(paths.values.std(axis=1, ddof=1))) / math.sqrt(noise.n_paths)
            diff = float(np.max(np.abs(other.values - flow.values)))
            threshold = 5.0 * (se + s.tol)
            summary["comparison"] = {"sup_difference": diff, "threshold": threshold, "pass": diff <= threshold}
            print(f"picard vs coupled: sup |difference| = {diff:.3e} (threshold {threshold:.3e})")
    except NonFiniteState as exc:
        summary.update({"pass": False, "error": str(exc),
                        "checks": [{"name": "finite_state", "statistic": float(exc.step or 0), "p_value": None,
                                    "pass": False}],
                        "diverged_at": {"step": exc.step, "index": exc.index, "path": exc.path}})
        print(f"divergence: {exc}", file=sys.stderr)
        run.report(summary, "summary.json")
        return EXIT_FAIL

    K = grids.time.n_steps
    terminal = paths.pooled(K)
    summary["terminal"] = {
        "pooled_mean": float(terminal.mean()),
        "pooled_std_error": float(terminal.std(ddof=1) / math.sqrt(terminal.size)),
        "pooled_variance": float(terminal.var(ddof=1)),
        "index_mean_min": float(flow.values[:, K].min()),
        "index_mean_max": float(flow.values[:, K].max()),
    }
    summary["path_space_norm"] = path_norm(paths)
    checks = []
    if coeffs.drift_kind == "linear":
        # gate on the index-pooled mean flow; the per-cell maximum is reported only
        oracle = mean_flow_ode_oracle(grids, coeffs, graphon, ic)
        lam = grids.index.weights
        pooled = np.tensordot(lam, paths.values, axes=(0, 0))
        pooled_se = pooled.std(axis=0, ddof=1) / math.sqrt(noise.n_paths)
        pooled_err = np.abs(lam @ flow.values - lam @ oracle.values)
        z = _zscores(pooled_err, pooled_se)
        cell_se = paths.values.std(axis=1, ddof=1) / math.sqrt(noise.n_paths)
        cell_z = _zscores(np.abs(flow.values - oracle.values), cell_se)
        summary["oracle"] = {"pooled_mean_T": float(lam @ oracle.values[:, K]),
                             "max_abs_error": float(np.max(np.abs(flow.values - oracle.values))),
                             "max_z_pooled": float(z.max()), "max_z_per_index": float(cell_z.max())}
        checks.append({"name": "pooled_mean_flow_vs_ode_oracle", "statistic": float(z.max()), "p_value": None,
                       "pass": bool(z.max() <= 4.0)})
    if "comparison" in summary:
        checks.append({"name": "picard_vs_coupled", "statistic": summary["comparison"]["sup_difference"],
                       "p_value": None, "pass": summary["comparison"]["pass"]})
    if "picard" in summary:
        checks.append({"name": "picard_converged", "statistic": float(summary["picard"]["iterations"]),
                       "p_value": None, "pass": summary["picard"]["converged"]})
    summary["checks"] = checks
    summary["pass"] = all(c["pass"] for c in checks)

    if run.csv:
        flow.to_csv(run.out / "mean_flow.csv")
        if "picard" in summary:
            p = summary["picard"]
            rows = [[j + 1, p["residuals"][j], p["residuals_x_norm"][j], p["residuals_time_integrated"][j]]
                    for j in range(len(p["residuals"]))]
            _write_csv(run.out / "residuals.csv", ["sweep", "sup", "x_norm", "time_integrated"], rows)
    if cfg.output.dump_paths:
        np.save(run.out / "paths.npy", paths.values)
    return run.report(summary, "summary.json")


def cmd_girsanov(run: Run) -> int:
    g = run.cfg.girsanov
    if g is None or g.theta is None:
        raise ConfigError("the girsanov command needs a 'girsanov.theta' section in the config")
    theta = run.cfg.build_theta()
    noise = run.noise()
    try:
        report = verify_girsanov(noise, theta, g.alpha, g.n_pairs, g.n_mean_indices)
    except InsufficientEffectiveSample as exc:
        print(f"insufficient effective sample: {exc}", file=sys.stderr)
        return run.report({"kind": "girsanov_report", "pass": False, "error": str(exc), "checks": []})
    report["kind"] = "girsanov_report"
    return run.report(report)


COMMANDS = {
    "verify-bm": (cmd_verify_bm, "pooled and per-index Brownian checks on an e.p.i. ensemble"),
    "simulate": (cmd_simulate, "solve the graphon SDE system (coupled or Picard)"),
    "girsanov": (cmd_girsanov, "reweight by the exponential density and verify the shifted process"),
    "counterexample": (cmd_counterexample, "sign-flipped family: non-Gaussian marginals, Gaussian pool"),
    "elln": (cmd_elln, "index-average deviation scaling in the number of indices"),
}


def _global_flags(parser: argparse.ArgumentParser) -> None:
    sup = argparse.SUPPRESS
    parser.add_argument("--config", metavar="PATH", default=sup, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=sup, help="override the master seed")
    parser.add_argument("--workers", type=int, default=sup, help="worker threads (results do not depend on it)")
    parser.add_argument("--out", metavar="DIR", default=sup, help="output directory")
    parser.add_argument("--format", choices=("json", "csv"), action="append", default=sup,
                        help="output formats (repeatable); JSON reports are always written")
    parser.add_argument("-v", "--verbose", action="store_true", default=sup)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fubini-sde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_) in COMMANDS.items():
        _global_flags(sub.add_parser(name, help=help_, description=help_))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    opts = vars(args)
    if not opts.get("command"):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(opts.get("config"))
        updates = {}
        if "seed" in opts:
            updates["seed"] = opts["seed"]
        if updates or "format" in opts or "out" in opts:
            data = cfg.model_dump(mode="json")
            data.update(updates)
            if "format" in opts:
                data["output"]["formats"] = sorted(set(opts["format"]))
            if "out" in opts:
                data["output"]["directory"] = opts["out"]
            cfg = parse_config(data)
        workers = opts.get("workers", 1)
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        config_dir = Path(opts["config"]).resolve().parent if "config" in opts else None
        run = Run(cfg, out, workers, config_dir)
        return COMMANDS[opts["command"]][0](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
