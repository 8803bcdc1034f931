"""Command-line front end: simulate, estimate, sweep, verify.

Every command is a deterministic function of (config file, master seed):
outputs carry no timestamps, floats are printed with 12 significant
digits, and replication ordering is by index regardless of --jobs.

Exit codes: 0 success, 1 config/validation/check failure, 2 IO failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, ExperimentConfig, load_config
from .counts import build_counts, extend_counts
from .estimator import estimate_order, required_depth_cap
from .likelihood import lil_statistic, mixture_kernel
from .model import MarkovModel, read_model_file, sample_path, true_order
from .rng import derive_seed

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".12g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_round_floats(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _path_filename(replication: int) -> str:
    return f"path_{replication:05d}.txt"


def _write_path_file(path, symbols, m: int, seed: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"alphabet_size: {m}\n")
        fh.write(f"n: {len(symbols)}\n")
        fh.write(f"seed: {seed}\n")
        fh.write("symbols: " + " ".join(str(int(s)) for s in symbols) + "\n")


def _read_path_file(path) -> tuple[np.ndarray, int, int]:
    fields = {}
    with open(path) as fh:
        for line in fh:
            key, _, rest = line.partition(":")
            fields[key.strip()] = rest.strip()
    symbols = np.array(fields["symbols"].split(), dtype=np.int64)
    return symbols, int(fields["alphabet_size"]), int(fields["seed"])


def _replication_paths(config: ExperimentConfig, model: MarkovModel):
    """Yield (replication, seed, symbols); reads simulate output when its
    manifest is present in the output directory, samples inline otherwise."""
    manifest_file = os.path.join(config.out_dir, "manifest.json")
    n_max = max(config.n_grid)
    if os.path.exists(manifest_file):
        with open(manifest_file) as fh:
            manifest = json.load(fh)
        for entry in manifest["paths"]:
            symbols, _, seed = _read_path_file(
                os.path.join(config.out_dir, entry["file"])
            )
            if symbols.shape[0] < n_max:
                raise ConfigError(
                    f"experiment.n_grid: stored path {entry['file']} has "
                    f"{symbols.shape[0]} symbols, grid needs {n_max}"
                )
            yield entry["replication"], seed, symbols
    else:
        for i in range(config.replications):
            seed = derive_seed(config.seed, i)
            yield i, seed, sample_path(model, n_max, seed).symbols


def cmd_simulate(config: ExperimentConfig) -> int:
    model = read_model_file(config.model_file)
    os.makedirs(config.out_dir, exist_ok=True)
    n_max = max(config.n_grid)
    entries = []
    for i in range(config.replications):
        seed = derive_seed(config.seed, i)
        path = sample_path(model, n_max, seed)
        filename = _path_filename(i)
        _write_path_file(os.path.join(config.out_dir, filename), path.symbols, model.m, seed)
        entries.append({"replication": i, "seed": seed, "file": filename})
    _write_json(
        os.path.join(config.out_dir, "manifest.json"),
        {
            "command": "simulate",
            "master_seed": config.seed,
            "model_file": os.path.basename(config.model_file),
            "model_label": model.label(),
            "n": n_max,
            "replications": config.replications,
            "paths": entries,
        },
    )
    return EXIT_OK


def _replication_task(args):
    """Estimate one replication at every grid length (picklable for --jobs)."""
    symbols, m, r_star, pen, cutoff, n_grid, depth_cap, replication, seed = args
    est_rows = []
    score_rows = []
    counts = None
    prev = 0
    for n in n_grid:
        counts = (
            build_counts(symbols[:n], depth_cap, m)
            if counts is None
            else extend_counts(counts, symbols[prev:n])
        )
        prev = n
        result = estimate_order(counts, pen, cutoff, m, n=n)
        lil = lil_statistic(counts, r_star, result.kappa_used, m)
        est_rows.append(
            (
                n,
                pen.describe(),
                cutoff.describe(),
                replication,
                result.chosen_order,
                r_star,
                lil.value,
                seed,
            )
        )
        for entry in result.table:
            score_rows.append(
                (n, replication, entry.order, entry.loglik, entry.penalty, entry.score)
            )
    return est_rows, score_rows


def _estimate_rows(config: ExperimentConfig, model: MarkovModel, pen):
    """Per-(replication, n) estimate rows plus per-(replication, n, r) scores.

    Replications may run in parallel; output order is by replication index.
    """
    m = model.m
    r_star = true_order(model)
    depth_cap = required_depth_cap(config.cutoff, config.n_grid, m)
    tasks = [
        (symbols, m, r_star, pen, config.cutoff, config.n_grid, depth_cap, replication, seed)
        for replication, seed, symbols in _replication_paths(config, model)
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_replication_task, tasks, chunksize=1))
    else:
        results = [_replication_task(t) for t in tasks]
    est_rows = []
    score_rows = []
    for est, scores in results:
        est_rows.extend(est)
        score_rows.extend(scores)
    return est_rows, score_rows


def _recovery_rows(est_rows, n_grid):
    rows = []
    for n in n_grid:
        at_n = [r for r in est_rows if r[0] == n]
        exact = sum(1 for r in at_n if r[4] == r[5])
        under = sum(1 for r in at_n if r[4] < r[5])
        over = sum(1 for r in at_n if r[4] > r[5])
        rows.append(
            (n, at_n[0][1], at_n[0][2], len(at_n), exact / len(at_n), under, over)
        )
    return rows


ESTIMATE_HEADER = (
    "n", "penalty", "cutoff", "replication", "chosen_order", "true_order",
    "lil_stat", "seed",
)
SCORES_HEADER = ("n", "replication", "r", "loglik", "penalty_value", "score")
RECOVERY_HEADER = ("n", "penalty", "cutoff", "replications", "recovery", "under", "over")


def cmd_estimate(config: ExperimentConfig) -> int:
    model = read_model_file(config.model_file)
    os.makedirs(config.out_dir, exist_ok=True)
    est_rows, score_rows = _estimate_rows(config, model, config.penalty)
    _write_csv(os.path.join(config.out_dir, "estimates.csv"), ESTIMATE_HEADER, est_rows)
    _write_csv(os.path.join(config.out_dir, "scores.csv"), SCORES_HEADER, score_rows)
    _write_csv(
        os.path.join(config.out_dir, "recovery.csv"),
        RECOVERY_HEADER,
        _recovery_rows(est_rows, config.n_grid),
    )
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig) -> int:
    if len(config.penalties) < 2:
        raise ConfigError("penalty.specs: a sweep needs at least two penalties")
    model = read_model_file(config.model_file)
    os.makedirs(config.out_dir, exist_ok=True)
    sweep_rows = []
    sweep_scores = []
    recovery = []
    for pen in config.penalties:
        est_rows, score_rows = _estimate_rows(config, model, pen)
        sweep_rows.extend((row[1],) + (row[0],) + row[2:] for row in est_rows)
        sweep_scores.extend((pen.describe(),) + row for row in score_rows)
        recovery.extend(
            (row[1],) + (row[0],) + row[2:] for row in _recovery_rows(est_rows, config.n_grid)
        )
    _write_csv(
        os.path.join(config.out_dir, "sweep.csv"),
        ("penalty", "n", "cutoff", "replication", "chosen_order", "true_order", "lil_stat", "seed"),
        sweep_rows,
    )
    _write_csv(
        os.path.join(config.out_dir, "sweep_scores.csv"),
        ("penalty",) + SCORES_HEADER,
        sweep_scores,
    )
    _write_csv(
        os.path.join(config.out_dir, "sweep_recovery.csv"),
        ("penalty", "n", "cutoff", "replications", "recovery", "under", "over"),
        recovery,
    )
    return EXIT_OK


def _default_candidate(truth: MarkovModel) -> MarkovModel:
    """Comparison kernel used when the config names none: the truth shifted
    3/10 of the way toward the uniform kernel."""
    uniform = np.full_like(truth.kernel, 1.0 / truth.m)
    return MarkovModel(0.7 * truth.kernel + 0.3 * uniform)


def cmd_verify(config: ExperimentConfig) -> int:
    settings = config.verify
    if not settings.checks:
        raise ConfigError("verify.checks: select at least one check")
    model = read_model_file(config.model_file)
    os.makedirs(config.out_dir, exist_ok=True)
    seed = config.seed
    checks = []
    grids = {}

    for name in settings.checks:
        if name == "norm-bound":
            report = dg.norm_bound_battery(settings.instances, derive_seed(seed, 101))
            checks.append(_check_entry(name, True, report.passed, report.to_dict()))
        elif name == "hellinger-sandwich":
            report = dg.hellinger_sandwich_battery(
                settings.instances,
                settings.eta,
                settings.sandwich_n,
                settings.rho,
                derive_seed(seed, 102),
            )
            checks.append(_check_entry(name, True, report.passed, report.to_dict()))
        elif name == "bernstein":
            candidate = (
                read_model_file(settings.candidate_file)
                if settings.candidate_file
                else _default_candidate(model)
            )
            r = settings.bernstein_r
            h_stat = dg.hellinger_stationary_distance(
                model,
                mixture_kernel(candidate, model, r),
                mixture_kernel(model, model, r),
            )
            cap = 12.0 * (settings.bernstein_n - r) * max(h_stat, 1e-12)
            alphas = np.linspace(
                0.5 * math.sqrt(cap), 3.0 * math.sqrt(cap), settings.bernstein_alpha_count
            )
            report = dg.bernstein_mc_check(
                model,
                candidate,
                r,
                settings.bernstein_n,
                alphas,
                cap,
                settings.bernstein_replications,
                derive_seed(seed, 103),
            )
            checks.append(_check_entry(name, True, report.all_passed, report.to_dict()))
            grids["bernstein.csv"] = (
                ("alpha", "empirical", "bound", "margin", "passed"),
                [(row.alpha, row.empirical, row.bound, row.margin, row.passed) for row in report.rows],
            )
        elif name == "bracket":
            battery = dg.bracket_battery(
                model,
                settings.bracket_kernels,
                settings.bracket_paths,
                settings.bracket_path_len,
                settings.bracket_beta,
                max(true_order(model), 1),
                derive_seed(seed, 104),
            )
            count = dg.bracket_count_check(
                model,
                max(true_order(model), 1),
                settings.bracket_sigma,
                settings.bracket_path_len,
                settings.bracket_samples,
                derive_seed(seed, 105),
                eta=settings.eta,
            )
            passed = battery.passed and count.passed
            checks.append(
                _check_entry(
                    name, True, passed,
                    {"battery": battery.to_dict(), "count": count.to_dict()},
                )
            )
        elif name == "deviation":
            eps = np.linspace(0.0, settings.deviation_eps_max, settings.deviation_eps_count)
            report = dg.deviation_tail_mc(
                model,
                settings.deviation_r,
                settings.deviation_n,
                eps,
                settings.deviation_replications,
                settings.eta,
                settings.rho,
                derive_seed(seed, 106),
            )
            shape_ok = bool(report.slope < 0.0)
            checks.append(_check_entry(name, False, shape_ok, report.to_dict()))
            grids["deviation.csv"] = (
                ("eps", "frequency"),
                [(row.eps, row.frequency) for row in report.rows],
            )
        elif name == "lil":
            r_star = true_order(model)
            rows = []
            slopes = []
            for i in range(settings.lil_seeds):
                report = dg.lil_trajectory(
                    model,
                    settings.lil_checkpoints,
                    r_star,
                    config.cutoff,
                    derive_seed(seed, 1000 + i),
                )
                slopes.append(report.slope)
                rows.extend(
                    (i, p.n, p.kappa, p.value, p.normalized) for p in report.points
                )
            mean_slope = float(np.mean(slopes))
            checks.append(
                _check_entry(
                    name,
                    False,
                    bool(mean_slope <= 0.01),
                    {"mean_slope": mean_slope, "seeds": settings.lil_seeds},
                )
            )
            grids["lil.csv"] = (("seed_index", "n", "kappa", "value", "normalized"), rows)
        elif name == "typicality":
            report = dg.typicality_trend(
                model,
                settings.eta,
                settings.rho,
                settings.typicality_n_small,
                settings.typicality_n_large,
                settings.typicality_seeds,
                derive_seed(seed, 107),
            )
            checks.append(_check_entry(name, False, report.improving, report.to_dict()))

    all_gating = all(c["passed"] for c in checks if c["gating"])
    _write_json(
        os.path.join(config.out_dir, "verification.json"),
        {"version": 1, "checks": checks, "all_gating_passed": all_gating},
    )
    for filename, (header, rows) in grids.items():
        _write_csv(os.path.join(config.out_dir, filename), header, rows)
    return EXIT_OK if all_gating else EXIT_FAIL


def _check_entry(name, gating, passed, detail) -> dict:
    return {"name": name, "gating": gating, "passed": bool(passed), "detail": detail}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="markovorder",
        description="Penalized-likelihood Markov order estimation and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "estimate", "sweep", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--jobs", type=int, default=None, help="replication parallelism")
        p.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.jobs is not None:
            config.jobs = args.jobs
        if args.out is not None:
            config.out_dir = args.out
        handler = {
            "simulate": cmd_simulate,
            "estimate": cmd_estimate,
            "sweep": cmd_sweep,
            "verify": cmd_verify,
        }[args.command]
        return handler(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def console_main() -> None:  # pragma: no cover - thin wrapper
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    console_main()
