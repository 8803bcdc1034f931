"""The penalized-likelihood order estimator and its recovery experiments.

The estimated order maximizes ``max_loglik(r) - pen(n, r)`` over
0 <= r < kappa(n); ties break to the smallest order.  Recovery experiments
evaluate every n in a grid along a single growing path per replication, so
the reported trajectory matches the almost-sure convergence statement and
count tables are extended rather than rebuilt.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .counts import ContextCounts, build_counts, extend_counts
from .likelihood import lil_statistic, max_loglik
from .model import MarkovModel, sample_path, stationary_block_law, true_order
from .penalty import CutoffSpec, PenaltySpec, cutoff_value, penalty_value
from .rng import derive_seed


@dataclass(frozen=True)
class OrderScore:
    order: int
    loglik: float
    penalty: float

    @property
    def score(self) -> float:
        return self.loglik - self.penalty


@dataclass(frozen=True)
class EstimateResult:
    """Chosen order plus the full per-order score table."""

    chosen_order: int
    kappa_used: int
    tie_broken: bool
    table: tuple[OrderScore, ...]


def argmax_score(logliks, penalties) -> tuple[int, bool]:
    """Index of the largest loglik - penalty; ties go to the smallest index."""
    if len(logliks) != len(penalties) or not logliks:
        raise ValueError("score table must be nonempty and aligned")
    scores = [ll - p for ll, p in zip(logliks, penalties)]
    best = 0
    tie = False
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
        elif scores[i] == scores[best]:
            tie = True
    return best, tie


def estimate_order(
    counts: ContextCounts,
    pen: PenaltySpec,
    cut: CutoffSpec,
    m: int,
    n: int | None = None,
) -> EstimateResult:
    """Penalized-likelihood order estimate from a count table."""
    if n is None:
        n = counts.n
    kappa = cutoff_value(cut, n, m)
    if counts.depth_cap < kappa - 1:
        raise ValueError(
            f"depth cap {counts.depth_cap} is too small: cutoff {kappa} "
            f"requires tracking depth {kappa - 1}"
        )
    logliks = [max_loglik(counts, r) for r in range(kappa)]
    pens = [penalty_value(pen, n, r, m) for r in range(kappa)]
    chosen, tie = argmax_score(logliks, pens)
    table = tuple(
        OrderScore(r, logliks[r], pens[r]) for r in range(kappa)
    )
    return EstimateResult(chosen, kappa, tie, table)


def required_depth_cap(cut: CutoffSpec, n_grid, m: int) -> int:
    """Depth cap for an experiment grid: max kappa over the grid, plus one."""
    return max(cutoff_value(cut, n, m) for n in n_grid) + 1


@dataclass(frozen=True)
class ReplicationRow:
    n: int
    replication: int
    seed: int
    chosen_order: int
    lil_stat: float


@dataclass(frozen=True)
class RecoverySummary:
    n: int
    recovery: float
    under: int
    over: int
    exact: int


@dataclass(frozen=True)
class ExperimentResult:
    true_order: int
    rows: tuple[ReplicationRow, ...]
    summary: tuple[RecoverySummary, ...]


def evaluate_replication(
    symbols: np.ndarray,
    m: int,
    r_star: int,
    pen: PenaltySpec,
    cut: CutoffSpec,
    n_grid,
    depth_cap: int,
    replication: int,
    seed: int,
) -> list[ReplicationRow]:
    """Score one path at every grid length, extending counts incrementally."""
    rows = []
    counts: ContextCounts | None = None
    prev = 0
    for n in n_grid:
        if counts is None:
            counts = build_counts(symbols[:n], depth_cap, m)
        else:
            counts = extend_counts(counts, symbols[prev:n])
        prev = n
        result = estimate_order(counts, pen, cut, m, n=n)
        lil = lil_statistic(counts, r_star, result.kappa_used, m)
        rows.append(ReplicationRow(n, replication, seed, result.chosen_order, lil.value))
    return rows


def _replication_worker(args):
    model, pen, cut, n_grid, depth_cap, r_star, replication, seed = args
    path = sample_path(model, max(n_grid), seed)
    return evaluate_replication(
        path.symbols, model.m, r_star, pen, cut, n_grid, depth_cap, replication, seed
    )


def consistency_experiment(
    model: MarkovModel,
    pen: PenaltySpec,
    cut: CutoffSpec,
    n_grid,
    replications: int,
    seed: int,
    jobs: int = 1,
) -> ExperimentResult:
    """Recovery-rate experiment: fraction of replications whose estimate hits
    the true order at each grid length.

    Replication i runs on its own derived seed, so results are independent
    of ``jobs`` and deterministic in (model, grid, replications, seed).
    """
    n_grid = sorted(int(n) for n in n_grid)
    if replications < 1:
        raise ValueError("need at least one replication")
    stationary_block_law(model, model.order)  # fail fast on reducible chains
    r_star = true_order(model)
    depth_cap = required_depth_cap(cut, n_grid, model.m)
    tasks = [
        (model, pen, cut, n_grid, depth_cap, r_star, i, derive_seed(seed, i))
        for i in range(replications)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_replication_worker, tasks, chunksize=4))
    else:
        per_rep = [_replication_worker(t) for t in tasks]
    rows = tuple(row for rep_rows in per_rep for row in rep_rows)
    summary = []
    for n in n_grid:
        at_n = [row for row in rows if row.n == n]
        exact = sum(1 for row in at_n if row.chosen_order == r_star)
        under = sum(1 for row in at_n if row.chosen_order < r_star)
        over = sum(1 for row in at_n if row.chosen_order > r_star)
        summary.append(RecoverySummary(n, exact / len(at_n), under, over, exact))
    return ExperimentResult(r_star, rows, tuple(summary))


def underestimation_gap(model: MarkovModel, r: int) -> float:
    """Per-symbol likelihood loss of conditioning on only r past symbols.

    The stationary expectation ``E[log P(X | last r_true symbols)] -
    E[log Q_r(X | last r symbols)]`` where Q_r is the stationary conditional
    law; a conditional mutual information, zero exactly when r reaches the
    true order.
    """
    if r < 0:
        raise ValueError("order must be nonnegative")
    r_star = true_order(model)
    if r >= r_star:
        return 0.0

    def mean_log_conditional(k: int) -> float:
        joint = stationary_block_law(model, k + 1).reshape(model.m**k, model.m)
        ctx = joint.sum(axis=1)
        mask = joint > 0.0
        ratio = np.ones_like(joint)
        np.divide(joint, ctx[:, None], out=ratio, where=mask)
        return float(np.where(mask, joint * np.log(ratio), 0.0).sum())

    return max(mean_log_conditional(r_star) - mean_log_conditional(r), 0.0)
