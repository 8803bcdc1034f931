"""Maximized log-likelihoods and the statistics built from them.

The maximized log-likelihood of an order-r chain on a path has the closed
form ``sum_{a,b} N(a,b) log(N(a,b)/N(a))`` with the convention
0 log 0 = 0: the maximizing measure puts unit mass on the observed initial
segment and the empirical kernel on each seen context.  All logs are
natural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._contexts import context_codes
from .counts import ContextCounts
from .model import (
    MarkovModel,
    PathSample,
    kernel_at_true_order,
    lift_kernel,
    log_true_conditional_likelihood,
    true_order,
)

ROW_SUM_TOL = 1e-12


def _xlogx_sum(values: np.ndarray) -> float:
    v = values[values > 0].astype(np.float64)
    return float(np.sum(v * np.log(v)))


def max_loglik(counts: ContextCounts, r: int) -> float:
    """Maximized log-likelihood over chains of order at most r; always <= 0."""
    if r >= counts.n:
        raise ValueError(f"order {r} must be < path length {counts.n}")
    table = counts.transition_counts(r)
    if isinstance(table, np.ndarray):
        total = _xlogx_sum(table.ravel()) - _xlogx_sum(table.sum(axis=1))
    else:
        total = 0.0
        for row in table.values():
            total += _xlogx_sum(row) - _xlogx_sum(row.sum(keepdims=True))
    return min(total, 0.0)


def lr_statistic(counts: ContextCounts, r: int, r_star: int) -> float:
    """Gap between the order-r and order-r_star maximized log-likelihoods.

    Nonnegative because the parameter classes are nested.
    """
    if r_star > r:
        raise ValueError(f"reference order {r_star} exceeds order {r}")
    if r == r_star:
        return 0.0
    return max(max_loglik(counts, r) - max_loglik(counts, r_star), 0.0)


@dataclass(frozen=True)
class LilStatistic:
    """Order-normalized likelihood-ratio supremum over r_star < r < kappa."""

    value: float
    empty_range: bool
    best_order: int | None = None


def lil_statistic(counts: ContextCounts, r_star: int, kappa_n: int, m: int) -> LilStatistic:
    """sup over r_star < r < kappa_n of ``lr_statistic(r, r_star) / m**r``.

    Returns a zero value with the empty-range flag set when the interval
    contains no order.
    """
    if kappa_n > counts.depth_cap + 1:
        raise ValueError(
            f"cutoff {kappa_n} needs depth cap >= {kappa_n - 1}, have {counts.depth_cap}"
        )
    orders = range(r_star + 1, kappa_n)
    if not len(orders):
        return LilStatistic(0.0, True)
    base = max_loglik(counts, r_star)
    best, best_r = -np.inf, None
    for r in orders:
        v = max(max_loglik(counts, r) - base, 0.0) / m**r
        if v > best:
            best, best_r = v, r
    return LilStatistic(best, False, best_r)


def delta_statistic(model: MarkovModel, counts: ContextCounts, path, r: int) -> float:
    """Overshoot of the order-r maximized log-likelihood over the true
    conditional log-likelihood; nonnegative.

    Raises if the path is impossible under the model (the reference
    log-likelihood would be -inf).
    """
    ll = log_true_conditional_likelihood(model, path, r)
    if ll == float("-inf"):
        raise ValueError("path has zero probability under the model")
    return max(max_loglik(counts, r) - ll, 0.0)


def delta_running_max(model: MarkovModel, path, r: int, i_lo: int, i_hi: int) -> float:
    """max over i in [i_lo, i_hi] of the order-r overshoot on the prefix x_{1:i}.

    Incremental single-path evaluation; for large replication counts use the
    batched verifier in diagnostics instead.
    """
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    n = symbols.shape[0]
    if not r < i_lo <= i_hi <= n:
        raise ValueError(f"need r < i_lo <= i_hi <= n, got r={r}, [{i_lo}, {i_hi}], n={n}")
    r_true = true_order(model)
    if r < r_true:
        raise ValueError(f"order {r} is below the true order {r_true}")
    m = model.m
    codes = context_codes(symbols, r, m)
    tcodes = context_codes(symbols, r_true, m)
    base = kernel_at_true_order(model)
    step_ll = base[tcodes[r - r_true :], symbols[r:]]
    if np.any(step_ll <= 0.0):
        raise ValueError("path has zero probability under the model")
    step_ll = np.log(step_ll)
    trans: dict[int, int] = {}
    ctx: dict[int, int] = {}
    ml = 0.0
    ll = 0.0
    best = -np.inf
    for i in range(r + 1, i_hi + 1):
        t = i - r - 1
        key = int(codes[t]) * m + int(symbols[r + t])
        c = trans.get(key, 0)
        ml += (c + 1) * np.log(c + 1) - (c * np.log(c) if c else 0.0)
        trans[key] = c + 1
        ck = int(codes[t])
        cc = ctx.get(ck, 0)
        ml -= (cc + 1) * np.log(cc + 1) - (cc * np.log(cc) if cc else 0.0)
        ctx[ck] = cc + 1
        ll += step_ll[t]
        if i >= i_lo:
            best = max(best, ml - ll)
    return max(best, 0.0)


@dataclass(frozen=True)
class MixtureKernel:
    """Equal mixture of a candidate and the true kernel, lifted to one order.

    Mixing with the truth keeps every ratio against it within [1/2, ...],
    which is what makes the log-ratio increments uniformly bounded below.
    """

    order: int
    m: int
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        if table.shape != (self.m**self.order, self.m):
            raise ValueError(f"mixture table must have shape ({self.m**self.order}, {self.m})")
        if np.any(np.abs(table.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("mixture rows must sum to 1")
        if np.any(table < 0.0) or np.any(table > 1.0):
            raise ValueError("mixture entries must lie in [0, 1]")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


def mixture_kernel(candidate: MarkovModel, truth: MarkovModel, r: int) -> MixtureKernel:
    """Entrywise average of the two kernels lifted to order r."""
    if candidate.m != truth.m:
        raise ValueError("candidate and truth must share one alphabet")
    if r < candidate.order or r < truth.order:
        raise ValueError(
            f"target order {r} is below a component order "
            f"({candidate.order} and {truth.order})"
        )
    m = truth.m
    table = 0.5 * (lift_kernel(candidate.kernel, m, r) + lift_kernel(truth.kernel, m, r))
    return MixtureKernel(r, m, table)


def _lifted_truth_rows(truth: MarkovModel, codes: np.ndarray, r: int) -> np.ndarray:
    """Truth kernel rows for length-r context codes (conditioning reads only
    the most recent true-order symbols)."""
    return truth.kernel[codes % truth.n_contexts]


def kl_compensator(truth: MarkovModel, mix: MixtureKernel, path, up_to: int) -> float:
    """Accumulated per-step KL divergence of the truth from the mixture.

    ``-sum_{i=r+1}^{up_to} sum_a P*(a|ctx_i) log(mix(a|ctx_i)/P*(a|ctx_i))``,
    nonnegative by Gibbs' inequality and at least the count-weighted
    Hellinger distance to the truth.
    """
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    if up_to > symbols.shape[0]:
        raise ValueError(f"up_to {up_to} exceeds path length {symbols.shape[0]}")
    r = mix.order
    if up_to <= r:
        return 0.0
    codes = context_codes(symbols[:up_to], r, mix.m)
    t_rows = _lifted_truth_rows(truth, codes, r)
    m_rows = mix.table[codes]
    mask = t_rows > 0.0
    ratio = np.ones_like(t_rows)
    np.divide(m_rows, t_rows, out=ratio, where=mask)
    terms = -np.where(mask, t_rows * np.log(ratio), 0.0)
    return max(float(terms.sum()), 0.0)


def martingale_path(truth: MarkovModel, mix: MixtureKernel, path, r: int | None = None) -> np.ndarray:
    """Compensated log-ratio partial sums M_0..M_n (zero mean under the truth).

    ``M_i = sum_{l=r+1}^i log(mix(x_l|ctx_l)/P*(x_l|ctx_l)) + D_i`` with the
    compensator D from ``kl_compensator``; M_i = 0 for i <= r.
    """
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    n = symbols.shape[0]
    if r is None:
        r = mix.order
    elif r != mix.order:
        raise ValueError(f"order {r} does not match the mixture order {mix.order}")
    out = np.zeros(n + 1)
    if n <= r:
        return out
    codes = context_codes(symbols, r, mix.m)
    t_rows = _lifted_truth_rows(truth, codes, r)
    obs_t = t_rows[np.arange(codes.shape[0]), symbols[r:]]
    if np.any(obs_t <= 0.0):
        raise ValueError("path has zero probability under the model")
    obs_m = mix.table[codes, symbols[r:]]
    log_ratio = np.log(obs_m / obs_t)
    mask = t_rows > 0.0
    ratio = np.ones_like(t_rows)
    np.divide(mix.table[codes], t_rows, out=ratio, where=mask)
    d_steps = -np.where(mask, t_rows * np.log(ratio), 0.0).sum(axis=1)
    out[r + 1 :] = np.cumsum(log_ratio + d_steps)
    return out
