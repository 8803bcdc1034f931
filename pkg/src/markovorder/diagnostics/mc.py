"""Monte Carlo verifiers for the tail bounds and distance comparisons.

Replication-heavy checks share a batched path engine that evolves many
seeded trajectories in lockstep, one vectorized step at a time; lane i is
bit-identical to ``sample_path(truth, n, derive_seed(seed, i))``, so batch
size and chunking never change a result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._contexts import block_digits
from ..counts import build_counts
from ..likelihood import MixtureKernel, mixture_kernel
from ..model import (
    MarkovModel,
    lift_kernel,
    random_model,
    sample_path,
    stationary_block_law,
    true_order,
)
from ..penalty import CutoffSpec, cutoff_value
from ..counts import extend_counts
from ..estimator import required_depth_cap
from ..likelihood import lil_statistic
from ..rng import derive_seed, uniform_block, uniforms_at
from .core import (
    BoundParams,
    bernstein_norm,
    bernstein_tail_bound,
    bracket_grid,
    bracket_log_envelopes,
    entropy_bound,
    event_F,
    hellinger_path_distance,
    hellinger_stationary_distance,
    phi,
    typicality_check,
)

REL_TOL = 1e-9
ABS_TOL = 1e-12


def _batch_steps(truth: MarkovModel, n: int, seeds: np.ndarray, depth: int):
    """Yield (i, ctx, sym) for positions i = 1..n, vectorized over seeds.

    ``ctx`` codes the min(i-1, depth) most recent symbols before position i
    (low digits are the newest), and ``sym`` is the symbol at position i.
    """
    m, r0 = truth.m, truth.order
    depth = max(depth, r0)
    reps = seeds.shape[0]
    init_cum = np.cumsum(truth.initial)
    u0 = uniforms_at(seeds, 0)
    init_code = np.searchsorted(init_cum, u0, side="right").astype(np.int64)
    np.clip(init_code, 0, m**r0 - 1, out=init_code)
    digits = block_digits(init_code, r0, m)
    depth_mod = m ** max(depth - 1, 0)
    ctx = np.zeros(reps, dtype=np.int64)
    for j in range(min(r0, n)):
        sym = np.ascontiguousarray(digits[:, j])
        yield j + 1, ctx, sym
        if depth >= 1:
            ctx = (ctx % depth_mod) * m + sym
    if n > r0:
        cum = np.cumsum(truth.kernel, axis=1)
        samp_mod = m**r0
        for k in range(1, n - r0 + 1):
            u = uniforms_at(seeds, k)
            rows = cum[ctx % samp_mod] if r0 >= 1 else np.broadcast_to(cum[0], (reps, m))
            sym = (rows <= u[:, None]).sum(axis=1)
            np.clip(sym, 0, m - 1, out=sym)
            yield r0 + k, ctx, sym
            if depth >= 1:
                ctx = (ctx % depth_mod) * m + sym


def _chunks(total: int, size: int):
    start = 0
    while start < total:
        yield start, min(start + size, total)
        start += size


def _ratio_table(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    mask = denom > 0.0
    out = np.ones_like(denom)
    np.divide(numer, denom, out=out, where=mask)
    return out


# -- martingale maximum vs the closed-form tail ------------------------------


@dataclass(frozen=True)
class BernsteinRow:
    alpha: float
    empirical: float
    bound: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class BernsteinMcReport:
    n: int
    r: int
    replications: int
    R: float
    K: float
    mean_final: float
    sd_final: float
    rows: tuple[BernsteinRow, ...]

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "r": self.r,
            "replications": self.replications,
            "R": self.R,
            "K": self.K,
            "mean_final": self.mean_final,
            "sd_final": self.sd_final,
            "rows": [vars(row) for row in self.rows],
            "all_passed": self.all_passed,
        }


def bernstein_mc_check(
    truth: MarkovModel,
    candidate: MarkovModel,
    r: int,
    n: int,
    alpha_grid,
    R: float,
    replications: int,
    seed: int,
    chunk: int = 1 << 16,
) -> BernsteinMcReport:
    """Empirical frequency of {max_j M_j >= alpha and R_n <= R} per alpha,
    against ``exp(-alpha^2 / (2 (K alpha + R)))`` with K = 2.

    M is the compensated log-ratio martingale of the candidate/truth
    mixture; R_n its predictable phi-norm.  A pass means the frequency
    stays within three binomial sigmas of the bound.
    """
    if replications < 10**4:
        raise ValueError("need at least 1e4 replications for a meaningful tail")
    m = truth.m
    table_t = lift_kernel(truth.kernel, m, r)
    mix = mixture_kernel(candidate, truth, r)
    ratio = _ratio_table(mix.table, table_t)
    log_ratio = np.log(ratio)
    mask = table_t > 0.0
    d_step = -np.where(mask, table_t * log_ratio, 0.0).sum(axis=1)
    r_step = 8.0 * np.where(mask, table_t * phi(0.5 * np.abs(log_ratio)), 0.0).sum(axis=1)
    alphas = [float(a) for a in alpha_grid]
    hits = np.zeros(len(alphas), dtype=np.int64)
    sum_final = 0.0
    sumsq_final = 0.0
    for lo, hi in _chunks(replications, chunk):
        seeds = np.array([derive_seed(seed, i) for i in range(lo, hi)], dtype=np.uint64)
        reps = seeds.shape[0]
        mval = np.zeros(reps)
        mmax = np.zeros(reps)
        rnorm = np.zeros(reps)
        for i, ctx, sym in _batch_steps(truth, n, seeds, depth=r):
            if i <= r:
                continue
            code = ctx % (m**r)
            mval += log_ratio[code, sym] + d_step[code]
            np.maximum(mmax, mval, out=mmax)
            rnorm += r_step[code]
        ok = rnorm <= R
        for j, alpha in enumerate(alphas):
            hits[j] += int(np.count_nonzero(ok & (mmax >= alpha)))
        sum_final += float(mval.sum())
        sumsq_final += float((mval**2).sum())
    rows = []
    for j, alpha in enumerate(alphas):
        emp = float(hits[j] / replications)
        bound = bernstein_tail_bound(alpha, 2.0, R)
        margin = 3.0 * math.sqrt(bound * (1.0 - bound) / replications)
        rows.append(BernsteinRow(alpha, emp, bound, margin, bool(emp <= bound + margin)))
    mean = sum_final / replications
    var = max(sumsq_final / replications - mean**2, 0.0)
    return BernsteinMcReport(
        n, r, replications, float(R), 2.0, mean, math.sqrt(var), tuple(rows)
    )


# -- deviation tail of the running likelihood overshoot ----------------------


@dataclass(frozen=True)
class DeviationRow:
    eps: float
    frequency: float


@dataclass(frozen=True)
class DeviationTailReport:
    n: int
    r: int
    replications: int
    eta: float
    rho: int
    event_rate: float
    rows: tuple[DeviationRow, ...]
    slope: float
    intercept: float
    r_squared: float
    usable_points: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "r": self.r,
            "replications": self.replications,
            "eta": self.eta,
            "rho": self.rho,
            "event_rate": self.event_rate,
            "rows": [vars(row) for row in self.rows],
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "usable_points": self.usable_points,
        }


def deviation_tail_mc(
    truth: MarkovModel,
    r: int,
    n: int,
    eps_grid,
    replications: int,
    eta: float,
    rho: int,
    seed: int,
    chunk: int = 1 << 16,
) -> DeviationTailReport:
    """Tail of {typicality event and max_{i=n..2n} overshoot >= eps}.

    The overshoot at i is the order-r maximized log-likelihood of the
    prefix x_{1:i} minus its true conditional log-likelihood.  The report
    carries the empirical frequency per eps plus a least-squares fit of
    log-frequency against eps over the grid points with more than
    10/replications mass (exponential decay shows up as a negative slope).
    """
    r_true = true_order(truth)
    if r <= r_true:
        raise ValueError(f"order {r} must exceed the true order {r_true}")
    if rho > n // 2:
        raise ValueError(f"rho {rho} exceeds n/2 = {n // 2}")
    m, r0 = truth.m, truth.order
    length = 2 * n
    size_r = m**r
    xlogx = np.zeros(length + 2)
    ks = np.arange(1, length + 2, dtype=np.float64)
    xlogx[1:] = ks * np.log(ks)
    log_t0 = np.where(truth.kernel > 0.0, np.log(np.where(truth.kernel > 0.0, truth.kernel, 1.0)), 0.0)
    typ_depths = [d for d in range(1, rho)]
    block_laws = {d: stationary_block_law(truth, d) for d in typ_depths}
    eps = np.array([float(e) for e in eps_grid])
    hits = np.zeros(eps.shape[0], dtype=np.int64)
    f_count = 0
    depth = max(r, rho - 1, r0)
    for lo, hi in _chunks(replications, chunk):
        seeds = np.array([derive_seed(seed, i) for i in range(lo, hi)], dtype=np.uint64)
        reps = seeds.shape[0]
        rep_idx = np.arange(reps, dtype=np.int64)
        trans = np.zeros(reps * size_r * m, dtype=np.int32)
        ctxcnt = np.zeros(reps * size_r, dtype=np.int32)
        typ = {d: np.zeros(reps * m**d, dtype=np.int32) for d in typ_depths}
        ml = np.zeros(reps)
        llt = np.zeros(reps)
        dmax = np.full(reps, -np.inf)
        good = np.ones(reps, dtype=bool)
        for i, ctx, sym in _batch_steps(truth, length, seeds, depth):
            for d in typ_depths:
                if i > d:
                    typ[d][rep_idx * m**d + ctx % m**d] += 1
            if i > r:
                code = ctx % size_r
                flat_tb = rep_idx * (size_r * m) + code * m + sym
                c = trans[flat_tb]
                ml += xlogx[c + 1] - xlogx[c]
                trans[flat_tb] = c + 1
                flat_c = rep_idx * size_r + code
                cc = ctxcnt[flat_c]
                ml -= xlogx[cc + 1] - xlogx[cc]
                ctxcnt[flat_c] = cc + 1
                llt += log_t0[ctx % m**r0, sym]
                if i >= n:
                    np.maximum(dmax, ml - llt, out=dmax)
            if i == n or i == length:
                for d in typ_depths:
                    law = block_laws[d]
                    supported = law > 0.0
                    freq = typ[d].reshape(reps, m**d)[:, supported].astype(np.float64)
                    dev = np.abs(freq / ((i - d) * law[supported]) - 1.0).max(axis=1)
                    good &= dev < eta
        f_count += int(np.count_nonzero(good))
        for j in range(eps.shape[0]):
            hits[j] += int(np.count_nonzero(good & (dmax >= eps[j])))
    freqs = hits / replications
    usable = freqs > 10.0 / replications
    slope = intercept = r2 = float("nan")
    if int(usable.sum()) >= 2:
        x = eps[usable]
        y = np.log(freqs[usable])
        slope, intercept = np.polyfit(x, y, 1)
        fitted = slope * x + intercept
        ss_res = float(((y - fitted) ** 2).sum())
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    rows = tuple(DeviationRow(float(e), float(f)) for e, f in zip(eps, freqs))
    return DeviationTailReport(
        n,
        r,
        replications,
        eta,
        rho,
        f_count / replications,
        rows,
        float(slope),
        float(intercept),
        float(r2),
        int(usable.sum()),
    )


# -- normalized likelihood-ratio trajectory ----------------------------------


@dataclass(frozen=True)
class LilPoint:
    n: int
    kappa: int
    value: float
    normalized: float
    empty_range: bool


@dataclass(frozen=True)
class LilTrajectoryReport:
    r_star: int
    seed: int
    points: tuple[LilPoint, ...]
    max_normalized: float
    slope: float

    def to_dict(self) -> dict:
        return {
            "r_star": self.r_star,
            "seed": self.seed,
            "points": [vars(p) for p in self.points],
            "max_normalized": self.max_normalized,
            "slope": self.slope,
        }


def lil_trajectory(
    truth: MarkovModel,
    checkpoints,
    r_star: int,
    cutoff: CutoffSpec,
    seed: int,
) -> LilTrajectoryReport:
    """Normalized order-supremum statistic along one growing path.

    At each checkpoint n the statistic ``sup_{r_star<r<kappa(n)} lr/m**r``
    is divided by log log n; the report carries the series, its maximum and
    the least-squares slope against log2 n (a bounded statistic shows a
    non-positive trend).
    """
    grid = sorted(int(c) for c in checkpoints)
    if grid[0] < 16:
        raise ValueError("checkpoints must start at 16 or later")
    m = truth.m
    depth = required_depth_cap(cutoff, grid, m)
    path = sample_path(truth, grid[-1], seed)
    counts = None
    prev = 0
    points = []
    for n in grid:
        if counts is None:
            counts = build_counts(path.symbols[:n], depth, m)
        else:
            counts = extend_counts(counts, path.symbols[prev:n])
        prev = n
        kappa = cutoff_value(cutoff, n, m)
        stat = lil_statistic(counts, r_star, kappa, m)
        norm = stat.value / math.log(math.log(n))
        points.append(LilPoint(n, kappa, stat.value, norm, stat.empty_range))
    xs = np.log2([p.n for p in points])
    ys = np.array([p.normalized for p in points])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(points) > 1 else 0.0
    return LilTrajectoryReport(
        r_star, seed, tuple(points), float(ys.max()), slope
    )


# -- typicality trend ---------------------------------------------------------


@dataclass(frozen=True)
class TypicalityTrendReport:
    eta: float
    rho: int
    n_small: int
    n_large: int
    seeds: int
    holds_small: int
    holds_large: int

    @property
    def improving(self) -> bool:
        return self.holds_large >= self.holds_small

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "rho": self.rho,
            "n_small": self.n_small,
            "n_large": self.n_large,
            "seeds": self.seeds,
            "holds_small": self.holds_small,
            "holds_large": self.holds_large,
            "improving": self.improving,
        }


def typicality_trend(
    truth: MarkovModel,
    eta: float,
    rho: int,
    n_small: int,
    n_large: int,
    seeds: int,
    seed: int,
) -> TypicalityTrendReport:
    """How often the typicality event holds at two path lengths."""
    small = large = 0
    for i in range(seeds):
        path = sample_path(truth, n_large, derive_seed(seed, i))
        cap = min(rho, n_small - 1)
        rep_small = typicality_check(
            truth, build_counts(path.symbols[:n_small], cap, truth.m), eta, rho
        )
        rep_large = typicality_check(
            truth, build_counts(path.symbols, cap, truth.m), eta, rho
        )
        small += rep_small.holds
        large += rep_large.holds
    return TypicalityTrendReport(eta, rho, n_small, n_large, seeds, small, large)


# -- instance batteries for the distance and norm comparisons ----------------


@dataclass(frozen=True)
class InstanceBatteryReport:
    name: str
    instances: int
    attempted: int
    violations: int
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.instances > 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "instances": self.instances,
            "attempted": self.attempted,
            "violations": self.violations,
            "worst_ratio": self.worst_ratio,
            "passed": self.passed,
        }


def norm_bound_battery(
    instances: int,
    seed: int,
    m_choices=(2, 3),
    r_max: int = 3,
    n_max: int = 512,
) -> InstanceBatteryReport:
    """Bernstein norm against eight times the count-weighted Hellinger
    distance on random (truth, candidate, path) triples; the inequality is
    exact, so any violation beyond 1e-9 relative slack counts."""
    violations = 0
    worst = 0.0
    for i in range(instances):
        base = derive_seed(seed, i)
        u = uniform_block(base, 0, 4)
        m = m_choices[int(u[0] * len(m_choices)) % len(m_choices)]
        r_star = int(u[1] * 2) % 2
        r = r_star + 1 + int(u[2] * (r_max - r_star)) % (r_max - r_star)
        n = 64 + int(u[3] * (n_max - 64))
        truth = random_model(m, r_star, derive_seed(base, 1))
        candidate = random_model(m, r, derive_seed(base, 2))
        path = sample_path(truth, n, derive_seed(base, 3))
        counts = build_counts(path, r, m)
        mix = mixture_kernel(candidate, truth, r)
        mix_truth = mixture_kernel(truth, truth, r)
        r_n = bernstein_norm(truth, mix, path, r, n)
        h_n = hellinger_path_distance(counts, mix, mix_truth)
        cap = 8.0 * h_n
        ratio = r_n / cap if cap > 0 else (1.0 if r_n <= ABS_TOL else np.inf)
        worst = max(worst, ratio)
        if r_n > cap * (1.0 + REL_TOL) + ABS_TOL:
            violations += 1
    return InstanceBatteryReport("norm-bound", instances, instances, violations, worst)


def hellinger_sandwich_battery(
    instances: int,
    eta: float,
    n: int,
    rho: int,
    seed: int,
    r: int = 2,
    max_attempts: int | None = None,
) -> InstanceBatteryReport:
    """Count-weighted vs stationary Hellinger distances on the typicality
    event: doubling the path multiplies the distance by at most
    4(1+eta)/(1-eta), and the per-window distance stays within a factor
    1/(1-eta) of the stationary one.  Instances without the event are
    skipped (the comparison presumes it)."""
    c3 = 4.0 * (1.0 + eta) / (1.0 - eta)
    c4 = 1.0 / (1.0 - eta)
    accepted = attempts = violations = 0
    worst = 0.0
    cap = max_attempts or instances * 20
    while accepted < instances and attempts < cap:
        base = derive_seed(seed, attempts)
        attempts += 1
        truth = random_model(2, 1, derive_seed(base, 1), floor=0.15)
        path = sample_path(truth, 2 * n, derive_seed(base, 2))
        if not event_F(truth, path, eta, rho):
            continue
        accepted += 1
        p_a = random_model(2, r, derive_seed(base, 3))
        p_b = random_model(2, r, derive_seed(base, 4))
        mix_a = mixture_kernel(p_a, truth, r)
        mix_b = mixture_kernel(p_b, truth, r)
        counts_n = build_counts(path.symbols[:n], r, 2)
        counts_2n = build_counts(path.symbols, r, 2)
        h_n = hellinger_path_distance(counts_n, mix_a, mix_b)
        h_2n = hellinger_path_distance(counts_2n, mix_a, mix_b)
        h_stat = hellinger_stationary_distance(truth, mix_a, mix_b)
        checks = [
            (h_2n, c3 * h_n),
            ((n - r) / c4 * h_stat, h_n),
            (h_n, (n - r) * c4 * h_stat),
        ]
        for small, big in checks:
            ratio = small / big if big > 0 else (1.0 if small <= ABS_TOL else np.inf)
            worst = max(worst, ratio)
            if small > big * (1.0 + REL_TOL) + ABS_TOL:
                violations += 1
    return InstanceBatteryReport(
        "hellinger-sandwich", accepted, attempts, violations, worst
    )


def bracket_battery(
    truth: MarkovModel,
    n_kernels: int,
    n_paths: int,
    path_len: int,
    beta: float,
    r: int,
    seed: int,
) -> InstanceBatteryReport:
    """Bracket envelopes on random kernels: containment, the grid gap
    bound, and pathwise log-ratio envelopes on sampled paths."""
    m = truth.m
    weights = stationary_block_law(truth, r)
    supported = weights > 0.0
    gap_cap = np.full_like(weights, np.inf)
    gap_cap[supported] = beta / np.sqrt(weights[supported])
    paths = [
        sample_path(truth, path_len, derive_seed(seed, 10_000 + j))
        for j in range(n_paths)
    ]
    violations = 0
    worst = 0.0
    for i in range(n_kernels):
        kernel = random_model(m, r, derive_seed(seed, i)).kernel
        lower, upper = bracket_grid(truth, kernel, beta)
        if np.any(lower > kernel + ABS_TOL) or np.any(upper < kernel - ABS_TOL):
            violations += 1
        gaps = np.sqrt(upper[supported]) - np.sqrt(lower[supported])
        ratio = float((gaps / gap_cap[supported][:, None]).max())
        worst = max(worst, ratio)
        if np.any(gaps > gap_cap[supported][:, None] * (1.0 + REL_TOL) + ABS_TOL):
            violations += 1
        for path in paths:
            lam, ups, xi = bracket_log_envelopes(truth, kernel, lower, upper, path, r)
            if np.any(lam > xi + ABS_TOL) or np.any(xi > ups + ABS_TOL):
                violations += 1
    return InstanceBatteryReport(
        "bracket", n_kernels * (n_paths + 1), n_kernels * (n_paths + 1), violations, worst
    )


@dataclass(frozen=True)
class BracketCountReport:
    samples: int
    distinct: int
    log_bound: float
    beta: float
    sigma: float
    delta: float

    @property
    def passed(self) -> bool:
        return math.log(max(self.distinct, 1)) <= self.log_bound

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "distinct": self.distinct,
            "log_bound": self.log_bound,
            "beta": self.beta,
            "sigma": self.sigma,
            "delta": self.delta,
            "passed": self.passed,
        }


def bracket_count_check(
    truth: MarkovModel,
    r: int,
    sigma: float,
    n: int,
    samples: int,
    seed: int,
    eta: float = 0.5,
    delta_frac: float = 1.0,
) -> BracketCountReport:
    """Count distinct brackets over kernels sampled from the Hellinger ball
    of radius sigma around the truth, against the entropy bound.

    beta is the grid pitch the entropy estimate prescribes for tolerance
    delta = delta_frac * c * sqrt((2n-r) sigma); the count of distinct
    (lower, upper) pairs hit by the sample must stay below
    exp(entropy_bound).
    """
    params = BoundParams(eta)
    m = truth.m
    delta = delta_frac * params.c * math.sqrt((2 * n - r) * sigma)
    log_bound = entropy_bound(n, r, sigma, delta, m, params.C5, c=params.c)
    beta = delta / math.sqrt(4.0 * params.C4 * (2 * n - r) * m ** (r + 1))
    table_t = lift_kernel(truth.kernel, m, r)
    weights = stationary_block_law(truth, r)
    sq_w = np.sqrt(np.where(weights > 0.0, weights, 0.0))[:, None]
    keys = set()
    accepted = 0
    spread = 2.0 * math.sqrt(sigma)
    attempt = 0
    while accepted < samples and attempt < 40:
        batch_seed = derive_seed(seed, attempt)
        scale = spread * 0.8**attempt
        u = uniform_block(batch_seed, 0, samples * table_t.size).reshape(
            samples, *table_t.shape
        )
        cand = np.clip(table_t[None, :, :] + scale * (2.0 * u - 1.0), 1e-9, None)
        cand /= cand.sum(axis=2, keepdims=True)
        mixed = 0.5 * (cand + table_t[None, :, :])
        gap = (np.sqrt(mixed) - np.sqrt(table_t[None, :, :])) ** 2
        dist = (weights[None, :] * gap.sum(axis=2)).sum(axis=1)
        inside = np.nonzero(dist <= sigma)[0]
        for idx in inside:
            if accepted >= samples:
                break
            accepted += 1
            z = sq_w * np.sqrt(cand[idx]) / beta
            keys.add((np.floor(z).astype(np.int64).tobytes(), np.ceil(z).astype(np.int64).tobytes()))
        attempt += 1
    if accepted < samples:
        raise RuntimeError(f"only {accepted} of {samples} kernels landed in the ball")
    return BracketCountReport(accepted, len(keys), log_bound, beta, sigma, delta)
