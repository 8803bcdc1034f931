"""Typicality events, Hellinger-type distances, Bernstein norms, bracket
grids, and the closed-form tail bounds they feed.

Conventions shared across this module: mixtures are always taken against
the true kernel, contexts with zero stationary probability are excluded
from typicality and bracket constraints (a stationary path never visits
them), and ``phi(x) = exp(x) - x - 1`` is the exponential-moment remainder
behind every Bernstein-type bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .._contexts import context_codes
from ..counts import ContextCounts, build_counts
from ..likelihood import MixtureKernel
from ..model import MarkovModel, stationary_block_law

_PHI_SERIES_CUT = 1e-4


def phi(x):
    """exp(x) - x - 1: convex, nonnegative, phi(0) = 0.

    Evaluated by series below |x| = 1e-4 where the direct form cancels
    catastrophically.
    """
    arr = np.asarray(x, dtype=np.float64)
    small = np.abs(arr) < _PHI_SERIES_CUT
    safe = np.where(small, 0.0, arr)
    direct = np.expm1(safe) - safe
    series = 0.5 * arr * arr * (1.0 + arr / 3.0 + arr * arr / 12.0)
    out = np.where(small, series, direct)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TypicalityReport:
    """Per-depth worst relative deviation of context frequencies."""

    eta: float
    rho_n: int
    deviations: tuple[float, ...]  # index r: max over supported contexts
    holds: bool

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "rho_n": self.rho_n,
            "deviations": list(self.deviations),
            "holds": self.holds,
        }


def typicality_check(
    truth: MarkovModel, counts: ContextCounts, eta: float, rho_n: int
) -> TypicalityReport:
    """Check N(a)/((n-r) P*(a)) against 1 for every depth r < rho_n.

    Only contexts with positive stationary probability participate; the
    event holds when every deviation is strictly below eta.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    if rho_n > counts.depth_cap:
        raise ValueError(f"rho {rho_n} exceeds the depth cap {counts.depth_cap}")
    n = counts.n
    devs = []
    for r in range(rho_n):
        p = stationary_block_law(truth, r)
        freq = counts.context_counts(r)
        if not isinstance(freq, np.ndarray):
            raise ValueError("typicality needs dense count tables at this depth")
        supported = p > 0.0
        if not supported.any():
            devs.append(0.0)
            continue
        ratio = freq[supported] / ((n - r) * p[supported])
        devs.append(float(np.abs(ratio - 1.0).max()))
    holds = all(d < eta for d in devs)
    return TypicalityReport(eta, rho_n, tuple(devs), holds)


def event_F(truth: MarkovModel, path, eta: float, rho: int) -> bool:
    """Typicality at the half-length prefix and at the full path, jointly.

    The path length must be even (say 2n) and rho at most n/2.
    """
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    length = symbols.shape[0]
    if length % 2:
        raise ValueError(f"path length must be even, got {length}")
    half = length // 2
    if rho > half // 2:
        raise ValueError(f"rho {rho} exceeds n/2 = {half // 2}")
    cap = min(rho, half - 1)
    first = typicality_check(truth, build_counts(symbols[:half], cap, truth.m), eta, rho)
    if not first.holds:
        return False
    full = typicality_check(truth, build_counts(symbols, cap, truth.m), eta, rho)
    return full.holds


def _check_pair(mix_a: MixtureKernel, mix_b: MixtureKernel):
    if mix_a.order != mix_b.order or mix_a.m != mix_b.m:
        raise ValueError("kernels must share one order and alphabet")


def hellinger_path_distance(
    counts: ContextCounts, mix_a: MixtureKernel, mix_b: MixtureKernel
) -> float:
    """Count-weighted squared Hellinger distance between two kernels.

    ``sum_a N(a) sum_b (sqrt A(b|a) - sqrt B(b|a))**2`` at the kernels'
    common order.
    """
    _check_pair(mix_a, mix_b)
    weights = counts.context_counts(mix_a.order)
    if not isinstance(weights, np.ndarray):
        raise ValueError("path distance needs a dense count table at this depth")
    gap = (np.sqrt(mix_a.table) - np.sqrt(mix_b.table)) ** 2
    return float((weights * gap.sum(axis=1)).sum())


def hellinger_stationary_distance(
    truth: MarkovModel, mix_a: MixtureKernel, mix_b: MixtureKernel
) -> float:
    """Stationary-weighted squared Hellinger distance between two kernels."""
    _check_pair(mix_a, mix_b)
    weights = stationary_block_law(truth, mix_a.order)
    gap = (np.sqrt(mix_a.table) - np.sqrt(mix_b.table)) ** 2
    return float((weights * gap.sum(axis=1)).sum())


def bernstein_norm(
    truth: MarkovModel, mix: MixtureKernel, path, r: int, up_to: int
) -> float:
    """Predictable phi-norm of the half log-ratio increments along a path.

    ``8 sum_{i=r+1}^{up_to} sum_a P*(a|ctx_i) phi(|log(mix/P*)|/2)``; this is
    the quantity that controls the martingale tails and never exceeds eight
    times the count-weighted Hellinger distance to the truth.
    """
    if r != mix.order:
        raise ValueError(f"order {r} does not match the mixture order {mix.order}")
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    if up_to > symbols.shape[0]:
        raise ValueError(f"up_to {up_to} exceeds path length {symbols.shape[0]}")
    if up_to <= r:
        return 0.0
    codes = context_codes(symbols[:up_to], r, mix.m)
    t_rows = truth.kernel[codes % truth.n_contexts]
    mask = t_rows > 0.0
    ratio = np.ones_like(t_rows)
    np.divide(mix.table[codes], t_rows, out=ratio, where=mask)
    contrib = np.where(mask, t_rows * phi(0.5 * np.abs(np.log(ratio))), 0.0)
    return 8.0 * float(contrib.sum())


# -- bracket grids -----------------------------------------------------------


def bracket_grid(
    truth: MarkovModel, kernel: np.ndarray, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper envelopes of a kernel on a sqrt-weighted grid of pitch beta.

    For each context a and symbol b the value sqrt(P*(a)) sqrt(P(b|a)) is
    rounded down/up to the grid beta * Z+, giving functions with
    lower <= P <= upper and sqrt(upper) - sqrt(lower) <= beta / sqrt(P*(a))
    on supported contexts.  Contexts with P*(a) = 0 carry no constraint and
    get lower = upper = P.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    kernel = np.asarray(kernel, dtype=np.float64)
    size, m = kernel.shape
    r = 0
    while truth.m**r < size:
        r += 1
    if truth.m**r != size or truth.m != m:
        raise ValueError("kernel shape does not match the truth's alphabet")
    weights = stationary_block_law(truth, r)
    lower = kernel.copy()
    upper = kernel.copy()
    supported = weights > 0.0
    w = np.sqrt(weights[supported])[:, None]
    z = w * np.sqrt(kernel[supported]) / beta
    lower[supported] = (np.floor(z) * beta / w) ** 2
    upper[supported] = (np.ceil(z) * beta / w) ** 2
    return lower, upper


def bracket_log_envelopes(
    truth: MarkovModel,
    kernel: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    path,
    r: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pathwise log-ratio envelopes built from a bracket pair.

    Returns (Lambda, Upsilon, xi) over steps i = r+1..n, where xi is the
    log-ratio of the truth-mixed kernel against the truth and Lambda/Upsilon
    are the same transform of the bracket envelopes; Lambda <= xi <= Upsilon
    pointwise whenever lower <= kernel <= upper.
    """
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    m = truth.m
    codes = context_codes(symbols, r, m)
    nxt = symbols[r:]
    t_obs = truth.kernel[codes % truth.n_contexts, nxt]
    if np.any(t_obs <= 0.0):
        raise ValueError("path has zero probability under the truth")

    def logratio(table):
        mixed = 0.5 * (np.asarray(table, dtype=np.float64)[codes, nxt] + t_obs)
        return np.log(mixed / t_obs)

    return logratio(lower), logratio(upper), logratio(kernel)


def entropy_bound(
    n: int,
    r: int,
    sigma: float,
    delta: float,
    m: int,
    C5: float,
    c: float | None = None,
) -> float:
    """Bracketing-entropy bound ``m**(r+1) log(C5 sqrt((2n-r) sigma) / delta)``.

    When ``c`` is given the admissible range 0 < delta <= c sqrt((2n-r) sigma)
    is enforced.
    """
    if sigma <= 0 or delta <= 0:
        raise ValueError("sigma and delta must be > 0")
    scale = math.sqrt((2 * n - r) * sigma)
    if c is not None and delta > c * scale:
        raise ValueError(f"delta {delta} outside the admissible range (0, {c * scale}]")
    return m ** (r + 1) * math.log(C5 * scale / delta)


# -- closed-form tail bounds -------------------------------------------------


def bernstein_tail_bound(alpha: float, K: float, R: float) -> float:
    """exp(-alpha**2 / (2 (K alpha + R))): tail of a phi-controlled martingale
    maximum at level alpha under a predictable-norm cap R."""
    if alpha <= 0 or K <= 0 or R <= 0:
        raise ValueError("alpha, K and R must be > 0")
    return math.exp(-(alpha**2) / (2.0 * (K * alpha + R)))


def maximal_bound(alpha: float, C_universal: float, c1: float, R: float) -> float:
    """2 exp(-alpha**2 / (C**2 (c1+1) R)): tail of the supremum over a
    bracketed family of martingale maxima."""
    if alpha <= 0 or C_universal <= 0 or c1 <= 0 or R <= 0:
        raise ValueError("all arguments must be > 0")
    return 2.0 * math.exp(-(alpha**2) / (C_universal**2 * (c1 + 1.0) * R))


# -- named constants ---------------------------------------------------------


@dataclass(frozen=True)
class BoundParams:
    """The constants used by the bound evaluators and Monte Carlo verifiers.

    C3 and C4 are the explicit values the count/stationary Hellinger
    comparison yields at a given eta; C5, C6, c, c0, c1 and C1 follow from
    them.  C0, C2 (via ``self.C2(m)``), C_star and alpha_star have no
    constructive form and stay user-settable.
    """

    eta: float
    K: float = 2.0
    C_universal: float = 100.0
    C0: float | None = None
    C_star: float | None = None
    alpha_star: float | None = None
    C3: float = field(init=False)
    C4: float = field(init=False)
    c: float = field(init=False)
    c0: float = field(init=False)
    c1: float = field(init=False)
    C1: float = field(init=False)
    C5: float = field(init=False)
    C6: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if self.K <= 0 or self.C_universal <= 0:
            raise ValueError("K and the universal constant must be > 0")
        eta, C = self.eta, self.C_universal
        c3 = 4.0 * (1.0 + eta) / (1.0 - eta)
        c4 = 1.0 / (1.0 - eta)
        c = math.sqrt(8.0 * c3 / c4)
        c1 = 1.0 / (8.0 * c3)
        c0 = C * math.sqrt(c1 + 1.0)
        c5 = (8.0 * math.sqrt(c4) + c) * math.sqrt(2.0 * math.pi * math.e)
        amp = math.sqrt(4.0 * c4) * c5

        def integrand(v):
            return math.sqrt(math.log(amp / v))

        c6, _ = quad(integrand, 0.0, math.sqrt(8.0 * c3), limit=200)
        object.__setattr__(self, "C3", c3)
        object.__setattr__(self, "C4", c4)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "C1", 32.0 * C**2 * (c3 + 0.125))
        object.__setattr__(self, "C5", c5)
        object.__setattr__(self, "C6", c6)

    def C2(self, m: int) -> float:
        """Smallest deviation level the maximal bound covers, per alphabet."""
        return 4.0 * self.C6**2 * self.C_universal**2 * (self.c1 + 1.0) * m

    def C1_prime(self, m: int) -> float:
        """Prefactor of the exponential deviation tail."""
        return 2.0 / (1.0 - math.exp(-self.C2(m) / self.C1))

    def to_dict(self) -> dict:
        out = {
            "eta": self.eta,
            "K": self.K,
            "C_universal": self.C_universal,
            "C3": self.C3,
            "C4": self.C4,
            "c": self.c,
            "c0": self.c0,
            "c1": self.c1,
            "C1": self.C1,
            "C5": self.C5,
            "C6": self.C6,
        }
        for name in ("C0", "C_star", "alpha_star"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out
