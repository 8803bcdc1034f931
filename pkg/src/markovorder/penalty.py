"""Penalty and cutoff families for the penalized-likelihood estimator.

Penalties (natural log throughout):

* ``loglog``:  C * m**r * log log n, consistent once C exceeds twice the
  alphabet size when an order bound is imposed; default C = 2m + 1.
* ``bic``:     (1/2) * m**r * (m - 1) * log n.
* ``csiszar``: c * m**r * log n, consistent for every c > 0 without a cutoff.
* ``loglogf``: m**r * f(n) * log log n for a user-supplied f.
* ``custom``:  explicit (n, r) -> value table.

Cutoffs bound the orders searched at sample size n; by default every
cutoff is additionally capped at floor(log n / log m), the depth beyond
which per-sample likelihood gains are bounded and count tables are empty
anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

N_MIN = 3
LOGLOG_CLAMP_N = math.exp(math.e)  # ~15.15, where log log n reaches 1


def _loglog(n: float) -> float:
    # clamp just below 16 so small-n penalties never go negative
    return math.log(math.log(max(float(n), LOGLOG_CLAMP_N)))


def default_loglog_constant(m: int) -> float:
    """Smallest integer margin above twice the alphabet size."""
    return 2.0 * m + 1.0


@dataclass(frozen=True)
class LogLogPenalty:
    C: float

    name = "loglog"

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("loglog constant C must be > 0")

    def value(self, n: float, r: int, m: int) -> float:
        return self.C * m**r * _loglog(n)

    def describe(self) -> str:
        return f"loglog(C={self.C:g})"


@dataclass(frozen=True)
class LogLogFPenalty:
    f: Callable[[float], float]
    label: str = "f"

    name = "loglogf"

    def value(self, n: float, r: int, m: int) -> float:
        return m**r * float(self.f(n)) * _loglog(n)

    def describe(self) -> str:
        return f"loglogf({self.label})"


@dataclass(frozen=True)
class BICPenalty:
    name = "bic"

    def value(self, n: float, r: int, m: int) -> float:
        return 0.5 * m**r * (m - 1) * math.log(n)

    def describe(self) -> str:
        return "bic"


@dataclass(frozen=True)
class CsiszarPenalty:
    c: float

    name = "csiszar"

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("csiszar constant c must be > 0")

    def value(self, n: float, r: int, m: int) -> float:
        return self.c * m**r * math.log(n)

    def describe(self) -> str:
        return f"csiszar(c={self.c:g})"


@dataclass(frozen=True)
class CustomPenalty:
    table: Mapping[tuple[int, int], float]
    label: str = "custom"

    name = "custom"

    def __post_init__(self):
        if any(v < 0 for v in self.table.values()):
            raise ValueError("custom penalty table must be nonnegative")

    def value(self, n: float, r: int, m: int) -> float:
        try:
            return float(self.table[(int(n), int(r))])
        except KeyError:
            raise ValueError(f"custom penalty has no entry for (n={n}, r={r})")

    def describe(self) -> str:
        return self.label


PenaltySpec = LogLogPenalty | LogLogFPenalty | BICPenalty | CsiszarPenalty | CustomPenalty


def penalty_value(spec: PenaltySpec, n: float, r: int, m: int) -> float:
    """pen(n, r) for the given family; requires n >= 3."""
    if n < N_MIN:
        raise ValueError(f"penalties need n >= {N_MIN}, got {n}")
    if r < 0:
        raise ValueError("order must be nonnegative")
    return spec.value(n, r, m)


def implied_f(spec: PenaltySpec, n: float, m: int) -> float:
    """The factor f(n) when the penalty is written m**r * f(n) * log log n."""
    return penalty_value(spec, n, 0, m) / _loglog(n)


# -- cutoffs ----------------------------------------------------------------


@dataclass(frozen=True)
class ConstantCutoff:
    K: int
    hard_cap: bool = True

    name = "constant"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("constant cutoff must be >= 1")

    def raw(self, n: float, m: int) -> float:
        return float(self.K)

    def describe(self) -> str:
        return f"constant(K={self.K})"


@dataclass(frozen=True)
class AlphaLogCutoff:
    alpha: float
    hard_cap: bool = True

    name = "alphalog"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")

    def raw(self, n: float, m: int) -> float:
        return math.floor(self.alpha * math.log(n))

    def describe(self) -> str:
        return f"alphalog(alpha={self.alpha:g})"


@dataclass(frozen=True)
class SubLogCutoff:
    """ceil(log n / log log n): grows without bound but is o(log n)."""

    hard_cap: bool = True

    name = "sublog"

    def raw(self, n: float, m: int) -> float:
        return math.ceil(math.log(n) / math.log(math.log(max(n, LOGLOG_CLAMP_N))))

    def describe(self) -> str:
        return "sublog"


CutoffSpec = ConstantCutoff | AlphaLogCutoff | SubLogCutoff


def cutoff_value(spec: CutoffSpec, n: float, m: int) -> int:
    """kappa(n): the number of orders searched (estimator scans r < kappa)."""
    if n < N_MIN:
        raise ValueError(f"cutoffs need n >= {N_MIN}, got {n}")
    value = int(spec.raw(n, m))
    if spec.hard_cap:
        value = min(value, math.floor(math.log(n) / math.log(m)))
    return max(value, 1)


def default_alpha_star(m: int) -> float:
    """Default slope for the kappa(n) <= alpha* log n condition check."""
    return 0.2 / math.log(m)


@dataclass(frozen=True)
class CorollaryReport:
    """Numeric check of the consistency conditions on a finite grid."""

    n_grid: tuple[int, ...]
    f_values: tuple[float, ...]
    ratio_values: tuple[float, ...]  # f(n) log log n / n
    kappa_values: tuple[int, ...]
    liminf_ok: bool
    ratio_ok: bool
    kappa_nondecreasing: bool
    kappa_bound_ok: bool

    @property
    def passed(self) -> bool:
        return (
            self.liminf_ok
            and self.ratio_ok
            and self.kappa_nondecreasing
            and self.kappa_bound_ok
        )

    def to_dict(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "f_values": list(self.f_values),
            "ratio_values": list(self.ratio_values),
            "kappa_values": list(self.kappa_values),
            "liminf_ok": self.liminf_ok,
            "ratio_ok": self.ratio_ok,
            "kappa_nondecreasing": self.kappa_nondecreasing,
            "kappa_bound_ok": self.kappa_bound_ok,
            "passed": self.passed,
        }


def corollary_conditions_check(
    pen: PenaltySpec,
    cut: CutoffSpec,
    C_star: float,
    alpha_star: float,
    n_grid,
    m: int,
    ratio_limit: float = 1e-3,
) -> CorollaryReport:
    """Evaluate the penalty/cutoff consistency conditions on an n grid.

    Checks, numerically: the implied f(n) stays at or above C_star on the
    upper half of the grid; f(n) log log n / n decreases along the grid and
    falls below ``ratio_limit`` at the top; kappa is nondecreasing; and
    kappa(n) <= alpha_star * log n everywhere.
    """
    grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n grid must be strictly increasing")
    f_vals = [implied_f(pen, n, m) for n in grid]
    ratios = [f * _loglog(n) / n for f, n in zip(f_vals, grid)]
    kappas = [cutoff_value(cut, n, m) for n in grid]
    tail = f_vals[len(f_vals) // 2 :]
    liminf_ok = all(f >= C_star - 1e-12 for f in tail)
    ratio_ok = (
        all(b <= a + 1e-15 for a, b in zip(ratios, ratios[1:]))
        and ratios[-1] < ratio_limit
    )
    nondec = all(b >= a for a, b in zip(kappas, kappas[1:]))
    bound_ok = all(k <= alpha_star * math.log(n) for k, n in zip(kappas, grid))
    return CorollaryReport(
        tuple(grid),
        tuple(f_vals),
        tuple(ratios),
        tuple(kappas),
        liminf_ok,
        ratio_ok,
        nondec,
        bound_ok,
    )


# -- spec strings used by config files and CSV columns ----------------------


def parse_penalty(text: str) -> PenaltySpec:
    """Parse a penalty spec string: ``loglog C=5``, ``bic``, ``csiszar c=1``."""
    parts = text.strip().split()
    if not parts:
        raise ValueError("empty penalty spec")
    name, args = parts[0].lower(), dict(p.split("=", 1) for p in parts[1:])
    if name == "loglog":
        if "C" not in args:
            raise ValueError("loglog penalty needs C=<value>")
        return LogLogPenalty(C=float(args["C"]))
    if name == "bic":
        return BICPenalty()
    if name == "csiszar":
        if "c" not in args:
            raise ValueError("csiszar penalty needs c=<value>")
        return CsiszarPenalty(c=float(args["c"]))
    raise ValueError(f"unknown penalty family: {name!r}")


def parse_cutoff(text: str) -> CutoffSpec:
    """Parse a cutoff spec string: ``sublog``, ``constant K=3``, ``alphalog alpha=0.2``."""
    parts = text.strip().split()
    if not parts:
        raise ValueError("empty cutoff spec")
    name, args = parts[0].lower(), dict(p.split("=", 1) for p in parts[1:])
    hard_cap = args.get("hard_cap", "true").lower() != "false"
    if name == "sublog":
        return SubLogCutoff(hard_cap=hard_cap)
    if name == "constant":
        return ConstantCutoff(K=int(args["K"]), hard_cap=hard_cap)
    if name == "alphalog":
        return AlphaLogCutoff(alpha=float(args["alpha"]), hard_cap=hard_cap)
    raise ValueError(f"unknown cutoff family: {name!r}")
