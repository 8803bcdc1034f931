"""Experiment configuration files.

INI-style key/value sections parsed with the standard library; the full
grammar with defaults is documented in the README.  Field errors raise
ConfigError naming the offending section.key.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .penalty import CutoffSpec, PenaltySpec, parse_cutoff, parse_penalty


class ConfigError(ValueError):
    """A config field is missing, malformed, or violates an invariant."""


@dataclass
class VerifySettings:
    checks: tuple[str, ...] = ()
    eta: float = 0.5
    rho: int = 3
    instances: int = 50
    sandwich_n: int = 256
    bernstein_replications: int = 10**4
    bernstein_n: int = 128
    bernstein_r: int = 1
    bernstein_alpha_count: int = 10
    deviation_replications: int = 10**4
    deviation_n: int = 64
    deviation_r: int = 2
    deviation_eps_max: float = 8.0
    deviation_eps_count: int = 9
    lil_checkpoints: tuple[int, ...] = (1024, 4096, 16384)
    lil_seeds: int = 3
    typicality_n_small: int = 1024
    typicality_n_large: int = 16384
    typicality_seeds: int = 20
    bracket_beta: float = 0.05
    bracket_kernels: int = 20
    bracket_paths: int = 10
    bracket_path_len: int = 128
    bracket_sigma: float = 0.01
    bracket_samples: int = 500
    candidate_file: str | None = None


@dataclass
class ExperimentConfig:
    model_file: str
    n_grid: tuple[int, ...]
    penalty: PenaltySpec
    penalties: tuple[PenaltySpec, ...]
    cutoff: CutoffSpec
    replications: int
    seed: int
    jobs: int
    out_dir: str
    verify: VerifySettings


KNOWN_CHECKS = (
    "norm-bound",
    "hellinger-sandwich",
    "bernstein",
    "bracket",
    "deviation",
    "lil",
    "typicality",
)


def _get(parser, section, key, default=None, required=False):
    if parser.has_option(section, key):
        return parser.get(section, key)
    if required:
        raise ConfigError(f"{section}.{key}: required field is missing")
    return default


def _parse_int(section, key, raw, minimum=None):
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: expected an integer, got {raw!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{section}.{key}: must be >= {minimum}, got {value}")
    return value


def _parse_float(section, key, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: expected a number, got {raw!r}")


def _parse_int_list(section, key, raw, increasing=False):
    try:
        values = tuple(int(tok) for tok in raw.split())
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected whitespace-separated integers")
    if not values:
        raise ConfigError(f"{section}.{key}: must be nonempty")
    if increasing and any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{section}.{key}: must be strictly increasing")
    return values


def load_config(path: str) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:  # OSError propagates to the CLI as an IO failure
        parser.read_file(fh)

    model_file = _get(parser, "model", "file", required=True)
    if not os.path.isabs(model_file):
        model_file = os.path.join(os.path.dirname(os.path.abspath(path)), model_file)
    if not os.path.exists(model_file):
        raise ConfigError(f"model.file: no such file: {model_file}")

    n_grid = _parse_int_list(
        "experiment", "n_grid", _get(parser, "experiment", "n_grid", required=True),
        increasing=True,
    )
    replications = _parse_int(
        "experiment", "replications",
        _get(parser, "experiment", "replications", "1"), minimum=1,
    )
    seed = _parse_int("experiment", "seed", _get(parser, "experiment", "seed", "0"))
    jobs = _parse_int("experiment", "jobs", _get(parser, "experiment", "jobs", "1"), minimum=1)
    out_dir = _get(parser, "experiment", "out", "out")

    try:
        pen = parse_penalty(_get(parser, "penalty", "spec", "loglog C=5"))
    except ValueError as exc:
        raise ConfigError(f"penalty.spec: {exc}")
    pens_raw = _get(parser, "penalty", "specs")
    penalties = ()
    if pens_raw:
        try:
            penalties = tuple(parse_penalty(tok) for tok in pens_raw.split(",") if tok.strip())
        except ValueError as exc:
            raise ConfigError(f"penalty.specs: {exc}")
    try:
        cutoff = parse_cutoff(_get(parser, "cutoff", "spec", "sublog"))
    except ValueError as exc:
        raise ConfigError(f"cutoff.spec: {exc}")

    verify = VerifySettings()
    if parser.has_section("verify"):
        checks_raw = _get(parser, "verify", "checks", "")
        checks = tuple(tok for tok in checks_raw.split())
        for check in checks:
            if check not in KNOWN_CHECKS:
                raise ConfigError(
                    f"verify.checks: unknown check {check!r}; known: {', '.join(KNOWN_CHECKS)}"
                )
        verify.checks = checks
        for name, caster in (
            ("eta", _parse_float),
            ("bracket_beta", _parse_float),
            ("bracket_sigma", _parse_float),
            ("deviation_eps_max", _parse_float),
        ):
            raw = _get(parser, "verify", name)
            if raw is not None:
                setattr(verify, name, caster("verify", name, raw))
        for name in (
            "rho", "instances", "sandwich_n",
            "bernstein_replications", "bernstein_n", "bernstein_r",
            "bernstein_alpha_count",
            "deviation_replications", "deviation_n", "deviation_r",
            "deviation_eps_count",
            "lil_seeds", "typicality_n_small", "typicality_n_large",
            "typicality_seeds", "bracket_kernels", "bracket_paths",
            "bracket_path_len", "bracket_samples",
        ):
            raw = _get(parser, "verify", name)
            if raw is not None:
                setattr(verify, name, _parse_int("verify", name, raw, minimum=1))
        raw = _get(parser, "verify", "lil_checkpoints")
        if raw is not None:
            verify.lil_checkpoints = _parse_int_list(
                "verify", "lil_checkpoints", raw, increasing=True
            )
        raw = _get(parser, "verify", "candidate_file")
        if raw is not None:
            candidate = raw
            if not os.path.isabs(candidate):
                candidate = os.path.join(os.path.dirname(os.path.abspath(path)), candidate)
            if not os.path.exists(candidate):
                raise ConfigError(f"verify.candidate_file: no such file: {candidate}")
            verify.candidate_file = candidate
        if not 0.0 < verify.eta < 1.0:
            raise ConfigError("verify.eta: must lie in (0, 1)")

    return ExperimentConfig(
        model_file=model_file,
        n_grid=n_grid,
        penalty=pen,
        penalties=penalties,
        cutoff=cutoff,
        replications=replications,
        seed=seed,
        jobs=jobs,
        out_dir=out_dir,
        verify=verify,
    )
