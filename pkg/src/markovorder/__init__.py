"""Penalized-likelihood order estimation for finite-alphabet Markov chains.

The package has three layers: chain modelling and exact context counting
(``model``, ``counts``), the estimator with its penalty/cutoff families
(``likelihood``, ``penalty``, ``estimator``), and a diagnostics suite that
evaluates the concentration quantities behind the estimator's consistency
and verifies their inequalities by Monte Carlo (``diagnostics``).  The
``cli`` module wires everything to config-driven commands.
"""

from . import diagnostics
from .counts import ContextCounts, build_counts, extend_counts
from .estimator import (
    EstimateResult,
    ExperimentResult,
    consistency_experiment,
    estimate_order,
    underestimation_gap,
)
from .likelihood import (
    LilStatistic,
    MixtureKernel,
    delta_running_max,
    delta_statistic,
    kl_compensator,
    lil_statistic,
    lr_statistic,
    martingale_path,
    max_loglik,
    mixture_kernel,
)
from .model import (
    Alphabet,
    MarkovModel,
    PathSample,
    ReducibleChainError,
    log_true_conditional_likelihood,
    min_positive_transition,
    random_model,
    read_model_file,
    sample_path,
    sample_paths,
    stationary_block_law,
    stationary_distribution,
    true_order,
    write_model_file,
)
from .penalty import (
    AlphaLogCutoff,
    BICPenalty,
    ConstantCutoff,
    CsiszarPenalty,
    CustomPenalty,
    LogLogFPenalty,
    LogLogPenalty,
    SubLogCutoff,
    corollary_conditions_check,
    cutoff_value,
    default_loglog_constant,
    parse_cutoff,
    parse_penalty,
    penalty_value,
)
from .rng import derive_seed

__version__ = "0.1.0"
