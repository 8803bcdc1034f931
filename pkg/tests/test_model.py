"""Chain construction, stationary laws, sampling, and true-law likelihoods."""

import math

import numpy as np
import pytest

from markovorder import (
    Alphabet,
    MarkovModel,
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
from markovorder.model import lift_kernel
from markovorder.rng import derive_seed

TWO_STATE = MarkovModel([[0.7, 0.3], [0.2, 0.8]])  # P(1|0)=0.3, P(1|1)=0.8


def power_iteration_oracle(kernel, m, order, iters=200_000, tol=1e-13):
    """Independent stationary-law oracle: brute-force iteration of the
    context-chain map, no linear solve involved."""
    size = m**order
    pi = np.full(size, 1.0 / size)
    mod = m ** (order - 1) if order >= 1 else 1
    targets = (np.arange(size)[:, None] % mod) * m + np.arange(m)[None, :]
    for _ in range(iters):
        nxt = np.zeros(size)
        np.add.at(nxt, targets.ravel(), (pi[:, None] * kernel).ravel())
        if np.abs(nxt - pi).max() < tol:
            return nxt
        pi = nxt
    return pi


class TestStationary:
    def test_iid_uniform_two_symbols(self):
        model = MarkovModel([[0.5, 0.5], [0.5, 0.5]])
        assert stationary_distribution(model) == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_two_state_balance_equation(self):
        p, q = 0.3, 0.2  # P(1|0), P(0|1)
        pi = stationary_distribution(TWO_STATE)
        assert pi == pytest.approx([q / (p + q), p / (p + q)], abs=1e-12)

    def test_random_order2_matches_power_iteration(self):
        model = random_model(2, 2, seed=314)
        pi = stationary_distribution(model)
        oracle = power_iteration_oracle(model.kernel, 2, 2)
        assert np.abs(pi - oracle).max() < 1e-10

    def test_fixed_point_property(self):
        for seed in range(5):
            model = random_model(3, 1, seed=seed)
            pi = stationary_distribution(model)
            nxt = np.zeros_like(pi)
            targets = (np.arange(3)[:, None] % 1) * 0  # order 1, m=3: target = symbol
            for c in range(3):
                for b in range(3):
                    nxt[b] += pi[c] * model.kernel[c, b]
            assert np.abs(nxt - pi).max() < 1e-10
            assert pi.min() >= 0 and abs(pi.sum() - 1.0) < 1e-12

    def test_reducible_chain_raises(self):
        # two absorbing states: two closed classes
        model = MarkovModel([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ReducibleChainError):
            stationary_distribution(model)

    def test_transient_context_gets_zero_mass(self):
        # state 1 always moves to 0, 0 stays: unique closed class {0}
        model = MarkovModel([[1.0, 0.0], [1.0, 0.0]], initial=[0.5, 0.5])
        assert stationary_distribution(model) == pytest.approx([1.0, 0.0])

    def test_power_iteration_branch_matches_product_law(self):
        # 2^13 contexts exceeds the dense-solve limit; the stationary law of a
        # lifted order-1 chain factorizes, giving an independent oracle
        base = TWO_STATE
        lifted = MarkovModel(lift_kernel(base.kernel, 2, 13))
        pi = stationary_distribution(lifted)
        pi_base = stationary_distribution(base)
        digits = (np.arange(2**13)[:, None] >> np.arange(12, -1, -1)[None, :]) & 1
        oracle = pi_base[digits[:, 0]]
        for j in range(1, 13):
            oracle = oracle * base.kernel[digits[:, j - 1], digits[:, j]]
        assert np.abs(pi - oracle).max() < 1e-10


class TestBlockLaw:
    def test_marginal_consistency(self):
        model = random_model(2, 2, seed=9)
        law3 = stationary_block_law(model, 3)
        law2 = stationary_block_law(model, 2)
        law1 = stationary_block_law(model, 1)
        # summing out the newest symbol recovers the shorter law of the prefix;
        # summing out the oldest symbol uses stationarity
        assert law3.reshape(4, 2).sum(axis=1) == pytest.approx(law2, abs=1e-12)
        assert law3.reshape(2, 4).sum(axis=0) == pytest.approx(law2, abs=1e-12)
        assert law2.reshape(2, 2).sum(axis=0) == pytest.approx(law1, abs=1e-12)

    def test_prefix_probability_exceeds_lambda_power(self):
        model = random_model(2, 1, seed=21)
        lam = min_positive_transition(model)
        law = stationary_block_law(model, 5)
        positive = law[law > 0.0]
        assert np.all(positive > lam**5)

    def test_prefix_floor_on_sampled_prefixes(self):
        model = random_model(3, 1, seed=4)
        lam = min_positive_transition(model)
        law = stationary_block_law(model, 5)
        paths = sample_paths(model, 5, [derive_seed(5, i) for i in range(100)])
        weights = 3 ** np.arange(4, -1, -1)
        codes = paths @ weights
        assert np.all(law[codes] > lam**5)


class TestTrueOrder:
    def test_identical_rows_collapse_to_iid(self):
        assert true_order(MarkovModel([[0.3, 0.7], [0.3, 0.7]])) == 0

    def test_distinct_rows_are_order_one(self):
        assert true_order(MarkovModel([[0.3, 0.7], [0.8, 0.2]])) == 1

    def test_lifted_order_one_detected_inside_order_two(self):
        base = np.array([[0.3, 0.7], [0.8, 0.2]])
        lifted = lift_kernel(base, 2, 2)
        model = MarkovModel(lifted)
        assert model.order == 2
        assert true_order(model) == 1

    def test_lifting_preserves_true_order(self):
        base = random_model(2, 1, seed=77)
        for r in (2, 3):
            assert true_order(MarkovModel(lift_kernel(base.kernel, 2, r))) == 1


class TestSamplePath:
    def test_deterministic_kernel_forces_path(self):
        # cycle 0 -> 1 -> 0 from a forced start
        model = MarkovModel([[0.0, 1.0], [1.0, 0.0]], initial=[1.0, 0.0])
        path = sample_path(model, 9, seed=1)
        assert path.symbols.tolist() == [0, 1, 0, 1, 0, 1, 0, 1, 0]

    def test_same_seed_identical(self):
        a = sample_path(TWO_STATE, 500, seed=99)
        b = sample_path(TWO_STATE, 500, seed=99)
        assert np.array_equal(a.symbols, b.symbols)
        assert a.seed == b.seed == 99

    def test_lln_against_stationary_law(self):
        n = 10**6
        path = sample_path(TWO_STATE, n, seed=2024)
        freq1 = path.symbols.mean()
        assert abs(freq1 - 0.6) < 3.0 / math.sqrt(n)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            sample_path(TWO_STATE, 0, seed=1)

    def test_batch_matches_scalar_sampler(self):
        for model in (TWO_STATE, random_model(3, 2, seed=8)):
            seeds = [derive_seed(11, i) for i in range(6)]
            batch = sample_paths(model, 40, seeds)
            for i, s in enumerate(seeds):
                assert np.array_equal(batch[i], sample_path(model, 40, s).symbols)

    def test_path_shorter_than_order(self):
        model = random_model(2, 3, seed=15)
        path = sample_path(model, 2, seed=3)
        assert len(path) == 2


class TestTrueConditionalLikelihood:
    def test_deterministic_chain_gives_zero(self):
        model = MarkovModel([[0.0, 1.0], [1.0, 0.0]], initial=[1.0, 0.0])
        path = sample_path(model, 8, seed=1)
        assert log_true_conditional_likelihood(model, path, 1) == 0.0

    def test_impossible_transition_gives_neg_inf_sentinel(self):
        model = MarkovModel([[1.0, 0.0], [1.0, 0.0]], initial=[1.0, 0.0])
        value = log_true_conditional_likelihood(model, np.array([0, 0, 1, 0]), 1)
        assert value == float("-inf")
        assert not math.isnan(value)

    def test_hand_product_iid(self):
        model = MarkovModel([[0.75, 0.25]])  # order 0, P(1) = 0.25
        value = log_true_conditional_likelihood(model, np.array([0, 0, 1, 0]), 0)
        assert value == pytest.approx(3 * math.log(0.75) + math.log(0.25), abs=1e-12)

    def test_below_true_order_rejected(self):
        with pytest.raises(ValueError):
            log_true_conditional_likelihood(TWO_STATE, np.array([0, 1, 0, 1]), 0)

    def test_conditioning_order_only_shifts_start(self):
        path = sample_path(TWO_STATE, 50, seed=5)
        l1 = log_true_conditional_likelihood(TWO_STATE, path, 1)
        l3 = log_true_conditional_likelihood(TWO_STATE, path, 3)
        # dropping the first two sampled factors
        codes = path.symbols[:-1]
        steps = np.log(TWO_STATE.kernel[codes, path.symbols[1:]])
        assert l1 == pytest.approx(steps.sum(), abs=1e-10)
        assert l3 == pytest.approx(steps[2:].sum(), abs=1e-10)


class TestMinPositiveTransition:
    def test_uniform(self):
        assert min_positive_transition(MarkovModel([[0.5, 0.5], [0.5, 0.5]])) == 0.5

    def test_two_rows(self):
        assert min_positive_transition(MarkovModel([[0.3, 0.7], [0.8, 0.2]])) == 0.2


class TestValidation:
    def test_alphabet_size_bound(self):
        with pytest.raises(ValueError):
            Alphabet(1)
        assert Alphabet(2).size == 2

    def test_bad_row_sum_rejected(self):
        with pytest.raises(ValueError):
            MarkovModel([[0.5, 0.6], [0.5, 0.5]])

    def test_negative_entry_rejected(self):
        with pytest.raises(ValueError):
            MarkovModel([[-0.1, 1.1], [0.5, 0.5]])

    def test_bad_initial_rejected(self):
        with pytest.raises(ValueError):
            MarkovModel([[0.5, 0.5], [0.5, 0.5]], initial=[0.7, 0.7])

    def test_immutability(self):
        model = MarkovModel([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError):
            model.kernel[0, 0] = 0.9


class TestModelFiles:
    def test_roundtrip(self, tmp_path):
        model = random_model(3, 2, seed=1)
        target = tmp_path / "chain.model"
        write_model_file(model, target)
        loaded = read_model_file(target)
        assert loaded.m == 3 and loaded.order == 2
        assert np.abs(loaded.kernel - model.kernel).max() < 1e-11
        assert np.abs(loaded.initial - model.initial).max() < 1e-11

    def test_comments_and_blank_lines(self, tmp_path):
        target = tmp_path / "chain.model"
        target.write_text(
            "# two-state chain\n"
            "alphabet_size: 2\n\n"
            "order: 1\n"
            "kernel:\n"
            "  0.7 0.3   # context 0\n"
            "  0.2 0.8\n"
        )
        model = read_model_file(target)
        assert model.kernel[1, 1] == 0.8

    def test_truncated_kernel_rejected(self, tmp_path):
        target = tmp_path / "bad.model"
        target.write_text("alphabet_size: 2\norder: 1\nkernel:\n  0.7 0.3\n")
        with pytest.raises(ValueError):
            read_model_file(target)
