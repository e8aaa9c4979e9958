"""Master chain construction, class structure, and observed-process analysis."""

import numpy as np
import pytest

import influencemodel as im
from influencemodel import AmbiguousStationaryError, CapExceededError, MasterChain
from influencemodel.chain import check_observed, lumped_one_step_chain, projection_index
from influencemodel.model import StateCodec
from influencemodel.reference import (
    CONDITIONAL_GIVEN_LAST,
    CONDITIONAL_GIVEN_LAST_TWO,
    MARKOV_GAP_HORIZON_2,
    REFERENCE_G,
    REFERENCE_PI,
    binary_copy_model,
)
from helpers import brute_force_observed_log_prob, power_iteration_stationary, random_model


class TestBuild:
    def test_reference_chain_reproduced_exactly(self, reference_chain):
        assert np.max(np.abs(reference_chain.G - REFERENCE_G)) <= 1e-15

    def test_rows_are_stochastic(self, reference_chain):
        assert np.max(np.abs(reference_chain.G.sum(axis=1) - 1.0)) <= 1e-12

    def test_rows_factor_into_site_marginals(self):
        # Marginalizing a row of G over the other sites must recover each
        # site's next-status distribution: rows are product measures.
        rng = np.random.default_rng(21)
        for _ in range(10):
            model = random_model(rng)
            chain = im.build_master_chain(model)
            codec = chain.codec
            for idx in range(codec.n_states):
                state = codec.decode(idx)
                row = chain.G[idx].reshape(model.m)
                for site in range(model.n):
                    axes = tuple(a for a in range(model.n) if a != site)
                    marg = row.sum(axis=axes) if axes else row
                    expected = im.next_status_distribution(model, state, site)
                    np.testing.assert_allclose(marg, expected, atol=1e-12)

    def test_state_cap_enforced(self, reference_model):
        with pytest.raises(CapExceededError):
            im.build_master_chain(reference_model, state_cap=2)
        with pytest.raises(CapExceededError):
            im.build_master_chain(binary_copy_model(21))

    def test_chain_shape_checked(self):
        with pytest.raises(ValueError):
            MasterChain(G=np.eye(3), m=(2, 2))

    def test_invalid_model_rejected(self):
        bad = im.InfluenceModel(
            D=[[0.6, 0.3], [0.3, 0.7]], m=(2, 2), A_shared=np.eye(2)
        )
        with pytest.raises(im.InvalidModelError):
            im.build_master_chain(bad)


class TestClasses:
    def test_reference_chain_single_recurrent_class(self, reference_chain):
        assert im.single_recurrent_class(reference_chain)
        dec = im.communicating_classes(reference_chain)
        assert dec.classes == (tuple(range(4)),)
        assert dec.recurrent == (True,)
        assert dec.absorbing == ()

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_binary_copy_has_two_absorbing_consensus_states(self, n):
        chain = im.build_master_chain(binary_copy_model(n))
        dec = im.communicating_classes(chain)
        consensus = {0, chain.n_states - 1}
        assert set(dec.absorbing) == consensus
        assert len(dec.absorbing) == 2
        assert not im.single_recurrent_class(chain)
        rec_states = {s for c in dec.recurrent_classes for s in c}
        assert rec_states == consensus

    def test_binary_copy_two_site_class_structure(self):
        chain = im.build_master_chain(binary_copy_model(2))
        dec = im.communicating_classes(chain)
        assert dec.classes == ((0,), (1, 2), (3,))
        assert dec.recurrent == (True, False, True)


class TestStationary:
    def test_reference_value(self, reference_pi):
        assert np.max(np.abs(reference_pi - REFERENCE_PI)) <= 1e-12

    def test_fixed_point(self, reference_chain, reference_pi):
        assert np.max(np.abs(reference_pi @ reference_chain.G - reference_pi)) <= 1e-12

    def test_agrees_with_power_iteration_oracle(self, reference_chain, reference_pi):
        oracle = power_iteration_stationary(reference_chain.G)
        assert np.max(np.abs(reference_pi - oracle)) <= 1e-12

    def test_random_positive_chains_have_positive_stationary(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            model = random_model(rng)
            chain = im.build_master_chain(model)
            assert im.single_recurrent_class(chain)
            sd = im.stationary_distribution(chain)
            assert sd.pi.min() > 0.0
            assert np.max(np.abs(sd.pi @ chain.G - sd.pi)) <= 1e-12
            oracle = power_iteration_stationary(chain.G)
            assert np.max(np.abs(sd.pi - oracle)) <= 1e-11

    def test_multiple_recurrent_classes_need_explicit_choice(self):
        chain = im.build_master_chain(binary_copy_model(2))
        with pytest.raises(AmbiguousStationaryError):
            im.stationary_distribution(chain)
        low = im.stationary_distribution(chain, class_index=0)
        np.testing.assert_allclose(low.pi, [1, 0, 0, 0], atol=1e-15)
        high = im.stationary_distribution(chain, class_index=2)
        np.testing.assert_allclose(high.pi, [0, 0, 0, 1], atol=1e-15)
        with pytest.raises(ValueError):
            im.stationary_distribution(chain, class_index=1)  # transient


class TestObservedPaths:
    def test_all_sites_path_matches_product_formula(self, reference_chain, reference_pi):
        rng = np.random.default_rng(23)
        codec = reference_chain.codec
        for _ in range(20):
            idx = rng.integers(0, 4, size=6)
            path = np.array([codec.decode(int(k)) for k in idx])
            got = im.observed_path_log_probability(
                reference_chain, reference_pi, (0, 1), path
            )
            expected = np.log(reference_pi[idx[0]])
            for a, b in zip(idx[:-1], idx[1:]):
                expected += np.log(reference_chain.G[a, b])
            assert abs(got - expected) <= 1e-14 * max(1.0, abs(expected))

    def test_zero_probability_path_is_minus_inf(self, reference_chain):
        init = np.array([1.0, 0.0, 0.0, 0.0])
        logp = im.observed_path_log_probability(
            reference_chain, init, (0,), [(2,), (1,)]
        )
        assert logp == -np.inf

    def test_empty_path_has_probability_one(self, reference_chain, reference_pi):
        logp = im.observed_path_log_probability(
            reference_chain, reference_pi, (0,), np.zeros((0, 1), dtype=np.int64)
        )
        assert logp == 0.0

    def test_path_shape_validated(self, reference_chain, reference_pi):
        with pytest.raises(ValueError):
            im.observed_path_log_probability(
                reference_chain, reference_pi, (0,), [(1, 1), (2, 2)]
            )

    def test_probability_version_exponentiates(self, reference_chain, reference_pi):
        logp = im.observed_path_log_probability(
            reference_chain, reference_pi, (0,), [(1,), (1,)]
        )
        p = im.observed_path_probability(reference_chain, reference_pi, (0,), [(1,), (1,)])
        assert abs(p - np.exp(logp)) <= 1e-15

    def test_agrees_with_brute_force_enumeration(self, reference_chain, reference_pi):
        rng = np.random.default_rng(24)
        for _ in range(10):
            vals = rng.integers(1, 3, size=(5, 1))
            got = im.observed_path_log_probability(
                reference_chain, reference_pi, (0,), vals
            )
            oracle = brute_force_observed_log_prob(
                reference_chain.G, reference_pi, (2, 2), (0,), vals
            )
            assert abs(got - oracle) <= 1e-12 * max(1.0, abs(oracle))


class TestConditionals:
    def test_exact_one_step_conditional(self, reference_chain, reference_pi):
        c1 = im.conditional_observed_probability(
            reference_chain, reference_pi, (0,), [(1,)], (1,)
        )
        assert abs(c1 - CONDITIONAL_GIVEN_LAST) <= 1e-12

    def test_exact_two_step_conditional(self, reference_chain, reference_pi):
        c2 = im.conditional_observed_probability(
            reference_chain, reference_pi, (0,), [(2,), (1,)], (1,)
        )
        assert abs(c2 - CONDITIONAL_GIVEN_LAST_TWO) <= 1e-12

    def test_conditioning_on_more_history_changes_the_answer(
        self, reference_chain, reference_pi
    ):
        # The observed site alone is not Markov: the value of the
        # observation two steps back shifts the one-step conditional.
        c1 = im.conditional_observed_probability(
            reference_chain, reference_pi, (0,), [(1,)], (1,)
        )
        c2 = im.conditional_observed_probability(
            reference_chain, reference_pi, (0,), [(2,), (1,)], (1,)
        )
        assert c1 - c2 > 0.06

    def test_zero_probability_history_raises(self, reference_chain):
        init = np.array([1.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            im.conditional_observed_probability(
                reference_chain, init, (0,), [(2,)], (1,)
            )


class TestMarkovianityGap:
    def test_reference_gap_at_horizon_two(self, reference_chain, reference_pi):
        gap = im.markovianity_gap(reference_chain, reference_pi, (0,), horizon=2)
        assert abs(gap - MARKOV_GAP_HORIZON_2) <= 1e-12

    def test_gap_grows_with_horizon(self, reference_chain, reference_pi):
        g2 = im.markovianity_gap(reference_chain, reference_pi, (0,), horizon=2)
        g4 = im.markovianity_gap(reference_chain, reference_pi, (0,), horizon=4)
        assert g4 >= g2 - 1e-15

    def test_observing_all_sites_gives_zero_gap(self):
        rng = np.random.default_rng(25)
        for _ in range(5):
            model = random_model(rng, n=2)
            chain = im.build_master_chain(model)
            pi = im.stationary_distribution(chain).pi
            gap = im.markovianity_gap(chain, pi, tuple(range(model.n)), horizon=3)
            assert gap <= 1e-12

    def test_horizon_validation(self, reference_chain, reference_pi):
        with pytest.raises(ValueError):
            im.markovianity_gap(reference_chain, reference_pi, (0,), horizon=1)
        with pytest.raises(CapExceededError):
            im.markovianity_gap(reference_chain, reference_pi, (0,), horizon=13)
        with pytest.raises(CapExceededError):
            im.markovianity_gap(
                reference_chain, reference_pi, (0,), horizon=5, horizon_cap=4
            )


class TestLumpedChain:
    def test_matches_exact_conditionals(self, reference_chain, reference_pi):
        L = lumped_one_step_chain(reference_chain, reference_pi, (0,))
        assert L.shape == (2, 2)
        assert np.max(np.abs(L.sum(axis=1) - 1.0)) <= 1e-12
        assert abs(L[0, 0] - CONDITIONAL_GIVEN_LAST) <= 1e-12

    def test_all_sites_lumping_returns_the_chain_itself(
        self, reference_chain, reference_pi
    ):
        L = lumped_one_step_chain(reference_chain, reference_pi, (0, 1))
        assert np.max(np.abs(L - reference_chain.G)) <= 1e-12

    def test_iterating_the_lumped_matrix_misses_two_step_probabilities(
        self, reference_chain, reference_pi
    ):
        # The lumped matrix is a one-step summary, not a generator: its
        # square disagrees with the true two-step observation conditionals.
        L = lumped_one_step_chain(reference_chain, reference_pi, (0,))
        two_step = im.conditional_observed_probability(
            reference_chain, reference_pi, (0,), [(1,)], (1,)
        )
        # P(o2=1 | o0=1) from the chain:
        p11 = im.observed_path_probability(reference_chain, reference_pi, (0,), [(1,)])
        num = 0.0
        for mid in (1, 2):
            num += im.observed_path_probability(
                reference_chain, reference_pi, (0,), [(1,), (mid,), (1,)]
            )
        chain_two_step = num / p11
        assert abs((L @ L)[0, 0] - chain_two_step) > 1e-4

    def test_zero_probability_symbol_rejected(self, reference_chain):
        init = np.array([1.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            lumped_one_step_chain(reference_chain, init, (0,))


class TestObservedSets:
    def test_sorted_and_deduplicated(self):
        assert check_observed((2, 2, 2), (2, 0, 2)) == (0, 2)

    def test_rejects_empty_and_out_of_range(self):
        with pytest.raises(ValueError):
            check_observed((2, 2), ())
        with pytest.raises(ValueError):
            check_observed((2, 2), (2,))
        with pytest.raises(ValueError):
            check_observed((2, 2), (-1,))

    def test_projection_index_consistent_with_codec(self):
        m = (2, 3, 2)
        observed = (0, 2)
        proj = projection_index(m, observed)
        codec = StateCodec(m)
        sub = StateCodec((2, 2))
        for idx in range(codec.n_states):
            state = codec.decode(idx)
            assert proj[idx] == sub.encode(tuple(state[i] for i in observed))
