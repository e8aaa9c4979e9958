"""Model structure, validation, site dynamics, and the state codec."""

import numpy as np
import pytest

import influencemodel as im
from influencemodel import InfluenceModel, InvalidModelError, StateCodec
from influencemodel.model import check_state, model_fingerprint, require_valid
from helpers import random_model

D_REF = np.array([[0.6, 0.4], [0.3, 0.7]])
A_REF = np.array([[0.9, 0.1], [0.2, 0.8]])


class TestValidation:
    def test_reference_model_is_valid(self, reference_model):
        report = im.validate_model(reference_model)
        assert report.ok
        assert report.violations == ()

    def test_bad_D_row_sum_reported_with_one_based_index(self):
        model = InfluenceModel(D=[[0.6, 0.3], [0.3, 0.7]], m=(2, 2), A_shared=A_REF)
        report = im.validate_model(model)
        assert not report.ok
        assert any("row 1 of D" in v for v in report.violations)

    def test_negative_D_entry_rejected(self):
        model = InfluenceModel(D=[[1.2, -0.2], [0.3, 0.7]], m=(2, 2), A_shared=A_REF)
        report = im.validate_model(model)
        assert not report.ok
        assert any("negative" in v for v in report.violations)

    def test_bad_local_row_sum_rejected(self):
        bad_A = np.array([[0.9, 0.2], [0.2, 0.8]])
        model = InfluenceModel(D=D_REF, m=(2, 2), A_shared=bad_A)
        report = im.validate_model(model)
        assert not report.ok

    def test_local_matrix_shape_must_match_status_counts(self):
        pairs = {(j, i): np.eye(2) for j in range(2) for i in range(2)}
        model = InfluenceModel(D=D_REF, m=(2, 3), A_pairs=pairs)
        report = im.validate_model(model)
        assert not report.ok
        assert any("shape" in v for v in report.violations)

    def test_missing_pair_with_positive_weight_rejected(self):
        pairs = {(0, 0): np.eye(2), (1, 1): np.eye(2), (0, 1): np.eye(2)}
        model = InfluenceModel(D=D_REF, m=(2, 2), A_pairs=pairs)
        report = im.validate_model(model)
        assert not report.ok
        assert any("missing local matrix" in v for v in report.violations)

    def test_missing_pair_with_zero_weight_allowed(self):
        D = np.array([[1.0, 0.0], [0.0, 1.0]])
        pairs = {(0, 0): np.eye(2), (1, 1): np.eye(2)}
        model = InfluenceModel(D=D, m=(2, 2), A_pairs=pairs)
        assert im.validate_model(model).ok

    def test_single_status_site_rejected_for_networks(self):
        pairs = {
            (j, i): np.ones((mj, mi)) / mi
            for (j, mj) in enumerate((2, 1))
            for (i, mi) in enumerate((2, 1))
        }
        model = InfluenceModel(D=D_REF, m=(2, 1), A_pairs=pairs)
        report = im.validate_model(model)
        assert not report.ok
        assert any("status count" in v for v in report.violations)

    def test_single_site_chain_is_allowed(self):
        model = InfluenceModel(D=[[1.0]], m=(3,), A_pairs={(0, 0): np.eye(3)})
        assert im.validate_model(model).ok

    def test_exactly_one_parameterization_required(self):
        with pytest.raises(ValueError):
            InfluenceModel(D=D_REF, m=(2, 2))
        with pytest.raises(ValueError):
            InfluenceModel(
                D=D_REF, m=(2, 2), A_shared=A_REF, A_pairs={(0, 0): A_REF}
            )

    def test_shared_matrix_requires_equal_status_counts(self):
        model = InfluenceModel(D=D_REF, m=(2, 3), A_shared=A_REF)
        report = im.validate_model(model)
        assert not report.ok

    def test_require_valid_raises_with_full_report(self):
        model = InfluenceModel(D=[[0.6, 0.3], [0.3, 0.7]], m=(2, 2), A_shared=A_REF)
        with pytest.raises(InvalidModelError) as exc:
            require_valid(model)
        assert exc.value.report.violations

    def test_arrays_are_frozen(self, reference_model):
        with pytest.raises(ValueError):
            reference_model.D[0, 0] = 0.5
        with pytest.raises(ValueError):
            reference_model.A_shared[0, 0] = 0.5

    def test_homogeneous_shorthand_matches_pairs(self):
        shared = InfluenceModel.homogeneous(D_REF, A_REF)
        pairs = InfluenceModel(
            D=D_REF,
            m=(2, 2),
            A_pairs={(j, i): A_REF for j in range(2) for i in range(2)},
        )
        state = (1, 2)
        for site in range(2):
            np.testing.assert_allclose(
                im.next_status_distribution(shared, state, site),
                im.next_status_distribution(pairs, state, site),
                atol=1e-15,
            )


class TestDynamics:
    def test_reference_next_status_values(self, reference_model):
        # Hand mixture: 0.6*[0.9, 0.1] + 0.4*[0.2, 0.8] for site 1 in (1, 2).
        d0 = im.next_status_distribution(reference_model, (1, 2), 0)
        np.testing.assert_allclose(d0, [0.62, 0.38], atol=1e-15)
        d1 = im.next_status_distribution(reference_model, (1, 2), 1)
        np.testing.assert_allclose(d1, [0.41, 0.59], atol=1e-15)

    def test_distribution_is_stochastic_on_random_models(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            model = random_model(rng)
            codec = StateCodec(model.m)
            for idx in range(codec.n_states):
                state = codec.decode(idx)
                for site in range(model.n):
                    dist = im.next_status_distribution(model, state, site)
                    assert dist.min() >= 0.0
                    assert abs(dist.sum() - 1.0) <= 1e-12

    def test_distribution_is_linear_in_network_weights(self):
        # The update is a D-weighted mixture of local rows, so it must
        # equal the explicit sum over influencing sites.
        rng = np.random.default_rng(12)
        for _ in range(10):
            model = random_model(rng)
            codec = StateCodec(model.m)
            state = codec.decode(int(rng.integers(codec.n_states)))
            for site in range(model.n):
                expected = np.zeros(model.m[site])
                for j in range(model.n):
                    expected += model.D[site, j] * model.local_matrix(j, site)[state[j] - 1]
                got = im.next_status_distribution(model, state, site)
                np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_site_index_out_of_range(self, reference_model):
        with pytest.raises(IndexError):
            im.next_status_distribution(reference_model, (1, 1), 2)

    def test_bad_state_rejected(self, reference_model):
        with pytest.raises(ValueError):
            check_state(reference_model, (1,))
        with pytest.raises(ValueError):
            check_state(reference_model, (0, 1))
        with pytest.raises(ValueError):
            check_state(reference_model, (1, 3))


class TestCodec:
    def test_documented_order_site_one_most_significant(self):
        codec = StateCodec((2, 2))
        assert codec.encode((1, 1)) == 0
        assert codec.encode((1, 2)) == 1
        assert codec.encode((2, 1)) == 2
        assert codec.encode((2, 2)) == 3

    @pytest.mark.parametrize(
        "m",
        [(2,), (3,), (2, 2), (2, 3), (3, 2), (2, 2, 2), (4, 3, 2), (8, 8, 8), (2,) * 12],
    )
    def test_bijection_up_to_4096_states(self, m):
        codec = StateCodec(m)
        assert codec.n_states == int(np.prod(m))
        assert codec.n_states <= 4096
        seen = set()
        for idx in range(codec.n_states):
            state = codec.decode(idx)
            assert codec.encode(state) == idx
            seen.add(state)
        assert len(seen) == codec.n_states

    def test_encode_rows_matches_scalar_encode(self):
        codec = StateCodec((2, 3, 2))
        states = np.array([[1, 1, 1], [2, 3, 2], [1, 2, 2]])
        idx = codec.encode_rows(states)
        assert list(idx) == [codec.encode(tuple(s)) for s in states]

    def test_joint_index_and_joint_state_round_trip(self):
        m = (3, 2, 2)
        for idx in range(12):
            assert im.joint_index(im.joint_state(idx, m), m) == idx

    def test_out_of_range_status_rejected(self):
        codec = StateCodec((2, 2))
        with pytest.raises(ValueError):
            codec.encode((3, 1))
        with pytest.raises(ValueError):
            codec.encode((1, 1, 1))


class TestFingerprint:
    def test_stable_across_equal_models(self):
        a = InfluenceModel.homogeneous(D_REF, A_REF)
        b = InfluenceModel.homogeneous(D_REF.copy(), A_REF.copy())
        assert model_fingerprint(a) == model_fingerprint(b)

    def test_changes_with_parameters(self):
        a = InfluenceModel.homogeneous(D_REF, A_REF)
        b = InfluenceModel.homogeneous(np.array([[0.5, 0.5], [0.3, 0.7]]), A_REF)
        assert model_fingerprint(a) != model_fingerprint(b)

    def test_pair_key_order_does_not_matter(self):
        pairs = {(j, i): A_REF for j in range(2) for i in range(2)}
        rev = dict(reversed(list(pairs.items())))
        a = InfluenceModel(D=D_REF, m=(2, 2), A_pairs=pairs)
        b = InfluenceModel(D=D_REF, m=(2, 2), A_pairs=rev)
        assert model_fingerprint(a) == model_fingerprint(b)
