import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from misclass_sdm.core import (
    ClassificationParams,
    DirichletParams,
    ObservationParams,
    ParameterSet,
    StateSpace,
    classification_linear_predictor,
    classification_probs,
    confusion_for_records,
    joint_log_likelihood,
    log_intensity,
    state_probs,
)
from misclass_sdm.simulate import BETA_TRUE, OMEGA0_TRUE, OMEGA1_TRUE

from conftest import make_dataset

# softmax values from a 30-digit mpmath evaluation
SOFTMAX_M1_0 = (0.268941421369995120748840758178, 0.731058578630004879251159241822)
SOFTMAX_2_05_0 = (0.736124724312593854113514139622, 0.164251627625087823586641621384, 0.0996236480623183222998442389943)


class TestStateSpace:
    def test_references_are_last(self, space23):
        assert space23.reference_true == 1
        assert space23.reference_reported == 2

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(ValueError):
            StateSpace(("a", "a"), ("a",))
        with pytest.raises(ValueError):
            StateSpace((), ("a",))
        with pytest.raises(ValueError):
            StateSpace(("a", ""), ("a",))

    def test_reported_to_true(self, space23):
        assert space23.reported_to_true().tolist() == [0, 1, -1]
        assert space23.diagonal_aligned
        assert not StateSpace(("a", "b"), ("b", "a", "c")).diagonal_aligned

    def test_unknown_label(self, space23):
        with pytest.raises(KeyError):
            space23.true_index("other")


class TestLogIntensity:
    def test_simulation_intercepts(self):
        out = log_intensity(ObservationParams(BETA_TRUE), [0.0, 0.0])
        np.testing.assert_array_equal(out, [-1.0, 0.0])

    def test_hand_arithmetic(self):
        np.testing.assert_allclose(log_intensity(ObservationParams(BETA_TRUE), [0.5, 1.0]), [-1.0, 0.0], atol=1e-15)

    def test_zero_beta(self):
        np.testing.assert_array_equal(log_intensity(ObservationParams(np.zeros((3, 4))), [1.5, -2.0]), 0.0)

    def test_dimension_error_names_lengths(self):
        with pytest.raises(ValueError, match="3 covariates, expected 2"):
            log_intensity(ObservationParams(BETA_TRUE), [1.0, 2.0, 3.0])

    def test_reference_column_enforced(self):
        with pytest.raises(ValueError, match="reference"):
            ObservationParams(np.ones((2, 2)))


class TestStateProbs:
    def test_symmetric(self):
        np.testing.assert_allclose(state_probs([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)

    def test_single_state(self):
        assert state_probs([3.7]).tolist() == [1.0]

    def test_oracle_value(self):
        np.testing.assert_allclose(state_probs([-1.0, 0.0]), SOFTMAX_M1_0, rtol=0, atol=1e-15)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            state_probs([np.nan, 0.0])

    def test_overflow_safe(self):
        p = state_probs([700.0, 0.0, -700.0])
        assert np.all(np.isfinite(p)) and abs(p.sum() - 1) < 1e-12

    @given(arrays(float, st.integers(1, 6), elements=st.floats(-50, 50)))
    def test_normalised(self, a):
        p = state_probs(a)
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all(p >= 0)


class TestClassification:
    def params(self, psi=1.0):
        return ClassificationParams(np.stack([OMEGA0_TRUE, OMEGA1_TRUE]), psi=np.array([psi]))

    def test_z_zero_gives_intercepts(self):
        np.testing.assert_array_equal(classification_linear_predictor(self.params(), [0.0]), OMEGA0_TRUE)

    def test_selection_off(self):
        np.testing.assert_array_equal(classification_linear_predictor(self.params(0.0), [2.3]), OMEGA0_TRUE)

    def test_z_one(self):
        np.testing.assert_array_equal(
            classification_linear_predictor(self.params(), [1.0]), [[5.0, -0.5, 0.0], [0.0, 2.0, 0.0]]
        )

    def test_vectorised_matches_single(self):
        z = np.array([[0.3], [-1.2], [2.0]])
        batch = classification_linear_predictor(self.params(), z)
        for i in range(3):
            np.testing.assert_allclose(batch[i], classification_linear_predictor(self.params(), z[i]), atol=1e-15)

    def test_probs_zero_matrix(self):
        np.testing.assert_allclose(classification_probs(np.zeros((2, 3))), 1 / 3, atol=1e-15)

    def test_probs_oracle_row(self):
        np.testing.assert_allclose(classification_probs(np.array([[2.0, 0.5, 0.0]]))[0], SOFTMAX_2_05_0, atol=1e-15)

    def test_confusion_fixture_row_is_stochastic(self):
        conf = np.array([[0.7, 0.05, 0.13, 0.12]])
        out = confusion_for_records(conf, None, 2)
        assert out.shape == (2, 1, 4)
        with pytest.raises(ValueError):
            confusion_for_records(np.array([[0.7, 0.2, 0.13]]), None, 1)

    def test_monotone_in_diagonal(self):
        zeta = OMEGA0_TRUE.copy()
        base = classification_probs(zeta)[0, 0]
        zeta[0, 0] += 0.1
        assert classification_probs(zeta)[0, 0] > base

    @given(arrays(float, (3, 4), elements=st.floats(-30, 30)), st.floats(-100, 100))
    def test_shift_invariance(self, zeta, c):
        shifted = zeta.copy()
        shifted[1] += c
        np.testing.assert_allclose(classification_probs(shifted), classification_probs(zeta), atol=1e-12)

    def test_reference_column_enforced(self):
        with pytest.raises(ValueError):
            ClassificationParams(np.ones((1, 2, 3)))

    def test_dirichlet_params_positive(self):
        with pytest.raises(ValueError):
            DirichletParams(np.array([[1.0, 0.0]]))


class TestJointLogLikelihood:
    def test_degenerate_space(self):
        space = StateSpace(("a",), ("a",))
        ds = make_dataset([0, 0, 0], [0, 0, 0], space)
        val = joint_log_likelihood("covariate", ObservationParams(np.zeros((1, 1))),
                                   ClassificationParams(np.zeros((1, 1, 1))), ds)
        assert val == 0.0

    def test_uniform_single_record(self, space23):
        ds = make_dataset([0], [2], space23)
        val = joint_log_likelihood("intercept", ObservationParams(np.zeros((1, 2))),
                                   ClassificationParams(np.zeros((1, 2, 3))), ds)
        assert val == pytest.approx(np.log(0.5) + np.log(1 / 3), abs=1e-14)

    def test_bruteforce_five_records(self, space23):
        x = np.zeros((5, 2))
        z = np.zeros((5, 1))
        v = [0, 1, 1, 0, 1]
        y = [0, 2, 1, 1, 0]
        ds = make_dataset(v, y, space23, x=x, z=z)
        val = joint_log_likelihood("covariate", ObservationParams(BETA_TRUE),
                                   ClassificationParams(np.stack([OMEGA0_TRUE, OMEGA1_TRUE])), ds)
        # explicit per-record product at x = z = 0
        import math

        p = [math.exp(-1) / (math.exp(-1) + 1), 1 / (math.exp(-1) + 1)]
        rows = [[math.exp(2), math.exp(0.5), 1.0], [math.exp(1), math.exp(1), 1.0]]
        total = 0.0
        for s, k in zip(v, y):
            total += math.log(p[s]) + math.log(rows[s][k] / sum(rows[s]))
        assert val == pytest.approx(total, abs=1e-12)

    def test_dirichlet_confusion(self, space23):
        ds = make_dataset([0, 1], [1, 2], space23)
        conf = np.array([[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
        val = joint_log_likelihood("constant", ObservationParams(np.zeros((1, 2))), conf, ds)
        assert val == pytest.approx(2 * np.log(0.5) + np.log(0.3) + np.log(0.8), abs=1e-14)

    def test_holdout_records_ignored(self, space23):
        ds = make_dataset([0, -1], [0, 1], space23, holdout=np.array([False, True]))
        val = joint_log_likelihood("intercept", ObservationParams(np.zeros((1, 2))),
                                   ClassificationParams(np.zeros((1, 2, 3))), ds)
        assert val == pytest.approx(np.log(0.5) + np.log(1 / 3))

    def test_decreases_as_probability_vanishes(self, space23):
        ds = make_dataset([0], [0], space23)
        obs = ObservationParams(np.zeros((1, 2)))
        vals = []
        for w in (0.0, -5.0, -20.0, -200.0):
            omega = np.zeros((1, 2, 3))
            omega[0, 0, 0] = w
            vals.append(joint_log_likelihood("intercept", obs, ClassificationParams(omega), ds))
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_parameter_set_json_roundtrip():
    ps = ParameterSet(beta=BETA_TRUE, omega=np.stack([OMEGA0_TRUE, OMEGA1_TRUE]), psi=np.ones(1))
    back = ParameterSet.from_json(ps.to_json())
    np.testing.assert_array_equal(back.beta, ps.beta)
    np.testing.assert_array_equal(back.omega, ps.omega)
