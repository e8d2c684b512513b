import numpy as np
import pytest

from misclass_sdm.core import ClassificationParams, ObservationParams, classification_probs, log_intensity, state_probs
from misclass_sdm.simulate import (
    OMEGA0_TRUE,
    SimulationPlan,
    decrease_misclassification,
    sample_categorical,
    simulate_dataset,
    synthesize_scores,
    true_parameters,
)


def test_default_sizes():
    ds = simulate_dataset(SimulationPlan("full", 1000, 200, "baseline", seed=1))
    assert ds.n_records == 1000
    assert ds.training().n_records == 800
    assert ds.holdout.sum() == 200


def test_deterministic():
    a = simulate_dataset(SimulationPlan(seed=11))
    b = simulate_dataset(SimulationPlan(seed=11))
    assert a.identical_to(b)
    assert not a.identical_to(simulate_dataset(SimulationPlan(seed=12)))


def test_plan_validation():
    with pytest.raises(ValueError):
        SimulationPlan(n_sites=10, n_holdout=10)
    with pytest.raises(ValueError):
        SimulationPlan(family="full", correlation_rho=0.5)
    with pytest.raises(ValueError):
        SimulationPlan(family="correlation", correlation_rho=1.0)
    assert SimulationPlan(family="correlation").correlation_rho == 0.8


def test_decrease():
    np.testing.assert_array_equal(decrease_misclassification(OMEGA0_TRUE), [[8, 0.5, 0], [1, 7, 0]])
    np.testing.assert_array_equal(decrease_misclassification(np.zeros((2, 3))), [[6, 0, 0], [0, 6, 0]])
    twice = decrease_misclassification(decrease_misclassification(OMEGA0_TRUE))
    np.testing.assert_array_equal(twice - OMEGA0_TRUE, [[12, 0, 0], [0, 12, 0]])
    with pytest.raises(ValueError):
        decrease_misclassification(np.zeros((3, 2)))


def test_reduced_truth_has_no_slope():
    assert np.all(true_parameters(SimulationPlan("reduced")).omega[1] == 0)


def test_diagonal_limit():
    omega0 = OMEGA0_TRUE.copy()
    omega0[[0, 1], [0, 1]] = 30.0
    probs = classification_probs(omega0)
    assert 1 - probs[0, 0] < 1e-10 and 1 - probs[1, 1] < 1e-10


def test_reduced_confusion_frequencies():
    ds = simulate_dataset(SimulationPlan("reduced", 10000, 0, seed=7))
    ct = ds.crosstab()
    target = classification_probs(OMEGA0_TRUE)
    for s in range(2):
        n_s = ct[s].sum()
        emp = ct[s] / n_s
        sd = np.sqrt(target[s] * (1 - target[s]) / n_s)
        assert np.all(np.abs(emp - target[s]) <= 3 * sd)


def test_correlation_family():
    ds = simulate_dataset(SimulationPlan("correlation", 100000, 0, correlation_rho=0.6, seed=3))
    r = np.corrcoef(ds.x[:, 0], ds.z[:, 0])[0, 1]
    assert abs(r - 0.6) < 0.02


def test_state_frequencies_match_integration():
    ds = simulate_dataset(SimulationPlan("full", 100000, 0, seed=5))
    rng = np.random.default_rng(99)
    xs = rng.standard_normal((400000, 2))
    p1 = state_probs(log_intensity(ObservationParams(true_parameters(SimulationPlan()).beta), xs))[:, 0].mean()
    emp = np.mean(ds.verified == 0)
    se = np.sqrt(p1 * (1 - p1) / ds.n_records)
    assert abs(emp - p1) < 3 * se


def test_decrease_reduces_misclassification():
    base = simulate_dataset(SimulationPlan("full", 10000, 0, "baseline", seed=4))
    dec = simulate_dataset(SimulationPlan("full", 10000, 0, "decrease", seed=4))
    assert dec.misreported().sum() < base.misreported().sum()


def test_sample_categorical_frequencies():
    rng = np.random.default_rng(0)
    p = np.tile([0.2, 0.5, 0.3], (50000, 1))
    draws = sample_categorical(rng, p)
    np.testing.assert_allclose(np.bincount(draws) / 50000, [0.2, 0.5, 0.3], atol=0.01)


class TestScores:
    def base(self, n=4000):
        return simulate_dataset(SimulationPlan(n_sites=n, n_holdout=0, seed=2))

    def test_rows_normalised(self):
        ds = synthesize_scores(self.base(500), 10.0, 1)
        np.testing.assert_allclose(ds.scores.sum(axis=1), 1.0, atol=1e-12)

    def test_huge_concentration_is_one_hot(self):
        ds = synthesize_scores(self.base(500), 1e6, 1)
        assert np.all(ds.scores.argmax(axis=1) == ds.verified)

    def test_unit_concentration_mean(self):
        ds = synthesize_scores(self.base(), 1.0, 1)
        share = ds.scores[np.arange(ds.n_records), ds.verified]
        # share ~ Beta(1,1): sd of the mean is sqrt(1/12/n)
        assert abs(share.mean() - 0.5) < 3 * np.sqrt(1 / 12 / ds.n_records)

    def test_expected_share(self):
        ds = synthesize_scores(self.base(), 10.0, 1)
        share = ds.scores[np.arange(ds.n_records), ds.verified]
        assert abs(share.mean() - 10 / 11) < 0.01

    def test_bad_concentration(self):
        with pytest.raises(ValueError):
            synthesize_scores(self.base(10), 0.0, 1)
