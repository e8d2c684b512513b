"""Simulated datasets for the Full, Reduced and Correlation study families.

All randomness flows from one seed through per-purpose Philox substreams
(covariates, true states, reported labels, holdout), so identical plans
give bit-identical datasets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import ClassificationParams, ObservationParams, ParameterSet, StateSpace
from .core import classification_probs, classification_linear_predictor, log_intensity, state_probs
from .dataset import Dataset

BETA_TRUE = np.array([[-1.0, 0.0], [4.0, 0.0], [-2.0, 0.0]])
OMEGA0_TRUE = np.array([[2.0, 0.5, 0.0], [1.0, 1.0, 0.0]])
OMEGA1_TRUE = np.array([[3.0, -1.0, 0.0], [-1.0, 1.0, 0.0]])
DIAGONAL_BOOST = 6.0
DEFAULT_RHO = 0.8

SIM_SPACE = StateSpace(true_labels=("s1", "s2"), reported_labels=("s1", "s2", "other"))


class Family(str, enum.Enum):
    FULL = "full"
    REDUCED = "reduced"
    CORRELATION = "correlation"

    def __str__(self):
        return self.value


class MisclassLevel(str, enum.Enum):
    BASELINE = "baseline"
    DECREASE = "decrease"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SimulationPlan:
    family: Family = Family.FULL
    n_sites: int = 1000
    n_holdout: int = 200
    misclass_level: MisclassLevel = MisclassLevel.BASELINE
    correlation_rho: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(str(self.family).lower()))
        object.__setattr__(self, "misclass_level", MisclassLevel(str(self.misclass_level).lower()))
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        if not 0 <= self.n_holdout < self.n_sites:
            raise ValueError("need 0 <= n_holdout < n_sites")
        if self.family is Family.CORRELATION:
            rho = DEFAULT_RHO if self.correlation_rho is None else float(self.correlation_rho)
            if not -1.0 < rho < 1.0:
                raise ValueError("correlation_rho must lie in (-1, 1)")
            object.__setattr__(self, "correlation_rho", rho)
        elif self.correlation_rho is not None:
            raise ValueError("correlation_rho is only used by the correlation family")


def decrease_misclassification(omega0) -> np.ndarray:
    """Add the diagonal boost to every correct-classification intercept."""
    omega0 = np.array(omega0, dtype=float)
    S, K = omega0.shape
    if S > K:
        raise ValueError(f"need S <= K to boost the diagonal (S={S}, K={K})")
    idx = np.arange(S)
    omega0[idx, idx] += DIAGONAL_BOOST
    return omega0


def true_parameters(plan: SimulationPlan) -> ParameterSet:
    """The generating parameters of ``plan`` (one classification covariate)."""
    omega0 = OMEGA0_TRUE
    if plan.misclass_level is MisclassLevel.DECREASE:
        omega0 = decrease_misclassification(omega0)
    omega1 = np.zeros_like(OMEGA1_TRUE) if plan.family is Family.REDUCED else OMEGA1_TRUE
    return ParameterSet(beta=BETA_TRUE.copy(), omega=np.stack([omega0, omega1]), psi=np.ones(1))


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs`` by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None] * cdf[..., -1:]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1).astype(np.intp)


def simulate_dataset(plan: SimulationPlan) -> Dataset:
    rng_cov, rng_state, rng_label, rng_hold = _streams(plan.seed, 4)
    n = plan.n_sites
    x = rng_cov.standard_normal((n, 2))
    eps = rng_cov.standard_normal((n, 1))
    if plan.family is Family.CORRELATION:
        rho = plan.correlation_rho
        z = rho * x[:, :1] + np.sqrt(1.0 - rho**2) * eps
    else:
        z = eps
    truth = true_parameters(plan)
    p = state_probs(log_intensity(ObservationParams(truth.beta), x))
    verified = sample_categorical(rng_state, p)
    zeta = classification_linear_predictor(ClassificationParams(truth.omega), z)
    omega_i = classification_probs(zeta)[np.arange(n), verified]
    reported = sample_categorical(rng_label, omega_i)
    holdout = np.zeros(n, dtype=bool)
    if plan.n_holdout:
        holdout[rng_hold.choice(n, size=plan.n_holdout, replace=False)] = True
    return Dataset(
        space=SIM_SPACE,
        site_id=np.array([f"site{i + 1:05d}" for i in range(n)]),
        x=x,
        z=z,
        verified=verified,
        reported=reported,
        holdout=holdout,
        x_names=("x_1", "x_2"),
        z_names=("z_1",),
        meta={"plan": plan},
    )


def synthesize_scores(dataset: Dataset, concentration: float, seed: int) -> Dataset:
    """Attach stand-in ML scores drawn around each record's verified state.

    Scores for a record are ``Dirichlet(a)`` with ``a_s = concentration`` at
    the verified state and 1 elsewhere, so the verified state's expected
    share is ``concentration / (concentration + S - 1)``.
    """
    if not concentration > 0:
        raise ValueError("concentration must be positive")
    if np.any(dataset.verified < 0):
        raise ValueError("synthesize_scores needs a verified label on every record")
    S = dataset.space.S
    (rng,) = _streams(seed, 1)
    alpha = np.ones((dataset.n_records, S))
    alpha[np.arange(dataset.n_records), dataset.verified] = concentration
    g = rng.standard_gamma(alpha)
    # tiny concentrations can underflow to 0; with S=1 that empties the row
    g[np.arange(dataset.n_records), dataset.verified] += 1e-300
    scores = g / g.sum(axis=1, keepdims=True)
    return dataset.with_scores(scores)
