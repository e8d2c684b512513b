"""Deterministic model core: intensities, state probabilities, confusion
matrices and the joint log-likelihood of verified and reported labels.

Conventions
-----------
* ``S`` true states, ``K`` reported states; the last index of each list is
  the reference category whose coefficients are pinned at zero.
* ``beta`` has shape ``(P, S)``: row 0 is the intercept, row ``j`` the effect
  of observation covariate ``j``.
* ``omega`` has shape ``(n_c + 1, S, K)``: ``omega[0]`` holds intercepts,
  ``omega[j]`` the effect of classification covariate ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: probabilities below this are clamped before taking logs
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class StateSpace:
    """Ordered true and reported labels; the last of each is the reference."""

    true_labels: tuple[str, ...]
    reported_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "true_labels", tuple(str(x) for x in self.true_labels))
        object.__setattr__(self, "reported_labels", tuple(str(x) for x in self.reported_labels))
        for name, labels in (("true", self.true_labels), ("reported", self.reported_labels)):
            if len(labels) < 1:
                raise ValueError(f"{name} label list is empty")
            if any(not lab for lab in labels):
                raise ValueError(f"{name} labels must be non-empty strings")
            if len(set(labels)) != len(labels):
                raise ValueError(f"{name} labels are not unique: {labels}")

    @property
    def S(self) -> int:
        return len(self.true_labels)

    @property
    def K(self) -> int:
        return len(self.reported_labels)

    @property
    def reference_true(self) -> int:
        return self.S - 1

    @property
    def reference_reported(self) -> int:
        return self.K - 1

    def true_index(self, label: str) -> int:
        try:
            return self.true_labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown true label {label!r}") from None

    def reported_index(self, label: str) -> int:
        try:
            return self.reported_labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown reported label {label!r}") from None

    @property
    def diagonal_aligned(self) -> bool:
        """True when the first S reported labels are the true labels in order."""
        return self.S <= self.K and self.reported_labels[: self.S] == self.true_labels

    def reported_to_true(self) -> np.ndarray:
        """Map reported index -> matching true index, or -1."""
        out = np.full(self.K, -1, dtype=np.intp)
        for k, lab in enumerate(self.reported_labels):
            if lab in self.true_labels:
                out[k] = self.true_labels.index(lab)
        return out


def _as_finite(a, name) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ObservationParams:
    """Observation-process coefficients ``beta`` of shape ``(n_e + 1, S)``."""

    beta: np.ndarray

    def __post_init__(self):
        beta = _as_finite(self.beta, "beta")
        if beta.ndim != 2 or beta.shape[0] < 1:
            raise ValueError(f"beta must be 2-D (n_e+1, S), got shape {beta.shape}")
        if np.any(beta[:, -1] != 0.0):
            raise ValueError("beta reference column (last true state) must be zero")
        object.__setattr__(self, "beta", beta)

    @property
    def n_e(self) -> int:
        return self.beta.shape[0] - 1

    @property
    def S(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class ClassificationParams:
    """MMGLM coefficients with spike-and-slab indicators.

    ``omega`` has shape ``(n_c + 1, S, K)``; ``psi`` and ``q`` have length
    ``n_c``.  ``psi`` defaults to all ones (every covariate included).
    """

    omega: np.ndarray
    psi: np.ndarray | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        omega = _as_finite(self.omega, "omega")
        if omega.ndim != 3:
            raise ValueError(f"omega must be 3-D (n_c+1, S, K), got shape {omega.shape}")
        if np.any(omega[:, :, -1] != 0.0):
            raise ValueError("omega reference column (last reported state) must be zero")
        n_c = omega.shape[0] - 1
        psi = np.ones(n_c) if self.psi is None else np.asarray(self.psi, dtype=float)
        if psi.shape != (n_c,) or not np.all((psi == 0) | (psi == 1)):
            raise ValueError(f"psi must be {n_c} indicators in {{0,1}}")
        q = np.full(n_c, 0.5) if self.q is None else np.asarray(self.q, dtype=float)
        if q.shape != (n_c,) or np.any((q <= 0) | (q >= 1)):
            raise ValueError(f"q must be {n_c} probabilities in (0, 1)")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "q", q)

    @property
    def n_c(self) -> int:
        return self.omega.shape[0] - 1


@dataclass(frozen=True)
class DirichletParams:
    """Positive Dirichlet concentrations ``alpha`` of shape ``(S, K)``."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = _as_finite(self.alpha, "alpha")
        if alpha.ndim != 2 or np.any(alpha <= 0):
            raise ValueError("alpha must be a 2-D array of positive values")
        object.__setattr__(self, "alpha", alpha)


@dataclass
class ParameterSet:
    """Full parameter state used as simulation truth or a posterior draw.

    ``omega`` is set for MMGLM scenarios, ``confusion`` (a row-stochastic
    ``(S, K)`` matrix) for the Dirichlet scenarios.
    """

    beta: np.ndarray
    omega: np.ndarray | None = None
    psi: np.ndarray | None = None
    confusion: np.ndarray | None = None
    alpha: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"beta": np.asarray(self.beta).tolist()}
        for name in ("omega", "psi", "confusion", "alpha"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ParameterSet":
        def arr(name):
            return None if d.get(name) is None else np.asarray(d[name], dtype=float)

        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            omega=arr("omega"),
            psi=arr("psi"),
            confusion=arr("confusion"),
            alpha=arr("alpha"),
        )


def _design(x, n_cov, name) -> np.ndarray:
    x = _as_finite(x, name)
    got = x.shape[-1] if x.ndim else 0
    if x.ndim not in (1, 2) or got != n_cov:
        raise ValueError(f"{name} has {got} covariates, expected {n_cov}")
    return x


def log_intensity(params: ObservationParams, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``ln lambda_s = beta_0s + sum_j x_j beta_js`` for every state.

    ``x`` may be a single covariate vector (length ``n_e``) or an ``(n, n_e)``
    matrix, giving an ``(S,)`` or ``(n, S)`` result.
    """
    x = _design(x, params.n_e, "x")
    return params.beta[0] + x @ params.beta[1:]


def log_softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    shifted = a - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def state_probs(log_lambda) -> np.ndarray:
    """Normalise log-intensities into true-state probabilities (softmax)."""
    log_lambda = _as_finite(log_lambda, "log_lambda")
    if log_lambda.ndim == 0:
        raise ValueError("log_lambda must have at least one state")
    return softmax(log_lambda, axis=-1)


def classification_linear_predictor(params: ClassificationParams, z) -> np.ndarray:
    """MMGLM linear predictor ``omega_0 + sum_j psi_j z_j omega_j``.

    Returns ``(S, K)`` for a single covariate vector or ``(n, S, K)`` for an
    ``(n, n_c)`` matrix.
    """
    z = _design(z, params.n_c, "z")
    weights = z * params.psi
    if z.ndim == 1:
        return params.omega[0] + np.tensordot(weights, params.omega[1:], axes=(0, 0))
    return params.omega[0][None] + np.tensordot(weights, params.omega[1:], axes=(1, 0))


def classification_probs(zeta) -> np.ndarray:
    """Row-wise multinomial-logit inversion of a linear predictor."""
    zeta = _as_finite(zeta, "zeta")
    if zeta.ndim < 2:
        raise ValueError("zeta must be at least 2-D (S, K)")
    return softmax(zeta, axis=-1)


def confusion_for_records(class_params, z: np.ndarray | None, n: int) -> np.ndarray:
    """Per-record confusion matrices ``(n, S, K)``.

    ``class_params`` is either :class:`ClassificationParams` or a fixed
    ``(S, K)`` row-stochastic matrix (Dirichlet scenarios).  A site-invariant
    matrix is computed once and broadcast.
    """
    if isinstance(class_params, ClassificationParams):
        if class_params.n_c == 0 or not np.any(class_params.psi):
            omega = classification_probs(class_params.omega[0])
            return np.broadcast_to(omega, (n,) + omega.shape)
        return classification_probs(classification_linear_predictor(class_params, z))
    omega = np.asarray(class_params, dtype=float)
    if omega.ndim != 2:
        raise ValueError("confusion matrix must be 2-D (S, K)")
    if np.any(omega < 0) or not np.allclose(omega.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("confusion matrix rows must be probability vectors")
    return np.broadcast_to(omega, (n,) + omega.shape)


def joint_log_likelihood(scenario, obs_params: ObservationParams, class_params, dataset) -> float:
    """Log-likelihood of the verified and reported labels of training records.

    ``sum_i ln p_{i,V_i} + ln Omega_{i,V_i,Y_i}`` where ``p_i`` comes from the
    observation design of ``scenario`` (the Main scenario appends the
    classification covariates) and ``Omega_i`` from ``class_params``.
    """
    from .scenarios import ScenarioConfig  # local: scenarios imports core

    train = dataset.training()
    if train.n_records == 0:
        return 0.0
    if np.any(train.verified < 0):
        bad = np.flatnonzero(train.verified < 0)[:5]
        raise ValueError(f"training records without a verified label: {train.site_id[bad].tolist()}")
    space = dataset.space
    if np.any(train.verified >= space.S) or np.any(train.reported >= space.K) or np.any(train.reported < 0):
        raise ValueError("labels outside the state space")
    if isinstance(scenario, ScenarioConfig):
        appends_z = scenario.appends_z
    else:
        appends_z = str(scenario) in ("main", "Scenario.MAIN")
    x = np.hstack([train.x, train.z]) if appends_z else train.x
    log_p = np.log(np.maximum(state_probs(log_intensity(obs_params, x)), PROB_FLOOR))
    omega = confusion_for_records(class_params, train.z, train.n_records)
    idx = np.arange(train.n_records)
    log_omega = np.log(np.maximum(omega[idx, train.verified, train.reported], PROB_FLOOR))
    return float(np.sum(log_p[idx, train.verified]) + np.sum(log_omega))
