"""True-state prediction from reported labels.

Two predictors are provided: Bayes' rule averaged over posterior draws and
a weighting of a reported-state intensity model by ML prediction scores.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import StateSpace, softmax
from .dataset import Dataset
from .mcmc import FitResult, PosteriorDraws

log = logging.getLogger(__name__)

ML_MODES = ("conditional", "literal")
PREDICTION_MODES = ("mean", "sample")
COEF_CLIP = 50.0
_DRAW_CHUNK = 256


@dataclass
class PosteriorPrediction:
    """Per-record probabilities over the true states.

    ``records`` are the row indices of the scored records in the input
    dataset; ``map_state`` is the row-wise argmax of ``gamma`` (ties go to
    the lowest index).
    """

    gamma: np.ndarray
    map_state: np.ndarray
    draws_used: int
    records: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if not np.allclose(self.gamma.sum(axis=1), 1.0, atol=1e-10, rtol=0):
            raise ValueError("prediction rows must sum to 1")

    @property
    def max_probability(self) -> np.ndarray:
        return self.gamma.max(axis=1)


def _targets(dataset: Dataset, target_records) -> np.ndarray:
    if target_records is None:
        rows = np.flatnonzero(dataset.holdout)
        return rows if len(rows) else np.arange(dataset.n_records)
    t = np.asarray(target_records)
    if t.dtype == bool:
        if len(t) != dataset.n_records:
            raise ValueError("boolean target mask must cover every record")
        return np.flatnonzero(t)
    t = t.astype(np.intp)
    if np.any((t < 0) | (t >= dataset.n_records)):
        raise IndexError("target record index out of range")
    return t


def bayes_gamma(p: np.ndarray, omega_k: np.ndarray) -> np.ndarray:
    """Normalise ``p_s * Omega_{s,k}`` over ``s`` (last axis)."""
    joint = p * omega_k
    mass = joint.sum(axis=-1, keepdims=True)
    if np.any(mass <= 0):
        raise ValueError("reported label has zero probability under every true state")
    return joint / mass


def _argmax(gamma: np.ndarray) -> np.ndarray:
    return np.argmax(gamma, axis=1).astype(np.intp)


def predict_bayes(posterior, dataset: Dataset, target_records=None, *, mode: str = "mean",
                  seed: int = 0, appends_z: bool | None = None) -> PosteriorPrediction:
    """Posterior probability of each true state given the reported label.

    For every draw, ``Gamma_is`` is proportional to ``p_is * Omega_{i,s,Y_i}``
    with ``p`` the state probabilities and ``Omega`` the confusion matrix at
    the record's covariates.

    Parameters
    ----------
    posterior
        A :class:`FitResult` or :class:`PosteriorDraws` (a single draw gives
        the plug-in predictor).
    target_records
        Row indices or a boolean mask; defaults to the holdout records (all
        records when there are none).
    mode
        ``"mean"`` averages ``Gamma`` over draws; ``"sample"`` draws one
        state per draw from ``Gamma`` and reports the sampled frequencies.
    appends_z
        Whether the observation design includes the classification
        covariates.  Inferred from ``posterior`` when it is a fitted result;
        otherwise from the width of ``beta``.
    """
    if mode not in PREDICTION_MODES:
        raise ValueError(f"mode must be one of {PREDICTION_MODES}")
    if isinstance(posterior, FitResult):
        if posterior.space != dataset.space:
            raise ValueError("dataset labels differ from the fitted state space")
        appends_z = posterior.config.appends_z
        draws = posterior.parameter_draws()
    elif isinstance(posterior, PosteriorDraws):
        draws = posterior
    else:
        raise TypeError("posterior must be a FitResult or PosteriorDraws")
    rows = _targets(dataset, target_records)
    S, K = dataset.space.S, dataset.space.K
    x, z, y = dataset.x[rows], dataset.z[rows], dataset.reported[rows]
    if np.any((y < 0) | (y >= K)):
        raise ValueError("reported label outside the state space")
    P = draws.beta.shape[1]
    if appends_z is None:
        appends_z = P == 1 + dataset.n_e + dataset.n_c and dataset.n_c > 0
    design = np.column_stack([np.ones(len(rows)), x] + ([z] if appends_z else []))
    if design.shape[1] != P or draws.beta.shape[2] != S:
        raise ValueError(f"posterior beta has shape {draws.beta.shape[1:]}, dataset needs ({design.shape[1]}, {S})")
    zd = np.column_stack([np.ones(len(rows)), z])
    rng = np.random.default_rng(seed)
    acc = np.zeros((len(rows), S))
    n_idx = np.arange(len(rows))
    for start in range(0, draws.n_draws, _DRAW_CHUNK):
        sl = slice(start, start + _DRAW_CHUNK)
        p = softmax(np.einsum("np,dps->dns", design, draws.beta[sl]), axis=-1)
        if draws.confusion is not None:
            conf = draws.confusion[sl]
            if conf.shape[1:] != (S, K):
                raise ValueError("confusion draws do not match the state space")
            omega_k = np.transpose(conf[:, :, y], (0, 2, 1))
        else:
            om = draws.omega[sl]
            if om.shape[1:] != (zd.shape[1], S, K):
                raise ValueError("omega draws do not match the dataset dimensions")
            zeta = np.einsum("nm,dmsk->dnsk", zd, om)
            probs = softmax(zeta, axis=-1)
            omega_k = np.take_along_axis(probs, y[None, :, None, None], axis=3)[..., 0]
        gamma = bayes_gamma(p, omega_k)
        if mode == "mean":
            acc += gamma.sum(axis=0)
        else:
            cdf = np.cumsum(gamma, axis=-1)
            u = rng.random(gamma.shape[:2])[..., None]
            picks = np.minimum((u >= cdf).sum(axis=-1), S - 1)
            for d in range(picks.shape[0]):
                acc[n_idx, picks[d]] += 1.0
    gamma = acc / draws.n_draws
    gamma /= gamma.sum(axis=1, keepdims=True)
    return PosteriorPrediction(gamma=gamma, map_state=_argmax(gamma), draws_used=draws.n_draws, records=rows)


@dataclass(frozen=True)
class ReportedIntensityModel:
    """Multinomial-logit model of reported labels on observation covariates.

    ``beta_reported`` has shape ``(n_e + 1, K)`` with a zero reference column.
    """

    beta_reported: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta_reported, dtype=float)
        if b.ndim != 2 or b.shape[0] < 1:
            raise ValueError("beta_reported must be 2-D (n_e+1, K)")
        if not np.all(np.isfinite(b)):
            raise ValueError("beta_reported must be finite")
        if np.any(b[:, -1] != 0.0):
            raise ValueError("beta_reported reference column must be zero")
        object.__setattr__(self, "beta_reported", b)

    @property
    def K(self) -> int:
        return self.beta_reported.shape[1]

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        """Relative reported-state intensities, normalised per record."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.beta_reported.shape[0] - 1:
            raise ValueError("covariate count does not match the model")
        return softmax(self.beta_reported[0] + x @ self.beta_reported[1:], axis=-1)


def fit_reported_intensity(dataset: Dataset, prior_sd: float = 10.0, tol: float = 1e-6,
                           max_iter: int = 200) -> ReportedIntensityModel:
    """MAP multinomial-logit fit of every record's reported label on ``x``.

    A Normal(0, ``prior_sd``^2) prior sits on every coefficient.  Newton
    steps with backtracking run until the gradient norm drops below
    ``tol``.  Coefficients that run past +/-50 (separation) are clipped with
    a warning.
    """
    K = dataset.space.K
    n = dataset.n_records
    if n == 0:
        raise ValueError("no records to fit")
    counts = np.bincount(dataset.reported, minlength=K)
    if np.any(counts == 0):
        missing = [dataset.space.reported_labels[k] for k in np.flatnonzero(counts == 0)]
        warnings.warn(f"no records reported as {missing}; their intercepts rest on the prior", stacklevel=2)
    X = np.column_stack([np.ones(n), dataset.x])
    P = X.shape[1]
    Yh = np.zeros((n, K))
    Yh[np.arange(n), dataset.reported] = 1.0
    m = K - 1
    prec = 1.0 / prior_sd**2

    def objective(theta):
        B = np.zeros((P, K))
        B[:, :m] = theta.reshape(P, m)
        eta = X @ B
        mx = eta.max(axis=1, keepdims=True)
        lse = (mx + np.log(np.exp(eta - mx).sum(axis=1, keepdims=True)))[:, 0]
        ll = float(np.sum(eta[np.arange(n), dataset.reported]) - lse.sum())
        return ll - 0.5 * prec * float(theta @ theta), softmax(eta, axis=1)

    theta = np.zeros(P * m)
    if m == 0:
        return ReportedIntensityModel(np.zeros((P, K)))
    obj, prob = objective(theta)
    clipped = False
    for _ in range(max_iter):
        pm = prob[:, :m]
        grad = (X.T @ (Yh[:, :m] - pm)).ravel() - prec * theta
        if np.linalg.norm(grad) < tol:
            break
        # Hessian of the log posterior, blocks (j, a), (l, b)
        W = pm[:, :, None] * (np.eye(m)[None] - pm[:, None, :])  # (n, m, m)
        H = np.einsum("nj,nab,nl->jalb", X, W, X).reshape(P * m, P * m)
        H += prec * np.eye(P * m)
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = theta + t * step
            new_obj, new_prob = objective(cand)
            if new_obj >= obj - 1e-12 or t < 1e-10:
                break
            t *= 0.5
        theta, obj, prob = cand, new_obj, new_prob
        if np.any(np.abs(theta) > COEF_CLIP):
            clipped = True
            theta = np.clip(theta, -COEF_CLIP, COEF_CLIP)
            obj, prob = objective(theta)
    else:
        log.warning("reported-intensity fit stopped after %d iterations", max_iter)
    if clipped:
        warnings.warn("separation detected: reported-intensity coefficients clipped at +/-50", stacklevel=2)
    B = np.zeros((P, K))
    B[:, :m] = theta.reshape(P, m)
    return ReportedIntensityModel(B)


def _require_aligned(space: StateSpace):
    if not space.diagonal_aligned:
        raise ValueError("ML weighting needs the first S reported labels to equal the true labels in order")


def predict_ml_weighted(model: ReportedIntensityModel, dataset: Dataset, target_records=None,
                        *, mode: str = "conditional") -> PosteriorPrediction:
    """Weight the reported-state intensities by the ML scores of each record.

    ``mode="conditional"`` gives ``q_is`` proportional to ``lambda_is * w_is``
    with ``lambda_is`` the intensity of the reported label matching true
    state ``s``.  ``mode="literal"`` normalises ``lambda_ik * w_is`` over
    reported labels ``k``, reads it at the observed label and renormalises
    over ``s``; with per-record scores that do not vary with ``k`` this
    collapses to a uniform row.
    """
    if mode not in ML_MODES:
        raise ValueError(f"mode must be one of {ML_MODES}")
    if dataset.scores is None:
        raise ValueError("dataset has no ML score columns")
    space = dataset.space
    _require_aligned(space)
    if model.K != space.K:
        raise ValueError(f"model has {model.K} reported states, dataset has {space.K}")
    rows = _targets(dataset, target_records)
    S = space.S
    lam = model.probabilities(dataset.x[rows])  # (n, K)
    w = dataset.scores[rows]  # (n, S)
    if mode == "conditional":
        weighted = lam[:, :S] * w
    else:
        per_k = lam[:, None, :] * w[:, :, None]  # (n, S, K)
        denom = per_k.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            weighted = per_k[np.arange(len(rows)), :, dataset.reported[rows]] / denom
        weighted = np.where(denom > 0, weighted, 0.0)
    mass = weighted.sum(axis=1)
    if np.any(~(mass > 0)):
        bad = dataset.site_id[rows[np.flatnonzero(~(mass > 0))[0]]]
        raise ValueError(f"record {bad} has an all-zero weighted row")
    q = weighted / mass[:, None]
    return PosteriorPrediction(gamma=q, map_state=_argmax(q), draws_used=1, records=rows)
