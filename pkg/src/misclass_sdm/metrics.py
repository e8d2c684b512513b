"""Validation metrics, parameter-recovery summaries and inclusion rates."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import ParameterSet, StateSpace


@dataclass(frozen=True)
class ValidationReport:
    """Holdout scores.

    ``precision`` is the share of misreported records whose true state was
    recovered; ``recall`` the share of correctly reported records that were
    kept.  Either is ``None`` when its denominator is empty.
    """

    accuracy: float
    precision: float | None
    recall: float | None
    n_validation: int
    n_mismatched: int
    crosstab: np.ndarray  # truth x predicted counts

    def to_json(self) -> dict:
        out = asdict(self)
        out["crosstab"] = self.crosstab.tolist()
        return out


def _as_index(labels, space: StateSpace, kind: str) -> np.ndarray:
    labels = np.asarray(labels)
    size = space.S if kind == "true" else space.K
    if labels.dtype.kind in "iu":
        idx = labels.astype(np.intp)
        if np.any((idx < 0) | (idx >= size)):
            raise ValueError(f"{kind} label index outside 0..{size - 1}")
        return idx
    lookup = space.true_index if kind == "true" else space.reported_index
    try:
        return np.array([lookup(str(v)) for v in labels], dtype=np.intp)
    except KeyError as exc:
        raise ValueError(exc.args[0]) from None


def validation_metrics(truth, predicted, reported, space: StateSpace) -> ValidationReport:
    """Score predicted true states against verified truth.

    Labels may be integer indices (true-state indices for ``truth`` and
    ``predicted``, reported indices for ``reported``) or label strings.  A
    reported label counts as correct when it maps to the same true label.
    """
    pred = _as_index(predicted, space, "true")
    true = _as_index(truth, space, "true")
    rep = _as_index(reported, space, "reported")
    if not len(pred) == len(true) == len(rep):
        raise ValueError("predicted, truth and reported must have equal length")
    if len(pred) == 0:
        raise ValueError("no records to score")
    hit = pred == true
    misreported = space.reported_to_true()[rep] != true
    n_mis = int(misreported.sum())
    n_ok = len(pred) - n_mis
    crosstab = np.zeros((space.S, space.S), dtype=np.int64)
    np.add.at(crosstab, (true, pred), 1)
    return ValidationReport(
        accuracy=float(hit.mean()),
        precision=float(hit[misreported].mean()) if n_mis else None,
        recall=float(hit[~misreported].mean()) if n_ok else None,
        n_validation=len(pred),
        n_mismatched=n_mis,
        crosstab=crosstab,
    )


@dataclass(frozen=True)
class RecoveryReport:
    """Per-parameter bias (posterior median minus truth), 95% interval
    coverage and precision (inverse posterior variance)."""

    names: tuple[str, ...]
    truth: np.ndarray
    median: np.ndarray
    bias: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    covered: np.ndarray
    precision: np.ndarray

    def to_json(self) -> dict:
        return {
            name: {
                "truth": float(self.truth[i]),
                "median": float(self.median[i]),
                "bias": float(self.bias[i]),
                "lower": float(self.lower[i]),
                "upper": float(self.upper[i]),
                "covered": bool(self.covered[i]),
                "precision": float(self.precision[i]),
            }
            for i, name in enumerate(self.names)
        }


def recovery_metrics(draws, truth, names=None, level: float = 0.95) -> RecoveryReport:
    """Summarise posterior draws of the free parameters against the truth.

    ``draws`` is a fitted result (its pooled free parameters are used) or a
    ``(D, p)`` array; ``truth`` is a :class:`ParameterSet` (with a fitted
    result) or a length-``p`` vector.
    """
    if hasattr(draws, "layout"):
        layout = draws.layout
        if isinstance(truth, ParameterSet):
            truth = layout.truth_vector(truth)
        names = layout.names if names is None else names
        draws = draws.pooled()[:, : layout.n_free]
    elif isinstance(truth, ParameterSet):
        raise TypeError("a ParameterSet truth needs a fitted result to map free parameters")
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if draws.shape[1] != truth.shape[0]:
        raise ValueError(f"draws have {draws.shape[1]} columns, truth has {truth.shape[0]}")
    if draws.shape[0] < 2:
        raise ValueError("need at least two draws")
    tail = (1.0 - level) / 2.0
    lower, median, upper = np.quantile(draws, [tail, 0.5, 1.0 - tail], axis=0)
    var = draws.var(axis=0, ddof=1)
    with np.errstate(divide="ignore"):
        precision = np.where(var > 0, 1.0 / np.where(var > 0, var, 1.0), np.inf)
    names = tuple(names) if names is not None else tuple(f"p{j}" for j in range(truth.shape[0]))
    return RecoveryReport(
        names=names,
        truth=truth,
        median=median,
        bias=median - truth,
        lower=lower,
        upper=upper,
        covered=(lower <= truth) & (truth <= upper),
        precision=precision,
    )


def inclusion_probability(psi_draws) -> np.ndarray:
    """Posterior mean of each spike-and-slab indicator.

    ``psi_draws`` is one ``(D, n_sel)`` array or a list of per-chain arrays.
    """
    if isinstance(psi_draws, (list, tuple)):
        psi_draws = np.concatenate([np.asarray(p) for p in psi_draws])
    psi = np.asarray(psi_draws, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.shape[0] == 0:
        raise ValueError("no indicator draws")
    if np.any((psi != 0) & (psi != 1)):
        raise ValueError("indicator draws must be 0 or 1")
    return psi.mean(axis=0)
