"""Columnar container for verified/reported observation records."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import StateSpace

MISSING = -1


def _as_matrix(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        if a.shape[0] != n:
            raise ValueError(f"covariate matrix has {a.shape[0]} rows, expected {n}")
        return a
    return a.reshape(n, -1) if n else a.reshape(0, 0)


@dataclass(frozen=True)
class Dataset:
    """Per-record covariates, labels, optional ML scores and holdout flags.

    Labels are stored as indices into ``space``; a verified index of
    :data:`MISSING` means the record was not verified.  ``scores`` (when
    present) has shape ``(n, S)``.
    """

    space: StateSpace
    site_id: np.ndarray
    x: np.ndarray
    z: np.ndarray
    verified: np.ndarray
    reported: np.ndarray
    holdout: np.ndarray
    scores: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.reported)
        site_id = np.asarray(self.site_id).astype(str)
        x = _as_matrix(self.x, n)
        z = _as_matrix(self.z, n)
        verified = np.asarray(self.verified, dtype=np.intp)
        reported = np.asarray(self.reported, dtype=np.intp)
        holdout = np.asarray(self.holdout, dtype=bool)
        for name, arr in (("site_id", site_id), ("verified", verified), ("holdout", holdout)):
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} entries, expected {n}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValueError("covariates must be finite")
        if np.any((reported < 0) | (reported >= self.space.K)):
            raise ValueError("every record needs a reported label inside the state space")
        if np.any(verified >= self.space.S) or np.any(verified < MISSING):
            raise ValueError("verified label outside the state space")
        if np.any((verified == MISSING) & ~holdout):
            bad = site_id[(verified == MISSING) & ~holdout][:5].tolist()
            raise ValueError(f"training records must be verified; unverified: {bad}")
        scores = self.scores
        if scores is not None:
            scores = np.asarray(scores, dtype=float)
            if scores.shape != (n, self.space.S):
                raise ValueError(f"scores must have shape {(n, self.space.S)}, got {scores.shape}")
            if np.any(scores < 0) or np.any(scores.sum(axis=1) <= 0) or not np.all(np.isfinite(scores)):
                raise ValueError("score vectors must be finite, nonnegative and not all zero")
        x_names = tuple(self.x_names) or tuple(f"x_{j + 1}" for j in range(x.shape[1]))
        z_names = tuple(self.z_names) or tuple(f"z_{j + 1}" for j in range(z.shape[1]))
        if len(x_names) != x.shape[1] or len(z_names) != z.shape[1]:
            raise ValueError("covariate names do not match covariate columns")
        for name, val in (
            ("site_id", site_id),
            ("x", x),
            ("z", z),
            ("verified", verified),
            ("reported", reported),
            ("holdout", holdout),
            ("scores", scores),
            ("x_names", x_names),
            ("z_names", z_names),
        ):
            object.__setattr__(self, name, val)

    @property
    def n_records(self) -> int:
        return len(self.reported)

    @property
    def n_e(self) -> int:
        return self.x.shape[1]

    @property
    def n_c(self) -> int:
        return self.z.shape[1]

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return replace(
            self,
            site_id=self.site_id[mask],
            x=self.x[mask],
            z=self.z[mask],
            verified=self.verified[mask],
            reported=self.reported[mask],
            holdout=self.holdout[mask],
            scores=None if self.scores is None else self.scores[mask],
        )

    def training(self) -> "Dataset":
        return self.subset(~self.holdout)

    def validation(self) -> "Dataset":
        return self.subset(self.holdout)

    def with_scores(self, scores) -> "Dataset":
        return replace(self, scores=scores)

    def crosstab(self) -> np.ndarray:
        """Counts of (verified, reported) over verified records, shape ``(S, K)``."""
        ok = self.verified != MISSING
        out = np.zeros((self.space.S, self.space.K), dtype=np.int64)
        np.add.at(out, (self.verified[ok], self.reported[ok]), 1)
        return out

    def misreported(self) -> np.ndarray:
        """Boolean per record: reported label differs from the verified one."""
        r2t = self.space.reported_to_true()
        return r2t[self.reported] != self.verified

    def identical_to(self, other: "Dataset") -> bool:
        if self.space != other.space or self.x_names != other.x_names or self.z_names != other.z_names:
            return False
        same = all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("site_id", "x", "z", "verified", "reported", "holdout")
        )
        if (self.scores is None) != (other.scores is None):
            return False
        return same and (self.scores is None or np.array_equal(self.scores, other.scores))
