"""Convergence diagnostics: potential scale reduction and effective sample size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: reported when chains are internally constant but disagree with each other
RHAT_SENTINEL = 1e10


def gelman_rubin(chains) -> float:
    """Classic potential scale reduction factor.

    ``chains`` is a sequence of equal-length draw vectors (or an
    ``(m, n)`` array).  The result is floored at 1.0.  Identical constant
    chains give 1.0; constant but different chains give
    :data:`RHAT_SENTINEL`.
    """
    lengths = {len(c) for c in chains}
    if len(lengths) != 1:
        raise ValueError(f"chains have unequal lengths: {sorted(lengths)}")
    data = np.asarray(chains, dtype=float)
    m, n = data.shape
    if m < 2 or n < 2:
        raise ValueError("need at least 2 chains with at least 2 draws each")
    means = data.mean(axis=1)
    W = data.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W <= 0.0:
        return 1.0 if B <= 0.0 else RHAT_SENTINEL
    var_plus = (n - 1) / n * W + B / n
    return max(float(np.sqrt(var_plus / W)), 1.0)


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(draws) -> float:
    """Initial positive sequence estimator (Geyer), capped at ``n``."""
    x = np.asarray(draws, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("effective_sample_size needs at least 10 draws")
    if np.ptp(x) == 0.0:
        return float(n)
    rho = _autocorr(x)
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    if tau <= 0.0:
        return float(n)
    return float(min(n / tau, n))


@dataclass
class Diagnostics:
    names: tuple[str, ...]
    rhat: np.ndarray
    ess: np.ndarray
    rhat_gate: float = 1.1

    @property
    def converged(self) -> bool:
        return bool(np.all(self.rhat < self.rhat_gate))

    def to_json(self) -> dict:
        return {
            "rhat": {k: float(v) for k, v in zip(self.names, self.rhat)},
            "ess": {k: float(v) for k, v in zip(self.names, self.ess)},
            "rhat_gate": self.rhat_gate,
            "converged": self.converged,
        }


def diagnose(draws: list[np.ndarray], names, rhat_gate: float = 1.1) -> Diagnostics:
    """Per-parameter R-hat and pooled ESS for per-chain ``(n, p)`` draw arrays."""
    stacked = np.stack([np.asarray(d, dtype=float) for d in draws])  # (m, n, p)
    m, n, p = stacked.shape
    rhat = np.ones(p)
    ess = np.full(p, float(m * n))
    for j in range(p):
        if m >= 2 and n >= 2:
            rhat[j] = gelman_rubin(stacked[:, :, j])
        if n >= 10:
            ess[j] = sum(effective_sample_size(stacked[c, :, j]) for c in range(m))
    return Diagnostics(names=tuple(names), rhat=rhat, ess=ess, rhat_gate=rhat_gate)
