"""Brute-force reference computations used to check the model algebra.

These deliberately avoid the vectorised code paths of the main modules so
that agreement between the two is meaningful.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats

from .core import ObservationParams, log_intensity, state_probs

POISSON_TRUNCATION = 20


def bruteforce_posterior(p, omega, k: int) -> np.ndarray:
    """P(V = s | Y = k) from an explicit joint table ``p_s * Omega_sk``."""
    p = [float(v) for v in np.asarray(p, dtype=float).ravel()]
    omega = np.asarray(omega, dtype=float)
    S, K = omega.shape
    if len(p) != S:
        raise ValueError(f"p has {len(p)} states, omega has {S} rows")
    if not 0 <= k < K:
        raise IndexError(f"reported index {k} outside 0..{K - 1}")
    table = [[p[s] * float(omega[s, j]) for j in range(K)] for s in range(S)]
    column = [table[s][k] for s in range(S)]
    total = 0.0
    for v in column:
        total += v
    if total <= 0.0:
        raise ValueError(f"reported state {k} has zero joint mass")
    return np.array([v / total for v in column])


def poisson_multinomial_check(total_intensity: float, p, omega, n_draws: int, seed: int,
                              state: int = 0) -> float:
    """Total-variation distance between thinned and independent Poisson counts.

    Simulates a Poisson(``total_intensity``) number of individuals, assigns
    each a true state from ``p`` and, for those in ``state``, a reported
    label from row ``state`` of ``omega``.  The empirical joint law of the
    reported counts is compared with the product of independent
    Poisson(``total_intensity * p_s * Omega_sk``) laws on a grid truncated
    at :data:`POISSON_TRUNCATION` per count.

    ``omega`` may be a single row (used for ``state``) or an ``(S, K)``
    matrix.
    """
    lam = float(total_intensity)
    if not lam > 0:
        raise ValueError("total intensity must be positive")
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    p = np.asarray(p, dtype=float).ravel()
    omega = np.asarray(omega, dtype=float)
    row = omega if omega.ndim == 1 else omega[state]
    K = len(row)
    rng = np.random.default_rng(seed)
    n_total = rng.poisson(lam, size=n_draws)
    n_state = rng.binomial(n_total, p[state])
    counts = rng.multinomial(n_state, row)  # (n_draws, K)

    T = POISSON_TRUNCATION
    inside = np.all(counts <= T, axis=1)
    flat = np.ravel_multi_index(tuple(counts[inside].T), (T + 1,) * K)
    emp = np.bincount(flat, minlength=(T + 1) ** K) / n_draws

    rates = lam * p[state] * row
    grid = np.arange(T + 1)
    marg = [stats.poisson.pmf(grid, r) if r > 0 else (grid == 0).astype(float) for r in rates]
    theo = marg[0]
    for m in marg[1:]:
        theo = np.multiply.outer(theo, m)
    theo = np.ravel(theo)
    outside = (1.0 - inside.mean()) + max(0.0, 1.0 - theo.sum())
    return float(0.5 * (np.abs(emp - theo).sum() + outside))


def logit_equivalence_check(obs_params: ObservationParams, x, s: int, s_prime: int) -> float:
    """Residual of the log-odds identity between two true states.

    ``|ln(p_s / p_s') - [(beta_0s - beta_0s') + sum_j x_j (beta_js - beta_js')]|``
    """
    x = np.asarray(x, dtype=float).ravel()
    p = state_probs(log_intensity(obs_params, x))
    b = obs_params.beta
    linear = (b[0, s] - b[0, s_prime]) + math.fsum(x[j] * (b[j + 1, s] - b[j + 1, s_prime]) for j in range(len(x)))
    return abs(math.log(p[s]) - math.log(p[s_prime]) - linear)


def enumerate_joint(p, omega) -> dict:
    """Every ``(s, k)`` cell of the joint table, for small hand checks."""
    p = np.asarray(p, dtype=float)
    omega = np.asarray(omega, dtype=float)
    S, K = omega.shape
    return {(s, k): p[s] * omega[s, k] for s, k in itertools.product(range(S), range(K))}
