"""The six classification-process model variants as constraint masks.

A :class:`ConstraintMask` says which MMGLM cells are pinned at zero and
which cells share a single sampled value.  :class:`ParameterLayout` turns a
mask into the ordered vector of free scalars the sampler works on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import ParameterSet, StateSpace


class Scenario(str, enum.Enum):
    COVARIATE = "covariate"
    FIXED_COVARIATE = "fixed-covariate"
    FIXED_INTERCOV = "fixed-intercov"
    INTERCEPT = "intercept"
    CONSTANT = "constant"
    MAIN = "main"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, name) -> "Scenario":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"variable": "covariate", "simplified-covariate": "fixed-covariate"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scenario {name!r}; choose one of {choices}") from None


ALL_SCENARIOS = tuple(Scenario)
HETEROGENEOUS = (Scenario.COVARIATE, Scenario.FIXED_COVARIATE, Scenario.FIXED_INTERCOV)
DIRICHLET = (Scenario.CONSTANT, Scenario.MAIN)


@dataclass(frozen=True)
class ScenarioConfig:
    kind: Scenario
    n_e: int
    n_c: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Scenario.parse(self.kind))
        if self.n_e < 0 or self.n_c < 0:
            raise ValueError("covariate counts must be non-negative")

    @property
    def selection_enabled(self) -> bool:
        return self.kind not in (Scenario.CONSTANT, Scenario.INTERCEPT)

    @property
    def uses_dirichlet(self) -> bool:
        return self.kind in DIRICHLET

    @property
    def appends_z(self) -> bool:
        """Main adds the classification covariates to the observation design."""
        return self.kind is Scenario.MAIN

    @property
    def n_obs_covariates(self) -> int:
        return self.n_e + (self.n_c if self.appends_z else 0)

    def validate(self, space: StateSpace) -> None:
        if self.kind in (Scenario.FIXED_COVARIATE, Scenario.FIXED_INTERCOV):
            if space.S > space.K:
                raise ValueError(f"{self.kind} needs S <= K (got S={space.S}, K={space.K})")
            if not space.diagonal_aligned:
                raise ValueError(
                    f"{self.kind} needs the first {space.S} reported labels to equal the true labels in order"
                )


@dataclass(frozen=True)
class ConstraintMask:
    """``zero_mask[m, s, k]`` is True where ``omega[m][s, k]`` is fixed at 0.

    ``tie_groups`` lists disjoint sets of ``(m, s, k)`` cells constrained to
    be equal.  Dirichlet scenarios mask every MMGLM cell.
    """

    config: ScenarioConfig
    S: int
    K: int
    zero_mask: np.ndarray
    tie_groups: tuple[tuple[tuple[int, int, int], ...], ...]


def build_mask(config: ScenarioConfig, space: StateSpace) -> ConstraintMask:
    config.validate(space)
    S, K, n_c = space.S, space.K, config.n_c
    zero = np.zeros((n_c + 1, S, K), dtype=bool)
    zero[:, :, space.reference_reported] = True
    ties: list[tuple[tuple[int, int, int], ...]] = []
    kind = config.kind
    if kind in DIRICHLET:
        zero[:] = True
    elif kind is Scenario.INTERCEPT:
        zero[1:] = True
    elif kind in (Scenario.FIXED_COVARIATE, Scenario.FIXED_INTERCOV):
        off_diag = ~np.eye(S, K, dtype=bool)
        zero[1:] |= off_diag[None]
        if kind is Scenario.FIXED_INTERCOV:
            group = tuple((0, s, s) for s in range(S) if not zero[0, s, s])
            if len(group) > 1:
                ties.append(group)
    return ConstraintMask(config=config, S=S, K=K, zero_mask=zero, tie_groups=tuple(ties))


def free_parameter_count(mask: ConstraintMask) -> int:
    """Independently sampled MMGLM scalars after masking and tying."""
    n_free_cells = int(np.count_nonzero(~mask.zero_mask))
    return n_free_cells - sum(len(g) - 1 for g in mask.tie_groups)


@dataclass(frozen=True)
class FreeParam:
    """One sampled scalar and the cells it drives.

    ``block`` is ``"beta"`` (cells are ``(j, s)``) or ``"omega"`` (cells are
    ``(m, s, k)``).  ``selector`` is the spike-and-slab indicator index that
    multiplies this parameter, or -1.
    """

    name: str
    block: str
    cells: tuple[tuple[int, ...], ...]
    selector: int = -1


class ParameterLayout:
    """Ordered free parameters for a scenario on a state space.

    Observation coefficients come first (rows of the design, then states),
    followed by MMGLM cells in ``(m, s, k)`` order.  The reference columns
    of both blocks are never free.
    """

    def __init__(self, config: ScenarioConfig, space: StateSpace):
        self.config = config
        self.space = space
        self.mask = build_mask(config, space)
        self.n_design = config.n_obs_covariates + 1
        params: list[FreeParam] = []
        for j in range(self.n_design):
            sel = j - 1 - config.n_e if (config.appends_z and j > config.n_e) else -1
            for s in range(space.S - 1):
                params.append(FreeParam(f"beta[{j},{s}]", "beta", ((j, s),), sel))
        tied = {cell: grp for grp in self.mask.tie_groups for cell in grp}
        seen = set()
        zero = self.mask.zero_mask
        for m in range(zero.shape[0]):
            for s in range(space.S):
                for k in range(space.K):
                    if zero[m, s, k] or (m, s, k) in seen:
                        continue
                    cells = tied.get((m, s, k), ((m, s, k),))
                    seen.update(cells)
                    if len({c[1] for c in cells}) != len(cells):
                        raise ValueError("tie group cells must lie in distinct true-state rows")
                    sel = m - 1 if m > 0 else -1
                    params.append(FreeParam(f"omega{m}[{s},{k}]", "omega", tuple(cells), sel))
        self.params = tuple(params)
        self.n_beta = sum(p.block == "beta" for p in params)
        self.names = tuple(p.name for p in params)

    @property
    def n_free(self) -> int:
        return len(self.params)

    @property
    def n_selectors(self) -> int:
        return self.config.n_c if self.config.selection_enabled else 0

    def expand(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Free vector(s) -> full ``beta`` and ``omega`` arrays.

        Accepts ``(n_free,)`` or ``(D, n_free)``; leading draw axes carry
        through to the outputs.
        """
        theta = np.asarray(theta, dtype=float)
        lead = theta.shape[:-1]
        beta = np.zeros(lead + (self.n_design, self.space.S))
        omega = np.zeros(lead + self.mask.zero_mask.shape)
        for i, p in enumerate(self.params):
            for cell in p.cells:
                if p.block == "beta":
                    beta[(...,) + cell] = theta[..., i]
                else:
                    omega[(...,) + cell] = theta[..., i]
        return beta, omega

    def flatten(self, beta: np.ndarray, omega: np.ndarray | None) -> np.ndarray:
        """Inverse of :meth:`expand` for a single parameter state."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_design, self.space.S):
            raise ValueError(f"beta has shape {beta.shape}, expected {(self.n_design, self.space.S)}")
        need_omega = any(p.block == "omega" for p in self.params)
        if need_omega:
            if omega is None:
                raise ValueError("scenario has MMGLM parameters but no omega given")
            omega = np.asarray(omega, dtype=float)
            if omega.shape != self.mask.zero_mask.shape:
                raise ValueError(f"omega has shape {omega.shape}, expected {self.mask.zero_mask.shape}")
        out = np.empty(self.n_free)
        for i, p in enumerate(self.params):
            src = beta if p.block == "beta" else omega
            out[i] = src[p.cells[0]]
        return out

    def truth_vector(self, truth: ParameterSet) -> np.ndarray:
        return self.flatten(truth.beta, truth.omega)

    def satisfies_mask(self, omega: np.ndarray, atol: float = 0.0) -> bool:
        """Masked cells are exactly zero and tied cells exactly equal."""
        omega = np.asarray(omega)
        if np.any(omega[..., self.mask.zero_mask] != 0.0):
            return False
        for grp in self.mask.tie_groups:
            vals = [omega[(...,) + c] for c in grp]
            if any(np.any(np.abs(v - vals[0]) > atol) for v in vals[1:]):
                return False
        return True
