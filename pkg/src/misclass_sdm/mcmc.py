"""Metropolis-within-Gibbs posterior sampling for all six scenarios.

Each free scalar (observation coefficient or MMGLM cell) gets a random-walk
Metropolis step whose proposal scale adapts by Robbins-Monro during burn-in
and is frozen afterwards.  Coefficients whose spike-and-slab indicator is
off are drawn straight from their prior.  Spike-and-slab indicators and their inclusion
probabilities are Gibbs-updated; Dirichlet confusion rows are drawn from
their conjugate posterior and the concentrations by log-scale Metropolis.

The log-likelihood is kept as per-record caches for two softmax blocks:

* observation block: ``eta_obs[i, s]`` (design times ``beta``), label ``V_i``
* classification block: ``eta_cls[i, k] = zeta_{i, V_i, k}``, label ``Y_i``

so a scalar move only re-evaluates the rows it touches.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import kernels
from .core import StateSpace
from .dataset import Dataset
from .diagnostics import Diagnostics, diagnose
from .scenarios import ParameterLayout, Scenario, ScenarioConfig

log = logging.getLogger(__name__)

ADAPT_EXPONENT = 0.6
INIT_OMEGA_CLIP = 3.0
CONFUSION_FLOOR = 1e-300


@dataclass(frozen=True)
class PriorSpec:
    beta_sd: float = 10.0
    omega_sd: float = 1.0
    alpha_rate: float = 1.0
    q_a: float = 1.0
    q_b: float = 1.0

    def __post_init__(self):
        for name in ("beta_sd", "omega_sd", "alpha_rate", "q_a", "q_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ChainSchedule:
    n_chains: int = 3
    n_iters: int = 10000
    n_burnin: int = 5000
    thin: int = 5
    target_accept: float = 0.44
    rhat_gate: float = 1.1

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if not 0 <= self.n_burnin < self.n_iters:
            raise ValueError("need 0 <= n_burnin < n_iters")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def n_retained(self) -> int:
        return (self.n_iters - self.n_burnin) // self.thin


@dataclass
class ChainOutput:
    """Retained draws of one chain.

    ``draws`` columns follow ``param_names``: free coefficients, then the
    inclusion probabilities ``q[j]``, then (Dirichlet scenarios) the
    confusion entries ``Omega[s,k]`` and concentrations ``alpha[s,k]``.
    """

    param_names: tuple[str, ...]
    draws: np.ndarray
    psi_draws: np.ndarray
    log_posterior: np.ndarray
    accept_rates: dict
    proposal_sd: np.ndarray = field(repr=False, default=None)

    @property
    def n_retained(self) -> int:
        return self.draws.shape[0]


@dataclass
class FitResult:
    """Chains plus everything needed to rebuild per-draw parameters."""

    config: ScenarioConfig
    space: StateSpace
    layout: ParameterLayout
    chains: list[ChainOutput]
    diagnostics: Diagnostics
    priors: PriorSpec
    schedule: ChainSchedule
    seed: int
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.chains[0].param_names

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged

    def pooled(self) -> np.ndarray:
        return np.concatenate([c.draws for c in self.chains])

    def pooled_psi(self) -> np.ndarray:
        return np.concatenate([c.psi_draws for c in self.chains])

    def column(self, name: str) -> np.ndarray:
        j = self.param_names.index(name)
        return self.pooled()[:, j]

    def parameter_draws(self) -> "PosteriorDraws":
        """Full per-draw arrays with spike-and-slab indicators applied."""
        return posterior_draws(self.layout, self.pooled(), self.pooled_psi())

    def inclusion_probability(self) -> np.ndarray:
        from .metrics import inclusion_probability

        return inclusion_probability([c.psi_draws for c in self.chains])


@dataclass
class PosteriorDraws:
    """``beta`` is ``(D, P, S)``; either ``omega`` ``(D, n_c+1, S, K)`` or
    ``confusion`` ``(D, S, K)`` is set."""

    beta: np.ndarray
    omega: np.ndarray | None
    confusion: np.ndarray | None

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]


def posterior_draws(layout: ParameterLayout, draws: np.ndarray, psi: np.ndarray) -> PosteriorDraws:
    draws = np.atleast_2d(draws)
    psi = np.asarray(psi, dtype=float).reshape(draws.shape[0], -1)
    beta, omega = layout.expand(draws[:, : layout.n_free])
    cfg = layout.config
    n_sel = layout.n_selectors
    if n_sel:
        if cfg.appends_z:
            beta[:, cfg.n_e + 1 :, :] *= psi[:, :, None]
        else:
            omega[:, 1:, :, :] *= psi[:, :, None, None]
    confusion = None
    if cfg.uses_dirichlet:
        S, K = layout.space.S, layout.space.K
        start = layout.n_free + n_sel
        confusion = draws[:, start : start + S * K].reshape(-1, S, K)
        omega = None
    return PosteriorDraws(beta=beta, omega=omega, confusion=confusion)


def chain_param_names(layout: ParameterLayout) -> tuple[str, ...]:
    names = list(layout.names)
    names += [f"q[{j}]" for j in range(layout.n_selectors)]
    if layout.config.uses_dirichlet:
        S, K = layout.space.S, layout.space.K
        names += [f"Omega[{s},{k}]" for s in range(S) for k in range(K)]
        names += [f"alpha[{s},{k}]" for s in range(S) for k in range(K)]
    return tuple(names)


def _dirichlet_logpdf(x, a) -> float:
    return float(gammaln(a.sum()) - gammaln(a).sum() + np.sum((a - 1.0) * np.log(x)))


def _rng(seed: int, chain: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed).spawn(chain + 1)[chain]
    return np.random.Generator(np.random.Philox(ss))


class _Chain:
    def __init__(self, train: Dataset, layout: ParameterLayout, priors: PriorSpec,
                 schedule: ChainSchedule, rng: np.random.Generator,
                 fixed_alpha: float | None, sample_prior: bool, kern):
        self.layout = layout
        self.cfg = layout.config
        self.priors = priors
        self.schedule = schedule
        self.rng = rng
        self.fixed_alpha = fixed_alpha
        self.use_lik = not sample_prior
        self.k = kern
        space = layout.space
        S, K = space.S, space.K
        n = train.n_records
        self.S, self.K, self.n = S, K, n

        obs_cols = [np.ones(n), *train.x.T]
        if self.cfg.appends_z:
            obs_cols += list(train.z.T)
        self.X = np.ascontiguousarray(np.column_stack(obs_cols))
        self.Zd = np.ascontiguousarray(np.column_stack([np.ones(n), *train.z.T]))
        self.dirs_obs = [np.ascontiguousarray(self.X[:, j]) for j in range(self.X.shape[1])]
        self.dirs_cls = [np.ascontiguousarray(self.Zd[:, m]) for m in range(self.Zd.shape[1])]
        self.V = np.ascontiguousarray(train.verified, dtype=np.intp)
        self.Y = np.ascontiguousarray(train.reported, dtype=np.intp)
        self.rows_all = np.arange(n, dtype=np.intp)
        self.rows_by_state = [np.flatnonzero(self.V == s).astype(np.intp) for s in range(S)]
        self.counts = train.crosstab().astype(float)

        self.eta_obs = np.zeros((n, S))
        self.eta_cls = np.zeros((n, K))
        self.ll_obs = np.zeros(n)
        self.ll_cls = np.zeros(n)
        self.n_sel = layout.n_selectors
        self.dirichlet = self.cfg.uses_dirichlet

        # per free parameter: prior sd and the (block arrays, rows, col, dir, out) of each cell
        self.prior_sd = np.empty(layout.n_free)
        self.targets = []
        for i, p in enumerate(layout.params):
            cells = []
            if p.block == "beta":
                self.prior_sd[i] = priors.beta_sd
                for j, s in p.cells:
                    cells.append((self.eta_obs, self.V, self.ll_obs, self.rows_all, s,
                                  self.dirs_obs[j], np.empty(n)))
            else:
                self.prior_sd[i] = priors.omega_sd
                for m, s, k in p.cells:
                    rows = self.rows_by_state[s]
                    cells.append((self.eta_cls, self.Y, self.ll_cls, rows, k,
                                  self.dirs_cls[m], np.empty(len(rows))))
            self.targets.append((p.selector, tuple(cells)))

    # -- state -----------------------------------------------------------
    def initialise(self):
        rng, pr = self.rng, self.priors
        theta = np.empty(self.layout.n_free)
        for i, p in enumerate(self.layout.params):
            if p.block == "beta":
                theta[i] = rng.normal(0.0, pr.beta_sd)
            else:
                theta[i] = np.clip(rng.normal(0.0, pr.omega_sd), -INIT_OMEGA_CLIP, INIT_OMEGA_CLIP)
        self.theta = theta
        self.q = rng.beta(pr.q_a, pr.q_b, size=self.n_sel)
        self.psi = (rng.random(self.n_sel) < self.q).astype(np.int64)
        if self.dirichlet:
            if self.fixed_alpha is None:
                self.alpha = rng.exponential(1.0 / pr.alpha_rate, size=(self.S, self.K))
            else:
                self.alpha = np.full((self.S, self.K), float(self.fixed_alpha))
            self.confusion = self._draw_dirichlet(self.alpha)
        self.rebuild()

    def _draw_dirichlet(self, a):
        g = np.maximum(self.rng.standard_gamma(a), CONFUSION_FLOOR)
        return g / g.sum(axis=1, keepdims=True)

    def full_params(self):
        beta, omega = self.layout.expand(self.theta)
        if self.n_sel:
            if self.cfg.appends_z:
                beta[self.cfg.n_e + 1 :] *= self.psi[:, None]
            else:
                omega[1:] *= self.psi[:, None, None]
        return beta, omega

    def rebuild(self):
        beta, omega = self.full_params()
        self.eta_obs[:] = self.X @ beta
        self.k.block_loglik(self.eta_obs, self.V, self.ll_obs)
        if not self.dirichlet:
            zeta = np.einsum("im,mik->ik", self.Zd, omega[:, self.V, :])
            self.eta_cls[:] = zeta
            self.k.block_loglik(self.eta_cls, self.Y, self.ll_cls)

    # -- updates ---------------------------------------------------------
    def update_scalars(self, adapt_gain):
        theta, rng, psi, k = self.theta, self.rng, self.psi, self.k
        steps = rng.standard_normal(len(theta))
        logu = np.log(rng.random(len(theta)))
        for i, (selector, cells) in enumerate(self.targets):
            if self.use_lik and selector >= 0 and psi[selector] == 0:
                # switched-off effect: its full conditional is the prior
                theta[i] = self.prior_sd[i] * steps[i]
                continue
            cur = theta[i]
            delta = self.log_sd_exp[i] * steps[i]
            new = cur + delta
            sd = self.prior_sd[i]
            dlp = -(new * new - cur * cur) / (2.0 * sd * sd)
            active = self.use_lik and (selector < 0 or psi[selector] == 1)
            dll = 0.0
            if active:
                for eta, labels, cache, rows, col, direction, out in cells:
                    dll += k.delta_loglik(eta, labels, rows, col, direction, delta, cache, out)
            accepted = logu[i] < dll + dlp
            if accepted:
                theta[i] = new
                if active:
                    for eta, labels, cache, rows, col, direction, out in cells:
                        k.commit(eta, rows, col, direction, delta, cache, out)
            self.n_prop[i] += 1
            self.n_acc[i] += accepted
            if adapt_gain:
                self.log_sd[i] += adapt_gain * (float(accepted) - self.schedule.target_accept)
                self.log_sd_exp[i] = np.exp(self.log_sd[i])

    def update_selection(self):
        pr = self.priors
        beta, omega = self.layout.expand(self.theta)
        for j in range(self.n_sel):
            zj = self.Zd[:, j + 1]
            if self.cfg.appends_z:
                eta, labels, cache = self.eta_obs, self.V, self.ll_obs
                contrib = zj[:, None] * beta[self.cfg.n_e + 1 + j][None, :]
            else:
                eta, labels, cache = self.eta_cls, self.Y, self.ll_cls
                contrib = zj[:, None] * omega[j + 1][self.V, :]
            eta0 = np.ascontiguousarray(eta - self.psi[j] * contrib)
            eta1 = np.ascontiguousarray(eta0 + contrib)
            c0, c1 = np.empty(self.n), np.empty(self.n)
            if self.use_lik:
                ll0 = self.k.block_loglik(eta0, labels, c0)
                ll1 = self.k.block_loglik(eta1, labels, c1)
            else:
                ll0 = ll1 = 0.0
                c0 = c1 = cache.copy()
            q = self.q[j]
            log_odds = np.log(q) - np.log1p(-q) + ll1 - ll0
            p1 = 0.5 * (1.0 + np.tanh(0.5 * log_odds))
            new = int(self.rng.random() < p1)
            self.psi[j] = new
            eta[:] = eta1 if new else eta0
            cache[:] = c1 if new else c0
            self.q[j] = self.rng.beta(pr.q_a + new, pr.q_b + 1 - new)

    def update_dirichlet(self, adapt_gain):
        counts = self.counts if self.use_lik else np.zeros_like(self.counts)
        self.confusion = self._draw_dirichlet(self.alpha + counts)
        if self.fixed_alpha is not None:
            return
        rate = self.priors.alpha_rate
        for s in range(self.S):
            a = self.alpha[s]
            cur_lp = _dirichlet_logpdf(self.confusion[s], a)
            for kk in range(self.K):
                idx = s * self.K + kk
                old = a[kk]
                new = old * np.exp(self.alpha_log_sd[idx] * self.rng.standard_normal())
                trial = a.copy()
                trial[kk] = new
                new_lp = _dirichlet_logpdf(self.confusion[s], trial)
                # log-scale walk: Exp prior plus Jacobian
                log_ratio = new_lp - cur_lp - rate * (new - old) + np.log(new) - np.log(old)
                accepted = np.log(self.rng.random()) < log_ratio
                if accepted:
                    a[kk] = new
                    cur_lp = new_lp
                self.alpha_prop[idx] += 1
                self.alpha_acc[idx] += accepted
                if adapt_gain:
                    self.alpha_log_sd[idx] += adapt_gain * (float(accepted) - self.schedule.target_accept)

    def log_posterior(self) -> float:
        pr = self.priors
        lp = -0.5 * np.sum((self.theta / self.prior_sd) ** 2)
        if self.n_sel:
            lp += np.sum(self.psi * np.log(self.q) + (1 - self.psi) * np.log1p(-self.q))
            lp += np.sum((pr.q_a - 1) * np.log(self.q) + (pr.q_b - 1) * np.log1p(-self.q))
        if self.use_lik:
            lp += self.ll_obs.sum()
            if not self.dirichlet:
                lp += self.ll_cls.sum()
        if self.dirichlet:
            if self.use_lik:
                lp += float(np.sum(self.counts * np.log(self.confusion)))
            lp += sum(_dirichlet_logpdf(self.confusion[s], self.alpha[s]) for s in range(self.S))
            if self.fixed_alpha is None:
                lp -= pr.alpha_rate * self.alpha.sum()
        return float(lp)

    def record(self) -> np.ndarray:
        parts = [self.theta, self.q]
        if self.dirichlet:
            parts += [self.confusion.ravel(), self.alpha.ravel()]
        return np.concatenate(parts)

    # -- driver ----------------------------------------------------------
    def run(self) -> ChainOutput:
        sch = self.schedule
        nf = self.layout.n_free
        self.log_sd = np.full(nf, np.log(0.5))
        self.log_sd_exp = np.exp(self.log_sd)
        self.n_prop = np.zeros(nf, dtype=np.int64)
        self.n_acc = np.zeros(nf, dtype=np.int64)
        SK = self.S * self.K
        self.alpha_log_sd = np.full(SK, np.log(0.5))
        self.alpha_prop = np.zeros(SK, dtype=np.int64)
        self.alpha_acc = np.zeros(SK, dtype=np.int64)
        self.initialise()

        n_ret = sch.n_retained
        names = chain_param_names(self.layout)
        draws = np.empty((n_ret, len(names)))
        psi_draws = np.empty((n_ret, self.n_sel), dtype=np.int8)
        lp_trace = np.empty(n_ret)
        r = 0
        for t in range(sch.n_iters):
            burn = t < sch.n_burnin
            gain = (t + 1.0) ** -ADAPT_EXPONENT if burn else 0.0
            if t == sch.n_burnin:
                # frozen kernel from here on; acceptance counted post burn-in
                self.n_prop[:] = 0
                self.n_acc[:] = 0
                self.alpha_prop[:] = 0
                self.alpha_acc[:] = 0
            self.update_scalars(gain)
            if self.n_sel:
                self.update_selection()
            if self.dirichlet:
                self.update_dirichlet(gain)
            if not burn and (t - sch.n_burnin + 1) % sch.thin == 0 and r < n_ret:
                draws[r] = self.record()
                psi_draws[r] = self.psi
                lp_trace[r] = self.log_posterior()
                r += 1

        def rate(acc, prop):
            tot = prop.sum()
            return float(acc.sum() / tot) if tot else float("nan")

        is_beta = np.array([p.block == "beta" for p in self.layout.params], dtype=bool)
        accept = {
            "beta": rate(self.n_acc[is_beta], self.n_prop[is_beta]),
            "omega": rate(self.n_acc[~is_beta], self.n_prop[~is_beta]),
        }
        if self.dirichlet and self.fixed_alpha is None:
            accept["alpha"] = rate(self.alpha_acc, self.alpha_prop)
        accept = {k: v for k, v in accept.items() if v == v}
        return ChainOutput(
            param_names=names,
            draws=draws,
            psi_draws=psi_draws,
            log_posterior=lp_trace,
            accept_rates=accept,
            proposal_sd=self.log_sd_exp.copy(),
        )


def _run_chain(args) -> ChainOutput:
    train, layout, priors, schedule, seed, index, fixed_alpha, sample_prior, backend = args
    chain = _Chain(train, layout, priors, schedule, _rng(seed, index), fixed_alpha,
                   sample_prior, kernels.get_backend(backend))
    return chain.run()


def fit(dataset: Dataset, scenario, priors: PriorSpec | None = None,
        schedule: ChainSchedule | None = None, seed: int = 0, *,
        fixed_alpha: float | None = None, sample_prior: bool = False,
        n_jobs: int = 1, backend: str | None = None) -> FitResult:
    """Sample the posterior of ``scenario`` given the training records.

    Parameters
    ----------
    dataset
        Records; only those with ``holdout == False`` are used.
    scenario
        A :class:`Scenario` (or its name) or a :class:`ScenarioConfig`.
    fixed_alpha
        Pin every Dirichlet concentration (Constant/Main only).
    sample_prior
        Drop the likelihood entirely; used to check the sampler against its
        priors.
    n_jobs
        Chains to run concurrently in worker processes.
    backend
        ``"cython"`` or ``"python"`` kernels; defaults to the active one.

    Non-converged runs are returned with ``converged == False``.
    """
    priors = priors or PriorSpec()
    schedule = schedule or ChainSchedule()
    if isinstance(scenario, ScenarioConfig):
        config = scenario
    else:
        config = ScenarioConfig(Scenario.parse(scenario), n_e=dataset.n_e, n_c=dataset.n_c)
    if config.n_e != dataset.n_e or config.n_c != dataset.n_c:
        raise ValueError(
            f"scenario expects n_e={config.n_e}, n_c={config.n_c}; dataset has "
            f"n_e={dataset.n_e}, n_c={dataset.n_c}"
        )
    if fixed_alpha is not None and not fixed_alpha > 0:
        raise ValueError("fixed_alpha must be positive")
    train = dataset.training()
    if train.n_records == 0:
        raise ValueError("empty training set: no verified, non-holdout records")
    layout = ParameterLayout(config, dataset.space)
    jobs = [
        (train, layout, priors, schedule, seed, c, fixed_alpha, sample_prior, backend)
        for c in range(schedule.n_chains)
    ]
    if n_jobs > 1 and schedule.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, schedule.n_chains)) as ex:
            chains = list(ex.map(_run_chain, jobs))
    else:
        chains = [_run_chain(j) for j in jobs]
    diag = diagnose([c.draws for c in chains], chains[0].param_names, schedule.rhat_gate)
    if not diag.converged:
        worst = diag.names[int(np.argmax(diag.rhat))]
        log.warning("%s fit not converged (max R-hat %.3f at %s)", config.kind, diag.rhat.max(), worst)
    return FitResult(
        config=config,
        space=dataset.space,
        layout=layout,
        chains=chains,
        diagnostics=diag,
        priors=priors,
        schedule=schedule,
        seed=seed,
        x_names=dataset.x_names,
        z_names=dataset.z_names,
    )

