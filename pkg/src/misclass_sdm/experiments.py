"""Desk-scale simulation study: fit every scenario on replicate datasets and
tabulate holdout accuracy, precision and recall.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .mcmc import ChainSchedule, PriorSpec, fit
from .metrics import validation_metrics
from .predict import predict_bayes
from .scenarios import ALL_SCENARIOS, Scenario
from .simulate import Family, MisclassLevel, SimulationPlan, simulate_dataset

log = logging.getLogger(__name__)

DESK_SCHEDULE = ChainSchedule(n_chains=3, n_iters=5000, n_burnin=2500, thin=5)
DESK_REPLICATES = 20
METRICS = ("accuracy", "precision", "recall")


@dataclass
class ReplicateResult:
    family: str
    scenario: str
    replicate: int
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    converged: bool = False
    max_rhat: float | None = None
    inclusion: float | None = None
    mean_q: float | None = None
    n_mismatched: int | None = None
    error: str | None = None


@dataclass
class AggregateRow:
    family: str
    scenario: str
    n_replicates: int
    n_nonconverged: int
    n_failed: int
    stats: dict = field(default_factory=dict)  # metric -> {median, q25, q75}

    def median(self, metric: str) -> float | None:
        return self.stats.get(metric, {}).get("median")


@dataclass
class ExperimentTable:
    run_id: str
    settings: dict
    rows: list[AggregateRow]
    replicates: list[ReplicateResult]

    def row(self, family, scenario) -> AggregateRow:
        fam, sc = str(Family(str(family))), Scenario.parse(scenario).value
        for r in self.rows:
            if r.family == fam and r.scenario == sc:
                return r
        raise KeyError(f"no row for {fam}/{sc}")

    def precision_gap(self, family="full", better="covariate", worse="intercept") -> float:
        return self.row(family, better).median("precision") - self.row(family, worse).median("precision")

    def max_spread(self, family="reduced") -> float:
        """Largest range of scenario medians over the three metrics."""
        fam = str(Family(str(family)))
        worst = 0.0
        for metric in METRICS:
            vals = [r.median(metric) for r in self.rows if r.family == fam and r.median(metric) is not None]
            if len(vals) > 1:
                worst = max(worst, max(vals) - min(vals))
        return worst

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "settings": self.settings,
            "rows": [asdict(r) for r in self.rows],
            "replicates": [asdict(r) for r in self.replicates],
        }


def _run_replicate(task) -> list[ReplicateResult]:
    family, replicate, scenarios, data_seed, schedule, priors, n_sites, n_holdout, level = task
    plan = SimulationPlan(family=family, n_sites=n_sites, n_holdout=n_holdout, misclass_level=level, seed=data_seed)
    dataset = simulate_dataset(plan)
    out = []
    for sc in scenarios:
        res = ReplicateResult(family=str(plan.family), scenario=sc, replicate=replicate)
        try:
            fitted = fit(dataset, sc, priors, schedule, seed=data_seed)
            pred = predict_bayes(fitted, dataset)
            rows = pred.records
            rep = validation_metrics(dataset.verified[rows], pred.map_state, dataset.reported[rows], dataset.space)
            res.accuracy, res.precision, res.recall = rep.accuracy, rep.precision, rep.recall
            res.n_mismatched = rep.n_mismatched
            res.converged = fitted.converged
            res.max_rhat = float(fitted.diagnostics.rhat.max())
            if fitted.layout.n_selectors:
                res.inclusion = float(fitted.inclusion_probability()[0])
                res.mean_q = float(fitted.column("q[0]").mean())
        except Exception as exc:  # flagged, never dropped
            log.exception("replicate %s/%s/%d failed", family, sc, replicate)
            res.error = f"{type(exc).__name__}: {exc}"
        out.append(res)
    return out


def _quantiles(values) -> dict:
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return {"median": None, "q25": None, "q75": None}
    q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
    return {"median": float(med), "q25": float(q25), "q75": float(q75)}


def aggregate(results: list[ReplicateResult], families, scenarios) -> list[AggregateRow]:
    rows = []
    for fam in families:
        for sc in scenarios:
            sub = [r for r in results if r.family == fam and r.scenario == sc]
            ok = [r for r in sub if r.error is None]
            stats = {m: _quantiles([getattr(r, m) for r in ok]) for m in METRICS}
            stats["inclusion"] = _quantiles([r.inclusion for r in ok])
            stats["mean_q"] = _quantiles([r.mean_q for r in ok])
            rows.append(
                AggregateRow(
                    family=fam,
                    scenario=sc,
                    n_replicates=len(sub),
                    n_nonconverged=sum(1 for r in ok if not r.converged),
                    n_failed=len(sub) - len(ok),
                    stats=stats,
                )
            )
    return rows


def run_precision_gap(replicates: int = DESK_REPLICATES, families=("full", "reduced"), scenarios=None,
                      seed: int = 0, *, schedule: ChainSchedule = DESK_SCHEDULE,
                      priors: PriorSpec | None = None, n_sites: int = 1000, n_holdout: int = 200,
                      misclass_level: str = "baseline", n_jobs: int = 1,
                      results_dir=None) -> ExperimentTable:
    """Fit each scenario to ``replicates`` simulated datasets per family.

    Replicate ``r`` uses dataset and sampler seed ``seed + r``; every
    scenario of a replicate sees the same dataset.  With ``results_dir``
    the table is written under ``results_dir/<run_id>/``.
    """
    if replicates < 5:
        raise ValueError("need at least 5 replicates")
    families = [str(Family(str(f).lower())) for f in families]
    scenarios = [Scenario.parse(s).value for s in (scenarios or ALL_SCENARIOS)]
    level = str(MisclassLevel(str(misclass_level).lower()))
    priors = priors or PriorSpec()
    settings = {
        "replicates": replicates,
        "families": families,
        "scenarios": scenarios,
        "seed": seed,
        "schedule": asdict(schedule),
        "priors": asdict(priors),
        "n_sites": n_sites,
        "n_holdout": n_holdout,
        "misclass_level": level,
    }
    run_id = hashlib.sha1(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:12]
    tasks = [
        (fam, r, scenarios, seed + r, schedule, priors, n_sites, n_holdout, level)
        for fam in families
        for r in range(replicates)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            chunks = list(ex.map(_run_replicate, tasks))
    else:
        chunks = [_run_replicate(t) for t in tasks]
    results = [r for chunk in chunks for r in chunk]
    table = ExperimentTable(run_id, settings, aggregate(results, families, scenarios), results)
    if results_dir is not None:
        write_experiment(table, Path(results_dir) / run_id)
    return table


def write_experiment(table: ExperimentTable, out_dir) -> None:
    from .errors import InputOutputError
    from .io import write_json

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "table.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            stat_cols = [f"{m}_{q}" for m in (*METRICS, "inclusion") for q in ("median", "q25", "q75")]
            w.writerow(["family", "scenario", "n_replicates", "n_nonconverged", "n_failed", *stat_cols])
            for r in table.rows:
                vals = []
                for m in (*METRICS, "inclusion"):
                    for q in ("median", "q25", "q75"):
                        v = r.stats[m][q]
                        vals.append("" if v is None else repr(v))
                w.writerow([r.family, r.scenario, r.n_replicates, r.n_nonconverged, r.n_failed, *vals])
        with open(out / "replicates.csv", "w", encoding="utf-8", newline="") as fh:
            names = list(asdict(table.replicates[0]).keys()) if table.replicates else []
            w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
            w.writeheader()
            for r in table.replicates:
                w.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})
    except OSError as exc:
        raise InputOutputError(f"cannot write results to {out}: {exc}") from exc
    write_json("experiment", table.to_json(), out / "table.json")


def format_table(table: ExperimentTable) -> str:
    lines = [f"{'family':<12}{'scenario':<17}{'accuracy':>9}{'precision':>10}{'recall':>8}{'n':>4}{'nc':>4}{'fail':>5}"]
    for r in table.rows:
        def f(m):
            v = r.median(m)
            return "   -" if v is None else f"{v:.3f}"

        lines.append(
            f"{r.family:<12}{r.scenario:<17}{f('accuracy'):>9}{f('precision'):>10}{f('recall'):>8}"
            f"{r.n_replicates:>4}{r.n_nonconverged:>4}{r.n_failed:>5}"
        )
    return "\n".join(lines)
