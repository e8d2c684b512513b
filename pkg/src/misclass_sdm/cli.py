"""Command-line entry point: simulate, fit, predict, evaluate, diagnose, experiment."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EXIT_CODES, ConvergenceError, DimensionError, InputOutputError, MisclassError, SchemaError
from .io import (
    RunConfig,
    default_jobs,
    load_config,
    load_dataset,
    load_posterior,
    load_predictions,
    parse_cap,
    save_dataset,
    save_posterior,
    save_predictions,
    save_truth,
    write_json,
)

log = logging.getLogger("misclass_sdm")

EPILOG = "exit codes:\n" + "\n".join(f"  {code}  {text}" for code, text in sorted(EXIT_CODES.items()))


def _add_schedule_args(p):
    p.add_argument("--chains", type=int, help="number of chains")
    p.add_argument("--iters", type=int, help="iterations per chain")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--thin", type=int, help="keep every n-th post burn-in draw")


def _schedule_from(args, base):
    from dataclasses import replace

    updates = {
        k: v
        for k, v in (("n_chains", args.chains), ("n_iters", args.iters), ("n_burnin", args.burnin), ("thin", args.thin))
        if v is not None
    }
    try:
        return replace(base, **updates)
    except ValueError as exc:
        raise SchemaError(f"bad chain schedule: {exc}") from None


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    caps = getattr(args, "cap", None) or []
    if caps:
        cfg.caps = {**cfg.caps, **dict(parse_cap(c) for c in caps)}
    return cfg


def cmd_simulate(args) -> int:
    from .simulate import SimulationPlan, simulate_dataset, synthesize_scores, true_parameters

    try:
        plan = SimulationPlan(
            family=args.family,
            n_sites=args.sites,
            n_holdout=args.holdout,
            misclass_level=args.misclass,
            correlation_rho=args.rho,
            seed=args.seed,
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    ds = simulate_dataset(plan)
    if args.scores is not None:
        ds = synthesize_scores(ds, args.scores, args.seed)
    out = Path(args.out)
    save_dataset(ds, out)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    plan_doc = {
        "family": str(plan.family),
        "n_sites": plan.n_sites,
        "n_holdout": plan.n_holdout,
        "misclass_level": str(plan.misclass_level),
        "correlation_rho": plan.correlation_rho,
        "seed": plan.seed,
    }
    save_truth(true_parameters(plan), truth_path, plan_doc)
    print(f"wrote {out} ({ds.n_records} records) and {truth_path}")
    return 0


def cmd_fit(args) -> int:
    from .mcmc import fit

    cfg = _config(args)
    if args.scenario:
        cfg.scenario = RunConfig(scenario=args.scenario).scenario
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.schedule = _schedule_from(args, cfg.schedule)
    ds = load_dataset(args.data, cfg)
    if ds.training().n_records == 0:
        raise SchemaError("empty training set: no verified, non-holdout records")
    try:
        result = fit(ds, cfg.scenario, cfg.priors, cfg.schedule, cfg.seed,
                     fixed_alpha=cfg.fixed_alpha, n_jobs=args.jobs)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    save_posterior(result, args.out, cfg)
    d = result.diagnostics
    print(f"{cfg.scenario}: {len(d.names)} parameters, max R-hat {d.rhat.max():.3f}, min ESS {d.ess.min():.0f}")
    if not result.converged:
        raise ConvergenceError(f"not converged (max R-hat {d.rhat.max():.3f} >= {d.rhat_gate}); outputs written to {args.out}")
    return 0


def cmd_predict(args) -> int:
    from .predict import fit_reported_intensity, predict_bayes, predict_ml_weighted

    cfg = _config(args)
    targets = None
    if args.method == "bayes":
        if not args.posterior:
            raise SchemaError("--posterior is required for the bayes method")
        post = load_posterior(args.posterior)
        if cfg.true_labels is None:
            cfg.true_labels = post.space.true_labels
            cfg.reported_labels = post.space.reported_labels
        if cfg.x_columns is None and cfg.z_columns is None:
            cfg.x_columns, cfg.z_columns = post.x_names, post.z_names
        ds = load_dataset(args.data, cfg)
        if ds.space != post.space:
            raise DimensionError("dataset state space differs from the posterior's")
        if ds.n_e != post.config.n_e or ds.n_c != post.config.n_c:
            raise DimensionError(
                f"posterior expects {post.config.n_e} x and {post.config.n_c} z covariates; "
                f"data has {ds.n_e} and {ds.n_c}"
            )
        if not post.converged and not args.allow_unconverged:
            raise ConvergenceError("posterior failed the R-hat gate; pass --allow-unconverged to predict anyway")
        if args.all_records:
            targets = np.ones(ds.n_records, dtype=bool)
        mode = "sample" if args.sample_predictions else cfg.prediction_mode
        pred = predict_bayes(post, ds, targets, mode=mode, seed=cfg.seed)
    else:
        ds = load_dataset(args.data, cfg)
        if ds.scores is None:
            raise SchemaError("ml method needs w_<label> score columns in the data")
        if args.all_records:
            targets = np.ones(ds.n_records, dtype=bool)
        try:
            model = fit_reported_intensity(ds)
            pred = predict_ml_weighted(model, ds, targets, mode=args.ml_weighting or cfg.ml_weighting)
        except ValueError as exc:
            raise SchemaError(str(exc)) from None
    save_predictions(pred, ds, args.out)
    flagged = int(np.sum(pred.max_probability < 0.5))
    print(f"wrote {len(pred.records)} predictions to {args.out} ({flagged} flagged for checking)")
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import validation_metrics

    cfg = _config(args)
    preds = load_predictions(args.predictions)
    ds = load_dataset(args.data, cfg)
    index = {sid: i for i, sid in enumerate(ds.site_id)}
    missing = [sid for sid in preds["site_id"] if sid not in index]
    if missing:
        raise SchemaError(f"predicted records not in the data: {missing[:5]}")
    rows = np.array([index[sid] for sid in preds["site_id"]], dtype=np.intp)
    if np.any(ds.verified[rows] < 0):
        bad = ds.site_id[rows[ds.verified[rows] < 0]][:5].tolist()
        raise SchemaError(f"predicted records without a verified label: {bad}")
    try:
        predicted = [ds.space.true_index(lab) for lab in preds["map_label"]]
    except KeyError as exc:
        raise SchemaError(str(exc)) from None
    rep = validation_metrics(ds.verified[rows], np.array(predicted), ds.reported[rows], ds.space)
    doc = write_json("metrics", {**rep.to_json(), "labels": list(ds.space.true_labels)}, args.out)
    print(f"accuracy {doc['accuracy']}, precision {doc['precision']}, recall {doc['recall']}")
    return 0


def cmd_diagnose(args) -> int:
    post = load_posterior(args.posterior)
    d = post.diagnostics
    width = max(len(n) for n in d.names)
    print(f"{'parameter':<{width}}  {'R-hat':>8}  {'ESS':>9}")
    for name, r, e in zip(d.names, d.rhat, d.ess):
        mark = "  *" if r >= d.rhat_gate else ""
        print(f"{name:<{width}}  {r:8.4f}  {e:9.1f}{mark}")
    if post.layout.n_selectors:
        for j, v in enumerate(post.inclusion_probability()):
            print(f"inclusion psi[{j}] = {v:.4f}")
    if not d.converged:
        print(f"not converged: R-hat gate {d.rhat_gate}", file=sys.stderr)
        return ConvergenceError.exit_code
    print("converged")
    return 0


def cmd_experiment(args) -> int:
    from .experiments import DESK_SCHEDULE, format_table, run_precision_gap

    schedule = _schedule_from(args, DESK_SCHEDULE)
    try:
        table = run_precision_gap(
            replicates=args.replicates,
            families=args.families,
            scenarios=args.scenarios,
            seed=args.seed,
            schedule=schedule,
            n_sites=args.sites,
            n_holdout=args.holdout,
            misclass_level=args.misclass,
            n_jobs=args.jobs,
            results_dir=args.results,
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    print(format_table(table))
    print(f"results: {Path(args.results) / table.run_id}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misclass-sdm",
        description="Species distribution models with misclassified reports.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset and its generating parameters")
    p.add_argument("--family", choices=["full", "reduced", "correlation"], default="full")
    p.add_argument("--sites", type=int, default=1000)
    p.add_argument("--holdout", type=int, default=200)
    p.add_argument("--misclass", choices=["baseline", "decrease"], default="baseline")
    p.add_argument("--rho", type=float, default=None, help="x1-z1 correlation (correlation family)")
    p.add_argument("--scores", type=float, default=None, metavar="CONC",
                   help="attach synthetic ML scores with this concentration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--truth", help="truth JSON path (default: <out>.truth.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior of one scenario")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--scenario", help="override the config's scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--cap", action="append", metavar="cap:COL=VALUE", help="cap a covariate column")
    p.add_argument("--out", required=True, help="posterior output directory")
    _add_schedule_args(p)
    p.add_argument("--jobs", type=int, default=None, help="parallel chains (env MISCLASS_SDM_JOBS)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict true states of records")
    p.add_argument("--data", required=True)
    p.add_argument("--posterior", help="posterior directory from fit (bayes method)")
    p.add_argument("--config")
    p.add_argument("--cap", action="append", metavar="cap:COL=VALUE")
    p.add_argument("--method", choices=["bayes", "ml"], default="bayes")
    p.add_argument("--ml-weighting", choices=["conditional", "literal"], default=None)
    p.add_argument("--sample-predictions", action="store_true", help="categorical draws instead of averaging")
    p.add_argument("--all-records", action="store_true", help="score every record, not only the holdout")
    p.add_argument("--allow-unconverged", action="store_true")
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against verified labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--cap", action="append", metavar="cap:COL=VALUE")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="print R-hat and ESS for a posterior")
    p.add_argument("--posterior", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("experiment", help="run the replicate simulation study")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--families", nargs="+", default=["full", "reduced"],
                   choices=["full", "reduced", "correlation"])
    p.add_argument("--scenarios", nargs="+", default=None)
    p.add_argument("--sites", type=int, default=1000)
    p.add_argument("--holdout", type=int, default=200)
    p.add_argument("--misclass", choices=["baseline", "decrease"], default="baseline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--results", default="results", help="results root directory")
    _add_schedule_args(p)
    p.add_argument("--jobs", type=int, default=None, help="parallel replicates (env MISCLASS_SDM_JOBS)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if hasattr(args, "jobs") and args.jobs is None:
            args.jobs = default_jobs()
        return args.func(args)
    except MisclassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputOutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
