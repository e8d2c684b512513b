"""CSV and JSON serialisation of datasets, run configs, posteriors and results.

Floats are written with ``repr`` (shortest round-trip form) so a write and
re-read reproduces every value bit for bit.  Every JSON document carries a
``"schema"`` identifier and is validated against that schema on write and
on read.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema
import numpy as np

from .core import ParameterSet, StateSpace
from .dataset import MISSING, Dataset
from .diagnostics import diagnose
from .errors import DimensionError, InputOutputError, SchemaError
from .mcmc import ChainOutput, ChainSchedule, FitResult, PriorSpec, chain_param_names
from .predict import ML_MODES, PREDICTION_MODES, PosteriorPrediction
from .scenarios import ParameterLayout, Scenario, ScenarioConfig

SCHEMA_PREFIX = "misclass_sdm"
FLAG_THRESHOLD = 0.5

# -- JSON schemas ----------------------------------------------------------

_num = {"type": ["number", "null"]}
_num_map = {"type": "object", "additionalProperties": _num}


def _doc(kind: str, props: dict, required: list[str]) -> dict:
    return {
        "type": "object",
        "properties": {"schema": {"const": f"{SCHEMA_PREFIX}/{kind}/v1"}, **props},
        "required": ["schema", *required],
    }


_labels = {"type": "array", "items": {"type": "string"}, "minItems": 1}

SCHEMAS = {
    "config": _doc(
        "config",
        {
            "scenario": {"type": "string"},
            "true_labels": {"type": ["array", "null"], "items": {"type": "string"}},
            "reported_labels": {"type": ["array", "null"], "items": {"type": "string"}},
            "x_columns": {"type": ["array", "null"], "items": {"type": "string"}},
            "z_columns": {"type": ["array", "null"], "items": {"type": "string"}},
            "priors": {"type": "object"},
            "schedule": {"type": "object"},
            "seed": {"type": "integer"},
            "ml_weighting": {"enum": list(ML_MODES)},
            "prediction_mode": {"enum": list(PREDICTION_MODES)},
            "caps": {"type": "object", "additionalProperties": {"type": "number"}},
            "fixed_alpha": _num,
        },
        ["scenario"],
    ),
    "truth": _doc(
        "truth",
        {"parameters": {"type": "object", "required": ["beta"]}, "plan": {"type": "object"}},
        ["parameters"],
    ),
    "run": _doc(
        "run",
        {
            "config": {"type": "object"},
            "scenario": {"type": "string"},
            "n_e": {"type": "integer"},
            "n_c": {"type": "integer"},
            "true_labels": _labels,
            "reported_labels": _labels,
            "x_names": {"type": "array"},
            "z_names": {"type": "array"},
            "n_chains": {"type": "integer", "minimum": 1},
            "accept_rates": {"type": "array"},
            "package_version": {"type": "string"},
        },
        ["scenario", "n_e", "n_c", "true_labels", "reported_labels", "n_chains"],
    ),
    "diagnostics": _doc(
        "diagnostics",
        {
            "rhat": _num_map,
            "ess": _num_map,
            "rhat_gate": {"type": "number"},
            "converged": {"type": "boolean"},
            "accept_rates": {"type": "array", "items": _num_map},
        },
        ["rhat", "ess", "rhat_gate", "converged"],
    ),
    "summary": _doc(
        "summary",
        {
            "parameters": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "properties": {"median": _num, "lower": _num, "upper": _num},
                    "required": ["median", "lower", "upper"],
                },
            },
            "inclusion": _num_map,
            "n_draws": {"type": "integer"},
            "converged": {"type": "boolean"},
        },
        ["parameters", "inclusion", "n_draws"],
    ),
    "metrics": _doc(
        "metrics",
        {
            "accuracy": _num,
            "precision": _num,
            "recall": _num,
            "n_validation": {"type": "integer"},
            "n_mismatched": {"type": "integer"},
            "crosstab": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
            "labels": _labels,
        },
        ["accuracy", "precision", "recall", "n_validation", "n_mismatched", "crosstab"],
    ),
    "experiment": _doc(
        "experiment",
        {
            "run_id": {"type": "string"},
            "settings": {"type": "object"},
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["family", "scenario", "n_replicates", "n_nonconverged", "n_failed"],
                },
            },
            "replicates": {"type": "array"},
        },
        ["run_id", "rows", "replicates"],
    ),
}


def schema_id(kind: str) -> str:
    return f"{SCHEMA_PREFIX}/{kind}/v1"


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (Scenario,)):
        return obj.value
    return obj


def validate_document(doc: dict) -> str:
    """Check ``doc`` against the schema it names; return the kind."""
    sid = doc.get("schema") if isinstance(doc, dict) else None
    if not isinstance(sid, str) or not sid.startswith(SCHEMA_PREFIX + "/"):
        raise SchemaError("document has no recognised schema identifier")
    kind = sid.split("/")[1]
    if kind not in SCHEMAS or sid != schema_id(kind):
        raise SchemaError(f"unknown schema {sid!r}")
    try:
        jsonschema.validate(doc, SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{sid}: {exc.message}") from None
    return kind


def write_json(kind: str, payload: dict, path) -> dict:
    doc = {"schema": schema_id(kind), **_clean(payload)}
    validate_document(doc)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from exc
    return doc


def read_json(path, kind: str | None = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputOutputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from None
    got = validate_document(doc)
    if kind is not None and got != kind:
        raise SchemaError(f"{path} holds a {got!r} document, expected {kind!r}")
    return doc


# -- run configuration -------------------------------------------------------


def parse_cap(spec: str) -> tuple[str, float]:
    """``"cap:<col>=<value>"`` (the ``cap:`` prefix is optional) -> (col, value)."""
    body = spec[4:] if spec.startswith("cap:") else spec
    col, sep, val = body.partition("=")
    if not sep or not col:
        raise SchemaError(f"cap must look like cap:<column>=<value>, got {spec!r}")
    try:
        value = float(val)
    except ValueError:
        raise SchemaError(f"cap value for {col!r} is not a number: {val!r}") from None
    if not math.isfinite(value):
        raise SchemaError(f"cap value for {col!r} must be finite")
    return col, value


@dataclass
class RunConfig:
    """Everything a fit/predict run needs besides the data file."""

    scenario: str = "covariate"
    true_labels: tuple[str, ...] | None = None
    reported_labels: tuple[str, ...] | None = None
    x_columns: tuple[str, ...] | None = None
    z_columns: tuple[str, ...] | None = None
    priors: PriorSpec = field(default_factory=PriorSpec)
    schedule: ChainSchedule = field(default_factory=ChainSchedule)
    seed: int = 0
    ml_weighting: str = "conditional"
    prediction_mode: str = "mean"
    caps: dict = field(default_factory=dict)
    fixed_alpha: float | None = None

    def __post_init__(self):
        try:
            self.scenario = Scenario.parse(self.scenario).value
        except ValueError as exc:
            raise SchemaError(str(exc)) from None
        if self.ml_weighting not in ML_MODES:
            raise SchemaError(f"ml_weighting must be one of {ML_MODES}")
        if self.prediction_mode not in PREDICTION_MODES:
            raise SchemaError(f"prediction_mode must be one of {PREDICTION_MODES}")
        for name in ("true_labels", "reported_labels", "x_columns", "z_columns"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, tuple(str(v) for v in val))
        caps = self.caps
        if isinstance(caps, (list, tuple)):
            caps = dict(parse_cap(c) for c in caps)
        self.caps = {str(k): float(v) for k, v in caps.items()}

    def space(self) -> StateSpace | None:
        if self.true_labels is None:
            return None
        reported = self.reported_labels if self.reported_labels is not None else self.true_labels
        return StateSpace(self.true_labels, reported)

    def to_json(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["priors"] = asdict(self.priors)
        out["schedule"] = asdict(self.schedule)
        return _clean(out)

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        d = {k: v for k, v in doc.items() if k != "schema"}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "priors" in d:
                d["priors"] = PriorSpec(**d["priors"])
            if "schedule" in d:
                d["schedule"] = ChainSchedule(**d["schedule"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad prior or schedule settings: {exc}") from None
        return cls(**d)


def load_config(path) -> RunConfig:
    return RunConfig.from_json(read_json(path, "config"))


def save_config(config: RunConfig, path) -> None:
    write_json("config", config.to_json(), path)


# -- dataset CSV -------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` as CSV: ids, covariates, labels, holdout, scores."""
    space = dataset.space
    header = ["site_id", *dataset.x_names, *dataset.z_names, "verified", "reported", "holdout"]
    if dataset.scores is not None:
        header += [f"w_{lab}" for lab in space.true_labels]
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(dataset.n_records):
                v = dataset.verified[i]
                row = [dataset.site_id[i]]
                row += [_fmt(a) for a in dataset.x[i]]
                row += [_fmt(a) for a in dataset.z[i]]
                row += ["" if v == MISSING else space.true_labels[v], space.reported_labels[dataset.reported[i]]]
                row.append("1" if dataset.holdout[i] else "0")
                if dataset.scores is not None:
                    row += [_fmt(a) for a in dataset.scores[i]]
                w.writerow(row)
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from exc


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputOutputError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError:
        raise SchemaError(f"{path} is not UTF-8 text") from None
    rows = [r for r in rows if r]
    if not rows:
        raise SchemaError(f"{path} is empty (no header)")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise SchemaError(f"duplicate column names in {path}")
    body = rows[1:]
    for line, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise SchemaError(f"line {line}: expected {len(header)} fields, found {len(r)}")
    return header, body


def _numeric(body, idx, col) -> np.ndarray:
    out = np.empty(len(body))
    for i, r in enumerate(body):
        try:
            out[i] = float(r[idx])
        except ValueError:
            raise SchemaError(f"line {i + 2}: column {col!r} is not numeric: {r[idx]!r}") from None
        if not math.isfinite(out[i]):
            raise SchemaError(f"line {i + 2}: column {col!r} is not finite")
    return out


def infer_space(verified: list[str], reported: list[str]) -> StateSpace:
    """True labels sorted from the verified column; reported labels are
    those followed by any extra reported labels, sorted."""
    true = sorted({v for v in verified if v})
    if not true:
        raise SchemaError("no verified labels to infer the true states from; give labels in the config")
    extra = sorted(set(reported) - set(true))
    return StateSpace(tuple(true), tuple(true) + tuple(extra))


def load_dataset(path, config: RunConfig | None = None) -> Dataset:
    """Parse a dataset CSV.

    Required columns are ``site_id`` and ``reported``.  ``verified`` may be
    absent or have empty cells (unverified records).  Covariates are the
    configured columns or, by default, every ``x_*`` and ``z_*`` column.
    ``w_<true label>`` columns, when present, hold ML scores.  Without a
    ``holdout`` column the unverified records become the holdout set.
    """
    config = config or RunConfig()
    header, body = _read_rows(path)
    col = {h: i for i, h in enumerate(header)}
    for req in ("site_id", "reported"):
        if req not in col:
            raise SchemaError(f"missing required column {req!r}")
    x_cols = list(config.x_columns) if config.x_columns is not None else [h for h in header if h.startswith("x_")]
    z_cols = list(config.z_columns) if config.z_columns is not None else [h for h in header if h.startswith("z_")]
    for c in x_cols + z_cols:
        if c not in col:
            raise SchemaError(f"configured covariate column {c!r} not in file")
    for c in config.caps:
        if c not in col or c not in x_cols + z_cols:
            raise SchemaError(f"cap column {c!r} is not a covariate column of the file")
    if not body:
        raise SchemaError(f"{path} has a header but no records")

    site_id = np.array([r[col["site_id"]].strip() for r in body])
    reported_raw = [r[col["reported"]].strip() for r in body]
    verified_raw = [r[col["verified"]].strip() for r in body] if "verified" in col else [""] * len(body)

    def covariates(names):
        if not names:
            return np.zeros((len(body), 0))
        mat = np.column_stack([_numeric(body, col[c], c) for c in names])
        for j, c in enumerate(names):
            if c in config.caps:
                mat[:, j] = np.minimum(mat[:, j], config.caps[c])
        return mat

    x = covariates(x_cols)
    z = covariates(z_cols)

    space = config.space() or infer_space(verified_raw, reported_raw)
    bad = []
    for i, (v, y) in enumerate(zip(verified_raw, reported_raw)):
        if not y:
            bad.append(f"line {i + 2}: empty reported label")
        elif y not in space.reported_labels:
            bad.append(f"line {i + 2}: unknown reported label {y!r}")
        if v and v not in space.true_labels:
            bad.append(f"line {i + 2}: unknown verified label {v!r}")
    if bad:
        more = f" (and {len(bad) - 10} more)" if len(bad) > 10 else ""
        raise SchemaError("label errors: " + "; ".join(bad[:10]) + more)
    verified = np.array([space.true_index(v) if v else MISSING for v in verified_raw], dtype=np.intp)
    reported = np.array([space.reported_index(y) for y in reported_raw], dtype=np.intp)

    if "holdout" in col:
        raw = [r[col["holdout"]].strip() for r in body]
        if any(h not in ("0", "1") for h in raw):
            line = next(i + 2 for i, h in enumerate(raw) if h not in ("0", "1"))
            raise SchemaError(f"line {line}: holdout must be 0 or 1")
        holdout = np.array([h == "1" for h in raw])
    else:
        holdout = verified == MISSING

    score_cols = [h for h in header if h.startswith("w_")]
    scores = None
    if score_cols:
        expected = [f"w_{lab}" for lab in space.true_labels]
        if sorted(score_cols) != sorted(expected):
            raise SchemaError(f"score columns {score_cols} do not match true labels (expected {expected})")
        scores = np.column_stack([_numeric(body, col[c], c) for c in expected])

    try:
        return Dataset(
            space=space,
            site_id=site_id,
            x=x,
            z=z,
            verified=verified,
            reported=reported,
            holdout=holdout,
            scores=scores,
            x_names=tuple(x_cols),
            z_names=tuple(z_cols),
            meta={"path": str(path)},
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


# -- posterior directory -----------------------------------------------------


def save_truth(truth: ParameterSet, path, plan: dict | None = None) -> None:
    write_json("truth", {"parameters": truth.to_json(), "plan": plan or {}}, path)


def load_truth(path) -> ParameterSet:
    return ParameterSet.from_json(read_json(path, "truth")["parameters"])


def save_trace(chain: ChainOutput, path) -> None:
    n_sel = chain.psi_draws.shape[1]
    header = ["draw", *chain.param_names, *[f"psi[{j}]" for j in range(n_sel)], "log_posterior"]
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in range(chain.n_retained):
                w.writerow(
                    [r]
                    + [_fmt(v) for v in chain.draws[r]]
                    + [str(int(v)) for v in chain.psi_draws[r]]
                    + [_fmt(chain.log_posterior[r])]
                )
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from exc


def load_trace(path, names: tuple[str, ...], n_sel: int) -> ChainOutput:
    header, body = _read_rows(path)
    expected = ["draw", *names, *[f"psi[{j}]" for j in range(n_sel)], "log_posterior"]
    if header != expected:
        raise DimensionError(f"{path}: trace columns do not match the run description")
    if not body:
        raise SchemaError(f"{path} has no draws")
    arr = np.array([[float(v) for v in r] for r in body])
    p = len(names)
    return ChainOutput(
        param_names=tuple(names),
        draws=arr[:, 1 : 1 + p],
        psi_draws=arr[:, 1 + p : 1 + p + n_sel].astype(np.int8),
        log_posterior=arr[:, -1],
        accept_rates={},
    )


def posterior_summary(result: FitResult) -> dict:
    pooled = result.pooled()
    lo, med, hi = np.quantile(pooled, [0.025, 0.5, 0.975], axis=0)
    params = {
        name: {"median": med[i], "lower": lo[i], "upper": hi[i]} for i, name in enumerate(result.param_names)
    }
    inclusion = {}
    if result.layout.n_selectors:
        incl = result.inclusion_probability()
        inclusion = {f"psi[{j}]": float(v) for j, v in enumerate(incl)}
    return {"parameters": params, "inclusion": inclusion, "n_draws": int(pooled.shape[0]),
            "converged": result.converged}


def save_posterior(result: FitResult, out_dir, config: RunConfig | None = None) -> None:
    """Write traces, run description, diagnostics and summary to ``out_dir``."""
    from . import __version__

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputOutputError(f"cannot create {out}: {exc}") from exc
    for c, chain in enumerate(result.chains):
        save_trace(chain, out / f"chain_{c}.csv")
    cfg = config.to_json() if config is not None else {}
    write_json(
        "run",
        {
            "config": cfg,
            "scenario": result.config.kind.value,
            "n_e": result.config.n_e,
            "n_c": result.config.n_c,
            "true_labels": list(result.space.true_labels),
            "reported_labels": list(result.space.reported_labels),
            "x_names": list(result.x_names),
            "z_names": list(result.z_names),
            "n_chains": len(result.chains),
            "accept_rates": [c.accept_rates for c in result.chains],
            "package_version": __version__,
            "priors": asdict(result.priors),
            "schedule": asdict(result.schedule),
            "seed": result.seed,
        },
        out / "run.json",
    )
    diag = {**result.diagnostics.to_json(), "accept_rates": [c.accept_rates for c in result.chains]}
    write_json("diagnostics", diag, out / "diagnostics.json")
    write_json("summary", posterior_summary(result), out / "summary.json")


def load_posterior(out_dir) -> FitResult:
    out = Path(out_dir)
    run = read_json(out / "run.json", "run")
    space = StateSpace(tuple(run["true_labels"]), tuple(run["reported_labels"]))
    config = ScenarioConfig(Scenario.parse(run["scenario"]), n_e=run["n_e"], n_c=run["n_c"])
    try:
        layout = ParameterLayout(config, space)
    except ValueError as exc:
        raise SchemaError(f"run description is inconsistent: {exc}") from None
    names = chain_param_names(layout)
    chains = [load_trace(out / f"chain_{c}.csv", names, layout.n_selectors) for c in range(run["n_chains"])]
    if len({c.n_retained for c in chains}) != 1:
        raise DimensionError("chains have different numbers of draws")
    for c, rates in zip(chains, run.get("accept_rates", [])):
        c.accept_rates = rates
    sch = run.get("schedule", {})
    schedule = ChainSchedule(**sch) if sch else ChainSchedule()
    diag = diagnose([c.draws for c in chains], names, schedule.rhat_gate)
    return FitResult(
        config=config,
        space=space,
        layout=layout,
        chains=chains,
        diagnostics=diag,
        priors=PriorSpec(**run.get("priors", {})),
        schedule=schedule,
        seed=int(run.get("seed", 0)),
        x_names=tuple(run.get("x_names", ())),
        z_names=tuple(run.get("z_names", ())),
    )


# -- predictions -------------------------------------------------------------


def save_predictions(pred: PosteriorPrediction, dataset: Dataset, path) -> None:
    space = dataset.space
    header = ["site_id", "reported", *[f"gamma_{lab}" for lab in space.true_labels],
              "map_label", "max_probability", "flag"]
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r, i in enumerate(pred.records):
                top = float(pred.gamma[r].max())
                w.writerow(
                    [dataset.site_id[i], space.reported_labels[dataset.reported[i]]]
                    + [_fmt(g) for g in pred.gamma[r]]
                    + [space.true_labels[pred.map_state[r]], _fmt(top), "1" if top < FLAG_THRESHOLD else "0"]
                )
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from exc


def load_predictions(path) -> dict:
    """Read a predictions CSV into ``{"site_id", "reported", "map_label", "gamma"}``."""
    header, body = _read_rows(path)
    for req in ("site_id", "reported", "map_label"):
        if req not in header:
            raise SchemaError(f"predictions file lacks column {req!r}")
    col = {h: i for i, h in enumerate(header)}
    gcols = [h for h in header if h.startswith("gamma_")]
    return {
        "site_id": [r[col["site_id"]] for r in body],
        "reported": [r[col["reported"]] for r in body],
        "map_label": [r[col["map_label"]] for r in body],
        "labels": [h[len("gamma_") :] for h in gcols],
        "gamma": np.array([[float(r[col[h]]) for h in gcols] for r in body]).reshape(len(body), len(gcols)),
    }


def default_jobs() -> int:
    """Worker count from ``MISCLASS_SDM_JOBS`` (default 1)."""
    raw = os.environ.get("MISCLASS_SDM_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise SchemaError(f"MISCLASS_SDM_JOBS must be an integer, got {raw!r}") from None
