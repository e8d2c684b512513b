import json

import numpy as np
import pytest

from misclass_sdm import io
from misclass_sdm.core import StateSpace
from misclass_sdm.errors import DimensionError, InputOutputError, SchemaError
from misclass_sdm.mcmc import ChainSchedule, fit
from misclass_sdm.predict import predict_bayes
from misclass_sdm.simulate import SimulationPlan, simulate_dataset, synthesize_scores, true_parameters

GULL_CFG = io.RunConfig(true_labels=("larus_a", "larus_b"), reported_labels=("larus_a", "larus_b", "larus_sp"),
                        x_columns=("x_temp",), z_columns=("n_reports",))


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.fixture(scope="module")
def sim():
    ds = simulate_dataset(SimulationPlan(family="full", n_sites=120, n_holdout=20, seed=9))
    return synthesize_scores(ds, 5.0, seed=1)


@pytest.fixture(scope="module")
def fitted(sim):
    return fit(sim, "covariate", schedule=ChainSchedule(n_chains=2, n_iters=200, n_burnin=100, thin=2), seed=3)


class TestDatasetCSV:
    def test_round_trip_bit_identical(self, sim, tmp_path):
        path = tmp_path / "d.csv"
        io.save_dataset(sim, path)
        back = io.load_dataset(path)
        assert back.identical_to(sim)
        np.testing.assert_array_equal(back.x, sim.x)
        np.testing.assert_array_equal(back.scores, sim.scores)
        io.save_dataset(back, tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_bytes() == path.read_bytes()

    def test_three_rows(self, tmp_path):
        p = write(tmp_path, "site_id,x_temp,n_reports,verified,reported\n"
                            "a,0.5,3,larus_a,larus_a\nb,1.5,15,larus_b,larus_sp\nc,-1,10,,larus_b\n")
        ds = io.load_dataset(p, GULL_CFG)
        assert ds.n_records == 3
        assert ds.verified.tolist() == [0, 1, -1]
        assert ds.holdout.tolist() == [False, False, True]
        assert ds.z[:, 0].tolist() == [3, 15, 10]

    def test_cap(self, tmp_path):
        p = write(tmp_path, "site_id,x_temp,n_reports,verified,reported\n"
                            "a,0.5,3,larus_a,larus_a\nb,1.5,15,larus_b,larus_sp\nc,-1,10,larus_a,larus_b\n")
        cfg = io.RunConfig(**{**GULL_CFG.__dict__, "caps": ["cap:n_reports=10"]})
        ds = io.load_dataset(p, cfg)
        assert ds.z[:, 0].tolist() == [3, 10, 10]

    def test_unknown_label_named(self, tmp_path):
        p = write(tmp_path, "site_id,x_temp,n_reports,verified,reported\n"
                            "a,0.5,3,larus_a,larus_a\nb,1.5,4,larus_a,larus_x\n")
        with pytest.raises(SchemaError, match=r"line 3.*'larus_x'"):
            io.load_dataset(p, GULL_CFG)

    @pytest.mark.parametrize("text,match", [
        ("site_id,x_temp,n_reports,verified,reported\na,1,2,larus_a\n", "line 2"),
        ("site_id,x_temp,n_reports,verified\na,1,2,larus_a\n", "reported"),
        ("site_id,x_temp,n_reports,verified,reported\na,warm,2,larus_a,larus_a\n", "x_temp"),
        ("site_id,x_temp,n_reports,verified,reported\na,nan,2,larus_a,larus_a\n", "finite"),
        ("site_id,x_temp,n_reports,verified,reported\n", "no records"),
        ("", "empty"),
        ("site_id,x_temp,verified,reported\na,1,larus_a,larus_a\n", "n_reports"),
        ("site_id,x_temp,n_reports,verified,reported,holdout\na,1,2,larus_a,larus_a,yes\n", "holdout"),
        ("site_id,x_temp,n_reports,verified,reported,w_larus_a\na,1,2,larus_a,larus_a,0.5\n", "score columns"),
    ])
    def test_malformed(self, tmp_path, text, match):
        with pytest.raises(SchemaError, match=match):
            io.load_dataset(write(tmp_path, text), GULL_CFG)

    def test_bad_cap(self, tmp_path):
        p = write(tmp_path, "site_id,x_temp,n_reports,verified,reported\na,1,2,larus_a,larus_a\n")
        with pytest.raises(SchemaError):
            io.parse_cap("cap:n_reports")
        cfg = io.RunConfig(**{**GULL_CFG.__dict__, "caps": {"absent": 3}})
        with pytest.raises(SchemaError, match="absent"):
            io.load_dataset(p, cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputOutputError):
            io.load_dataset(tmp_path / "nope.csv")

    def test_inferred_space(self, tmp_path):
        p = write(tmp_path, "site_id,verified,reported\na,b,b\nb,a,other\nc,,a\n")
        ds = io.load_dataset(p)
        assert ds.space == StateSpace(("a", "b"), ("a", "b", "other"))

    def test_score_columns(self, tmp_path):
        p = write(tmp_path, "site_id,x_temp,n_reports,verified,reported,w_larus_b,w_larus_a\n"
                            "a,1,2,larus_a,larus_a,0.2,0.8\n")
        ds = io.load_dataset(p, GULL_CFG)
        np.testing.assert_array_equal(ds.scores, [[0.8, 0.2]])


class TestJSON:
    def test_schema_embedded_and_checked(self, tmp_path):
        doc = io.write_json("metrics", {"accuracy": 1.0, "precision": float("nan"), "recall": 1.0,
                                        "n_validation": 3, "n_mismatched": 0, "crosstab": [[1, 0], [0, 2]]},
                            tmp_path / "m.json")
        assert doc["schema"] == "misclass_sdm/metrics/v1"
        assert doc["precision"] is None
        assert io.read_json(tmp_path / "m.json", "metrics") == doc
        with pytest.raises(SchemaError, match="expected"):
            io.read_json(tmp_path / "m.json", "summary")

    def test_invalid_documents(self, tmp_path):
        with pytest.raises(SchemaError):
            io.write_json("metrics", {"accuracy": 1.0}, tmp_path / "bad.json")
        (tmp_path / "x.json").write_text(json.dumps({"schema": "misclass_sdm/metrics/v9"}))
        with pytest.raises(SchemaError, match="unknown schema"):
            io.read_json(tmp_path / "x.json")
        (tmp_path / "y.json").write_text("{not json")
        with pytest.raises(SchemaError):
            io.read_json(tmp_path / "y.json")

    def test_config_round_trip(self, tmp_path):
        cfg = io.RunConfig(scenario="fixed_intercov", true_labels=("a", "b"), caps=["cap:z=10"],
                           schedule=ChainSchedule(n_iters=200, n_burnin=100), seed=4)
        io.save_config(cfg, tmp_path / "c.json")
        assert io.load_config(tmp_path / "c.json") == cfg

    def test_config_rejects_unknown_keys(self):
        with pytest.raises(SchemaError, match="unknown"):
            io.RunConfig.from_json({"scenario": "constant", "sceanrio": 1})
        with pytest.raises(SchemaError):
            io.RunConfig(scenario="bogus")
        with pytest.raises(SchemaError):
            io.RunConfig.from_json({"schedule": {"thin": 0}})

    def test_truth_round_trip(self, tmp_path):
        truth = true_parameters(SimulationPlan(family="full"))
        io.save_truth(truth, tmp_path / "t.json")
        back = io.load_truth(tmp_path / "t.json")
        np.testing.assert_array_equal(back.beta, truth.beta)
        np.testing.assert_array_equal(back.omega, truth.omega)


class TestPosteriorDir:
    def test_round_trip(self, fitted, sim, tmp_path):
        io.save_posterior(fitted, tmp_path / "post")
        back = io.load_posterior(tmp_path / "post")
        for a, b in zip(fitted.chains, back.chains):
            np.testing.assert_array_equal(a.draws, b.draws)
            np.testing.assert_array_equal(a.psi_draws, b.psi_draws)
            assert a.accept_rates == b.accept_rates
        np.testing.assert_array_equal(fitted.diagnostics.rhat, back.diagnostics.rhat)
        np.testing.assert_array_equal(predict_bayes(fitted, sim).gamma, predict_bayes(back, sim).gamma)
        diag = io.read_json(tmp_path / "post" / "diagnostics.json", "diagnostics")
        assert len(diag["accept_rates"]) == 2
        summary = io.read_json(tmp_path / "post" / "summary.json", "summary")
        assert "psi[0]" in summary["inclusion"]

    def test_byte_identical_rerun(self, sim, tmp_path):
        sch = ChainSchedule(n_chains=2, n_iters=60, n_burnin=30, thin=2)
        for d in ("a", "b"):
            io.save_posterior(fit(sim, "intercept", schedule=sch, seed=8), tmp_path / d)
        for name in ("chain_0.csv", "chain_1.csv", "run.json", "diagnostics.json", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_tampered_trace(self, fitted, tmp_path):
        io.save_posterior(fitted, tmp_path / "p")
        trace = tmp_path / "p" / "chain_0.csv"
        lines = trace.read_text().splitlines()
        lines[0] = lines[0].replace("beta", "gamma", 1)
        trace.write_text("\n".join(lines) + "\n")
        with pytest.raises(DimensionError):
            io.load_posterior(tmp_path / "p")

    def test_predictions_file(self, fitted, sim, tmp_path):
        pred = predict_bayes(fitted, sim)
        io.save_predictions(pred, sim, tmp_path / "pred.csv")
        back = io.load_predictions(tmp_path / "pred.csv")
        np.testing.assert_array_equal(back["gamma"], pred.gamma)
        assert back["labels"] == list(sim.space.true_labels)
        header = (tmp_path / "pred.csv").read_text().splitlines()[0].split(",")
        assert header[-3:] == ["map_label", "max_probability", "flag"]


def test_default_jobs(monkeypatch):
    monkeypatch.delenv("MISCLASS_SDM_JOBS", raising=False)
    assert io.default_jobs() == 1
    monkeypatch.setenv("MISCLASS_SDM_JOBS", "3")
    assert io.default_jobs() == 3
    monkeypatch.setenv("MISCLASS_SDM_JOBS", "many")
    with pytest.raises(SchemaError):
        io.default_jobs()
