import json
import subprocess
import sys

import pytest

from misclass_sdm.cli import main

FAST = ["--chains", "2", "--iters", "400", "--burnin", "200", "--thin", "2"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--family", "full", "--sites", "200", "--holdout", "40", "--seed", "1",
                 "--scores", "10", "--out", str(d / "sim.csv")]) == 0
    return d


def test_simulate_outputs(workdir):
    lines = (workdir / "sim.csv").read_text().splitlines()
    assert len(lines) == 201
    assert lines[0].startswith("site_id,")
    truth = json.loads((workdir / "sim.truth.json").read_text())
    assert truth["schema"] == "misclass_sdm/truth/v1"


def test_full_workflow(workdir, capsys):
    d = workdir
    code = main(["fit", "--data", str(d / "sim.csv"), "--scenario", "intercept", "--seed", "2",
                 "--out", str(d / "post"), *FAST])
    assert code in (0, 5)
    for name in ("chain_0.csv", "chain_1.csv", "run.json", "diagnostics.json", "summary.json"):
        assert (d / "post" / name).exists()
    assert main(["predict", "--data", str(d / "sim.csv"), "--posterior", str(d / "post"),
                 "--allow-unconverged", "--out", str(d / "pred.csv")]) == 0
    assert len((d / "pred.csv").read_text().splitlines()) == 41
    assert main(["evaluate", "--predictions", str(d / "pred.csv"), "--data", str(d / "sim.csv"),
                 "--out", str(d / "metrics.json")]) == 0
    metrics = json.loads((d / "metrics.json").read_text())
    assert metrics["n_validation"] == 40
    assert 0 <= metrics["accuracy"] <= 1
    assert main(["diagnose", "--posterior", str(d / "post")]) == code
    out = capsys.readouterr().out
    assert "R-hat" in out


def test_ml_predict(workdir):
    assert main(["predict", "--method", "ml", "--data", str(workdir / "sim.csv"),
                 "--out", str(workdir / "ml.csv")]) == 0
    assert main(["evaluate", "--predictions", str(workdir / "ml.csv"), "--data", str(workdir / "sim.csv"),
                 "--out", str(workdir / "ml.json")]) == 0


def test_empty_training_set_is_schema_error(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("site_id,x_1,verified,reported,holdout\na,0.1,s1,s1,1\nb,0.2,s2,s2,1\n")
    assert main(["fit", "--data", str(data), "--scenario", "intercept", "--out", str(tmp_path / "p"), *FAST]) == 4


def test_error_classes(tmp_path, workdir):
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "p")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("site_id,x_1,verified,reported\na,oops,s1,s1\n")
    assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "p")]) == 4
    # posterior fitted on one covariate layout, data with another
    other = tmp_path / "other.csv"
    other.write_text("site_id,x_1,verified,reported,holdout\na,0.1,s1,s1,1\n")
    assert main(["predict", "--data", str(other), "--posterior", str(workdir / "post"),
                 "--out", str(tmp_path / "x.csv")]) in (4, 6)
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == 2


def test_unconverged_fit_exit_code(workdir, tmp_path):
    code = main(["fit", "--data", str(workdir / "sim.csv"), "--scenario", "covariate",
                 "--out", str(tmp_path / "p"), "--chains", "2", "--iters", "6", "--burnin", "2", "--thin", "1"])
    assert code == 5
    assert (tmp_path / "p" / "diagnostics.json").exists()
    assert main(["predict", "--data", str(workdir / "sim.csv"), "--posterior", str(tmp_path / "p"),
                 "--out", str(tmp_path / "x.csv")]) == 5


def test_rerun_byte_identical(workdir, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--family", "reduced", "--sites", "50", "--holdout", "10", "--seed", "4",
                     "--out", str(tmp_path / d / "s.csv")]) == 0
        main(["fit", "--data", str(tmp_path / d / "s.csv"), "--scenario", "constant", "--seed", "1",
              "--out", str(tmp_path / d / "post"), "--chains", "2", "--iters", "60", "--burnin", "30"])
    for rel in ("s.csv", "s.truth.json", "post/chain_0.csv", "post/summary.json", "post/diagnostics.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_help_lists_exit_codes():
    out = subprocess.run([sys.executable, "-m", "misclass_sdm.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "exit codes" in out.stdout
    assert "R-hat gate failed" in out.stdout
