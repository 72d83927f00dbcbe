import json
from pathlib import Path

import pandas as pd
import pytest

from platformsurv.cli import main


def run(args):
    return main(args)


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run(["simulate", "--n", "800", "--rho", "0.5", "--seed", "21",
                "--out", str(out)])
    assert code == 0
    return out


class TestSimulate:
    def test_writes_dataset_and_manifest(self, sim_dir):
        frame = pd.read_csv(sim_dir / "dataset.csv")
        assert len(frame) == 800
        assert {"id", "entry", "available", "arm", "time", "event", "w"} <= set(frame.columns)
        manifest = json.loads((sim_dir / "dataset.manifest.json").read_text())
        assert manifest["dgp"]["n"] == 800

    def test_identical_invocations_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["simulate", "--n", "300", "--rho", "0.4", "--seed", "5",
                        "--out", str(out)]) == 0
        assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
        assert (a / "dataset.manifest.json").read_text() == (b / "dataset.manifest.json").read_text()


class TestEstimate:
    def test_smoke_dr_oc(self, sim_dir, tmp_path, capsys):
        out = tmp_path / "est"
        code = run([
            "estimate", "--data", str(sim_dir / "dataset.csv"),
            "--covariates", "w", "--n-periods", "12",
            "--tau", "8", "--methods", "DR_oc", "--out", str(out),
        ])
        assert code == 0
        table = pd.read_csv(out / "estimates.csv")
        assert len(table) == 1
        assert table.method.iloc[0] == "DR_oc"
        assert table.se.iloc[0] > 0
        printed = capsys.readouterr().out
        assert "DR_oc" in printed and "estimate" in printed

    def test_missing_file_is_io_or_data_error(self, tmp_path):
        code = run(["estimate", "--data", str(tmp_path / "nope.csv"),
                    "--covariates", "w", "--n-periods", "12",
                    "--out", str(tmp_path / "o")])
        assert code == 5


class TestStudy:
    def test_smoke_and_grid_shape(self, tmp_path):
        out = tmp_path / "study"
        code = run([
            "study", "--n", "500", "--rho", "0.4", "0.6", "--reps", "3",
            "--tau", "6", "--methods", "OR_oc", "DR_oc", "--seed", "3",
            "--bootstrap-b", "8", "--truth-reps", "20000",
            "--workers", "1", "--out", str(out),
        ])
        assert code == 0
        metrics = pd.read_csv(out / "metrics.csv")
        assert len(metrics) == 2 * 2  # rhos x methods
        assert (out / "metrics.manifest.json").exists()
        assert (out / "replicates.csv").exists()

    def test_malformed_config_exits_2_no_outputs(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "study2"
        code = run(["study", "--config", str(bad), "--out", str(out)])
        assert code == 2
        assert not out.exists()


class TestDiagnose:
    def test_on_simulated_config(self, tmp_path):
        out = tmp_path / "diag"
        code = run(["diagnose", "--availability", "stoch", "--seed", "17",
                    "--out", str(out)])
        assert code == 0
        mixture = pd.read_csv(out / "mixture.csv")
        assert "hazard_concurrent" in mixture.columns
        assert (out / "ess.csv").exists()


class TestTruth:
    def test_truth_values(self, tmp_path, capsys):
        out = tmp_path / "truth"
        code = run(["truth", "--rho", "0.5", "--tau", "8",
                    "--truth-reps", "20000", "--out", str(out)])
        assert code == 0
        curves = pd.read_csv(out / "truth_curves.csv")
        assert len(curves) == 9
        assert curves.theta1.iloc[0] == 1.0
        manifest = json.loads((out / "truth_curves.manifest.json").read_text())
        assert manifest["drmst"] == pytest.approx(manifest["drmst_sum"], abs=1e-10)


class TestCurves:
    def test_bands_csv(self, sim_dir, tmp_path):
        out = tmp_path / "curves"
        code = run(["curves", "--data", str(sim_dir / "dataset.csv"),
                    "--covariates", "w", "--n-periods", "12", "--tau", "8",
                    "--out", str(out)])
        assert code == 0
        curves = pd.read_csv(out / "curves.csv")
        assert set(curves.arm.unique()) == {0, 1}
        assert (curves.ci_hi >= curves.ci_lo).all()


class TestParser:
    def test_unknown_subcommand_rejected(self):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 2

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as exc:
            run(["study", "--bogus"])
        assert exc.value.code == 2
