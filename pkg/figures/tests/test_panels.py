import shutil
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from platformsurv_figures import (
    FigureSpec,
    SchemaMismatch,
    render_curve_bands,
    render_metrics_panel,
    render_ratio_panel,
)
from platformsurv_figures.cli import main

METRICS_COLUMNS = [
    "method", "rho", "tau", "specification", "regime", "truth", "truth_mc_se",
    "bias", "bias_sq", "variance", "mse", "coverage", "coverage_mc_se",
    "mean_se", "reps", "failures", "flagged",
]


def metrics_frame():
    rng = np.random.default_rng(0)
    rows = []
    for method in ("OR_oc", "OR_ac", "DR_oc", "DR_ac", "naive"):
        for rho in (0.1, 0.3, 0.5, 0.7, 0.9):
            rows.append({
                "method": method, "rho": rho, "tau": 8,
                "specification": "correct", "regime": "deterministic",
                "truth": 0.79, "truth_mc_se": 0.002,
                "bias": rng.normal(0, 0.01), "bias_sq": rng.uniform(0, 1e-4),
                "variance": rng.uniform(0.01, 0.05), "mse": rng.uniform(0.01, 0.05),
                "coverage": rng.uniform(0.92, 0.97), "coverage_mc_se": 0.015,
                "mean_se": 0.15, "reps": 200, "failures": 0, "flagged": False,
            })
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def ratio_frame():
    rows = []
    for regime in ("deterministic", "stochastic"):
        for rho in (0.2, 0.4, 0.6, 0.8):
            for pair in ("DR", "OR"):
                rows.append({
                    "regime": regime, "specification": "correct", "rho": rho,
                    "tau": 8, "pair": pair,
                    "mean_ratio": 1.0 + (0.05 if regime == "stochastic" else 0.0),
                    "mc_se": 0.01, "reps": 200, "failures": 0,
                })
    return pd.DataFrame(rows)


def curves_frame():
    rows = []
    for arm, base in ((1, 0.97), (0, 0.93)):
        s = 1.0
        for t in range(0, 9):
            if t > 0:
                s *= base
            rows.append({"arm": arm, "t": t, "estimate": s,
                         "ci_lo": max(s - 0.05, 0), "ci_hi": min(s + 0.05, 1),
                         "method": "DR_oc"})
    return pd.DataFrame(rows)


class TestMetricsPanel:
    def test_renders_four_panel_grid(self, tmp_path):
        csv = tmp_path / "metrics.csv"
        metrics_frame().to_csv(csv, index=False)
        spec = FigureSpec(input_csv=csv, out=tmp_path / "figs")
        paths = render_metrics_panel(spec)
        assert len(paths) == 1
        assert paths[0].name == "metrics_correct_tau8.svg"
        body = paths[0].read_text()
        assert body.lstrip().startswith("<?xml")
        for method in ("OR_oc", "OR_ac", "DR_oc", "DR_ac", "naive"):
            assert method in body  # legend entry per method

    def test_gap_not_interpolated(self, tmp_path):
        frame = metrics_frame()
        frame.loc[(frame.method == "DR_oc") & (frame.rho == 0.5), "mse"] = np.nan
        csv = tmp_path / "metrics.csv"
        frame.to_csv(csv, index=False)
        paths = render_metrics_panel(FigureSpec(input_csv=csv, out=tmp_path / "f"))
        assert paths[0].exists()  # NaN renders as a gap without error

    def test_schema_mismatch_named(self, tmp_path):
        csv = tmp_path / "bad.csv"
        metrics_frame().drop(columns=["coverage"]).to_csv(csv, index=False)
        with pytest.raises(SchemaMismatch, match="coverage"):
            render_metrics_panel(FigureSpec(input_csv=csv, out=tmp_path))

    def test_empty_csv_rejected_without_image(self, tmp_path):
        csv = tmp_path / "empty.csv"
        metrics_frame().iloc[0:0].to_csv(csv, index=False)
        out = tmp_path / "figs"
        with pytest.raises(SchemaMismatch):
            render_metrics_panel(FigureSpec(input_csv=csv, out=out))
        assert not out.exists()

    def test_deterministic_bytes(self, tmp_path):
        csv = tmp_path / "metrics.csv"
        metrics_frame().to_csv(csv, index=False)
        a = render_metrics_panel(FigureSpec(input_csv=csv, out=tmp_path / "a"))[0]
        b = render_metrics_panel(FigureSpec(input_csv=csv, out=tmp_path / "b"))[0]
        assert a.read_bytes() == b.read_bytes()


class TestRatioPanel:
    def test_two_row_layout_and_reference_line(self, tmp_path):
        csv = tmp_path / "se_ratios.csv"
        ratio_frame().to_csv(csv, index=False)
        paths = render_ratio_panel(FigureSpec(input_csv=csv, out=tmp_path / "figs"))
        assert len(paths) == 1
        body = paths[0].read_text()
        assert "deterministic" in body and "stochastic" in body

    def test_png_output(self, tmp_path):
        csv = tmp_path / "se_ratios.csv"
        ratio_frame().to_csv(csv, index=False)
        paths = render_ratio_panel(FigureSpec(input_csv=csv, out=tmp_path / "f",
                                              fmt="png"))
        assert paths[0].suffix == ".png"
        assert paths[0].stat().st_size > 1000


class TestCurveBands:
    def test_band_plot(self, tmp_path):
        csv = tmp_path / "curves.csv"
        curves_frame().to_csv(csv, index=False)
        paths = render_curve_bands(FigureSpec(input_csv=csv, out=tmp_path / "figs"))
        assert paths[0].name == "curves.svg"
        body = paths[0].read_text()
        assert "treated" in body and "control" in body


class TestCli:
    def test_metrics_subcommand(self, tmp_path, capsys):
        csv = tmp_path / "metrics.csv"
        metrics_frame().to_csv(csv, index=False)
        code = main(["metrics", "--input", str(csv), "--out", str(tmp_path / "f")])
        assert code == 0
        assert "metrics_correct_tau8.svg" in capsys.readouterr().out

    def test_schema_error_exit(self, tmp_path):
        csv = tmp_path / "bad.csv"
        pd.DataFrame({"x": [1]}).to_csv(csv, index=False)
        assert main(["ratio", "--input", str(csv), "--out", str(tmp_path)]) == 3


@pytest.mark.skipif(shutil.which("platformsurv") is None,
                    reason="primary toolkit CLI not installed")
class TestEndToEnd:
    def test_renders_real_study_output(self, tmp_path):
        out = tmp_path / "study"
        subprocess.run(
            ["platformsurv", "study", "--n", "300", "--rho", "0.4", "0.7",
             "--reps", "2", "--tau", "6", "--methods", "DR_oc", "DR_ac",
             "--seed", "1", "--truth-reps", "20000", "--workers", "1",
             "--out", str(out)],
            check=True, capture_output=True,
        )
        paths = render_metrics_panel(
            FigureSpec(input_csv=out / "metrics.csv", out=tmp_path / "figs")
        )
        assert paths and paths[0].exists()
