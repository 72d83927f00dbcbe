import numpy as np
import pytest

from platformsurv import DgpConfig, SubjectRecord, TrialDataset, gen_trial
from platformsurv.diagnostics import StratumSpec, ess_heuristic, mixture_decomposition


def small_table(available):
    subjects = []
    rng = np.random.default_rng(0)
    for i, avail in enumerate(available):
        subjects.append(SubjectRecord(
            sid=i, covariates=(float(rng.normal()),), entry=float(rng.normal()),
            available=int(avail), arm=0, time=int(rng.integers(1, 4)),
            event=int(rng.random() < 0.5),
        ))
    return TrialDataset(subjects, ("w",), 4).expand()


class TestMixture:
    def test_identity_holds_exactly(self):
        trial = gen_trial(DgpConfig(n=4000, rho=0.5, availability="stochastic", seed=3))
        report = mixture_decomposition(trial.expand(), StratumSpec(2, 2))
        evaluable = [r for r in report.rows if r.evaluable]
        assert evaluable, "stochastic availability must produce evaluable strata"
        for row in evaluable:
            assert row.discrepancy < 1e-12  # law of total probability is arithmetic

    def test_deterministic_availability_all_non_evaluable(self):
        trial = gen_trial(DgpConfig(n=2000, rho=0.5, seed=4))
        report = mixture_decomposition(trial.expand(), StratumSpec(4, 4))
        assert all(not r.evaluable for r in report.rows)
        assert np.isnan(report.flagged_fraction())

    def test_injection_flags_strata(self):
        base_kw = dict(n=10_000, rho=0.5, availability="stochastic", seed=5)
        clean = gen_trial(DgpConfig(**base_kw))
        violated = gen_trial(DgpConfig(**base_kw, a7_gamma=1.0))
        spec = StratumSpec(3, 3)
        frac_clean = mixture_decomposition(clean.expand(), spec).flagged_fraction()
        frac_violated = mixture_decomposition(violated.expand(), spec).flagged_fraction()
        assert frac_violated > 0.5
        assert frac_violated > frac_clean

    def test_mean_gap_near_zero_without_injection(self):
        gaps_clean, gaps_violated = [], []
        for r in range(20):
            clean = gen_trial(DgpConfig(n=4000, rho=0.5, availability="stochastic",
                                        seed=(70, r)))
            violated = gen_trial(DgpConfig(n=4000, rho=0.5, availability="stochastic",
                                           a7_gamma=1.0, seed=(70, r)))
            for trial, sink in ((clean, gaps_clean), (violated, gaps_violated)):
                report = mixture_decomposition(trial.expand(), StratumSpec(2, 2),
                                               periods=range(1, 7))
                rows = [x for x in report.rows if x.evaluable]
                sink.append(np.mean([
                    x.hazard_concurrent - x.hazard_nonconcurrent for x in rows
                ]))
        # signed gaps average out without injection; injection shifts them up
        assert abs(np.mean(gaps_clean)) < 0.01
        assert np.mean(gaps_violated) > 0.03

    def test_gamma_zero_reduces_to_base_generator(self):
        a = gen_trial(DgpConfig(n=300, rho=0.5, seed=8, a7_gamma=0.0))
        b = gen_trial(DgpConfig(n=300, rho=0.5, seed=8))
        assert a.dataset.subjects == b.dataset.subjects


class TestEss:
    def test_all_concurrent_gives_unit_ratio(self):
        table = small_table(available=np.ones(200))
        report = ess_heuristic(table)
        for row in report.rows:
            if row.c_pool > 0:
                assert row.ratio == pytest.approx(1.0)

    def test_half_concurrent_first_period_ratio(self):
        # at m=1 everyone is at risk: c_pool = 1 - rho/2, c_conc = rho/2, so
        # the ratio at rho = 0.5 is 3 (a third of controls are concurrent)
        trial = gen_trial(DgpConfig(n=40_000, rho=0.5, seed=9))
        report = ess_heuristic(trial.expand(), periods=[1])
        assert report.rows[0].ratio == pytest.approx(3.0, rel=0.05)

    def test_ratio_grows_as_rho_shrinks(self):
        ratios = []
        for rho in (0.7, 0.5, 0.3):
            trial = gen_trial(DgpConfig(n=20_000, rho=rho, seed=10))
            report = ess_heuristic(trial.expand(), periods=[2])
            ratios.append(report.rows[0].ratio)
        assert ratios[0] < ratios[1] < ratios[2]

    def test_infinite_flag_without_concurrent_controls(self):
        table = small_table(available=np.zeros(100))
        report = ess_heuristic(table)
        assert all(r.infinite for r in report.rows if r.c_pool > 0)

    def test_csv_round_trip(self, tmp_path):
        trial = gen_trial(DgpConfig(n=1000, rho=0.5, seed=11))
        report = ess_heuristic(trial.expand())
        path = tmp_path / "ess.csv"
        report.to_csv(path)
        import pandas as pd

        back = pd.read_csv(path)
        assert list(back.columns) == ["period", "c_pool", "c_concurrent", "ratio", "infinite"]
        assert len(back) == len(report.rows)
