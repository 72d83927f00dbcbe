"""Replication-level checks of estimator calibration on the generator.

These run moderate Monte Carlo loops (seconds to a minute); the full-scale
criteria live in test_acceptance.py.
"""

import numpy as np
import pytest

from platformsurv import DgpConfig, estimate_or, gen_trial, truth_oracle
from platformsurv.estimators import (
    bootstrap_se_multi,
    delta_ratio,
    eif_theta,
    fit_nuisances,
    pointwise_bands,
    _or_point_estimates,
)
from platformsurv.harness import ScenarioConfig, run_study


class TestMeanRecovery:
    def test_or_oc_mean_matches_oracle(self):
        truth = truth_oracle(DgpConfig(rho=0.5), tau=8, reps=400_000)
        ests = []
        for r in range(200):
            trial = gen_trial(DgpConfig(n=1500, rho=0.5, seed=(800, r)))
            ests.append(estimate_or(trial.dataset, 8, "oc", adjust=("entry", "w"),
                                    compute_se=False).estimate)
        ests = np.array(ests)
        mc_se = ests.std(ddof=1) / np.sqrt(len(ests))
        assert abs(ests.mean() - truth.drmst) < 3 * mc_se


class TestNullEffect:
    def test_all_methods_centered_at_zero(self):
        cfg_kw = dict(n=1500, rho=0.5, event_coef=(-3.0, 0.0, 0.2, 1.5, 0.3))
        collected = {m: [] for m in ("oc", "ac", "naive")}
        dr = {"DR_oc": [], "DR_ac": []}
        from platformsurv.estimators import estimate_dr_pair

        for r in range(200):
            trial = gen_trial(DgpConfig(**cfg_kw, seed=(810, r)))
            table = trial.expand()
            points = _or_point_estimates(table, 8, ["oc", "ac", "naive"], ("entry", "w"))
            for k, v in points.items():
                collected[k].append(v)
            pair = estimate_dr_pair(table, 8, adjust=("entry", "w"))
            for k, rep in pair.items():
                dr[k].append(rep.estimate)
        for name, values in {**collected, **dr}.items():
            values = np.array(values)
            mc_se = values.std(ddof=1) / np.sqrt(len(values))
            assert abs(values.mean()) < 3 * mc_se, (
                f"{name}: mean {values.mean():.4f}, mc_se {mc_se:.4f}"
            )


class TestBootstrapCalibration:
    def test_bootstrap_se_tracks_sampling_sd(self):
        # empirical SD of the OR-oc estimate across simulation replications
        ests = []
        for r in range(500):
            trial = gen_trial(DgpConfig(n=1500, rho=0.5, seed=(820, r)))
            table = trial.expand()
            ests.append(_or_point_estimates(table, 8, ["oc"], ("entry", "w"))["oc"])
        empirical_sd = float(np.std(ests, ddof=1))
        for r in (0, 1, 2):
            trial = gen_trial(DgpConfig(n=1500, rho=0.5, seed=(820, r)))
            table = trial.expand()
            se, _ = bootstrap_se_multi(table, 8, ["oc"], ("entry", "w"),
                                       n_boot=200, seed=(821, r))["oc"]
            assert abs(se - empirical_sd) < 0.25 * empirical_sd, (
                f"rep {r}: bootstrap {se:.4f} vs empirical {empirical_sd:.4f}"
            )


class TestPointwiseBandCoverage:
    def test_theta_band_coverage_at_t4(self):
        truth = truth_oracle(DgpConfig(rho=0.5), tau=8, reps=400_000)
        hits = {1: 0, 0: 0}
        reps = 500
        for r in range(reps):
            trial = gen_trial(DgpConfig(n=1500, rho=0.5, seed=(830, r)))
            table = trial.expand()
            nuis, _ = fit_nuisances(table, 8, variant="oc", adjust=("entry", "w"))
            theta1, theta0, phi1, phi0 = eif_theta(table, nuis, 8, variant="oc")
            for arm, theta, phi in ((1, theta1, phi1), (0, theta0, phi0)):
                band = pointwise_bands(theta, phi)
                target = truth.theta1[4] if arm == 1 else truth.theta0[4]
                if band[4, 0] <= target <= band[4, 1]:
                    hits[arm] += 1
        for arm in (1, 0):
            coverage = hits[arm] / reps
            assert 0.92 <= coverage <= 0.98, f"arm {arm}: band coverage {coverage:.3f}"


class TestRecoveryRatioCoverage:
    def test_delta_method_ci_covers_oracle_ratio(self):
        truth = truth_oracle(DgpConfig(rho=0.5), tau=8, reps=400_000)
        target = truth.contrast(6, "recovery-ratio")
        hits = 0
        reps = 500
        for r in range(reps):
            trial = gen_trial(DgpConfig(n=1500, rho=0.5, seed=(840, r)))
            table = trial.expand()
            nuis, _ = fit_nuisances(table, 8, variant="oc", adjust=("entry", "w"))
            theta1, theta0, phi1, phi0 = eif_theta(table, nuis, 8, variant="oc")
            report = delta_ratio(theta1[6], theta0[6], phi1[:, 6], phi0[:, 6],
                                 t=6, kind="recovery-ratio", method="DR_oc")
            if report.ci[0] <= target <= report.ci[1]:
                hits += 1
        coverage = hits / reps
        assert 0.92 <= coverage <= 0.98, f"recovery-ratio CI coverage {coverage:.3f}"
