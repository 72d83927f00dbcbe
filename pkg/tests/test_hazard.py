import math

import numpy as np
import pytest
from scipy.special import expit

from platformsurv import (
    ConfigError,
    DataError,
    ModelSpec,
    SeparationError,
    SingularDesignError,
    SubjectRecord,
    expand_person_period,
    fit_hazard,
    fit_logistic,
    known_propensity,
)
from platformsurv.dgp import DgpConfig, gen_trial
from platformsurv.hazard import HazardFit


def subj(sid, time, event, arm=0, available=1, entry=0.0, w=0.0):
    return SubjectRecord(sid=sid, covariates=(w,), entry=entry, available=available,
                         arm=arm, time=time, event=event)


class TestFitLogistic:
    def test_two_group_closed_form(self):
        # 25/100 events at x=0 and 50/100 at x=1: saturated MLE = empirical log-odds
        x = np.concatenate([np.zeros(100), np.ones(100)])
        y = np.concatenate([np.repeat([1, 0], [25, 75]), np.repeat([1, 0], [50, 50])])
        X = np.column_stack([np.ones(200), x])
        coef = fit_logistic(X, y)
        assert coef[0] == pytest.approx(math.log(1 / 3), abs=1e-8)
        assert coef[1] == pytest.approx(math.log(3), abs=1e-8)

    def test_intercept_only_balanced(self):
        X = np.ones((100, 1))
        y = np.repeat([1.0, 0.0], 50)
        coef = fit_logistic(X, y)
        assert coef[0] == pytest.approx(0.0, abs=1e-10)

    def test_all_zero_responses_is_separation(self):
        X = np.ones((50, 1))
        with pytest.raises(SeparationError):
            fit_logistic(X, np.zeros(50))

    def test_perfect_separation_detected(self):
        x = np.concatenate([-np.abs(np.random.default_rng(0).normal(size=50)) - 0.1,
                            np.abs(np.random.default_rng(1).normal(size=50)) + 0.1])
        y = (x > 0).astype(float)
        X = np.column_stack([np.ones(100), x])
        with pytest.raises(SeparationError):
            fit_logistic(X, y)

    def test_rank_deficiency_names_columns(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=80)
        X = np.column_stack([np.ones(80), x, 2 * x])
        y = (rng.random(80) < expit(x)).astype(float)
        with pytest.raises(SingularDesignError) as excinfo:
            fit_logistic(X, y, column_names=("intercept", "x", "x_doubled"))
        assert "x_doubled" in str(excinfo.value) or "x" in str(excinfo.value)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=300)
        y = (rng.random(300) < expit(0.5 + x)).astype(float)
        X = np.column_stack([np.ones(300), x])
        coef = fit_logistic(X, y)
        perm = rng.permutation(300)
        coef_perm = fit_logistic(X[perm], y[perm])
        assert np.allclose(coef, coef_perm, atol=1e-8)

    def test_rescaling_covariance(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=300)
        y = (rng.random(300) < expit(0.5 - 0.8 * x)).astype(float)
        X = np.column_stack([np.ones(300), x])
        coef = fit_logistic(X, y)
        X_scaled = np.column_stack([np.ones(300), 10.0 * x])
        coef_scaled = fit_logistic(X_scaled, y)
        assert coef_scaled[1] * 10.0 == pytest.approx(coef[1], abs=1e-8)
        assert coef_scaled[0] == pytest.approx(coef[0], abs=1e-8)


class TestPredict:
    def test_zero_coefficients_give_half(self):
        fit = HazardFit(spec=ModelSpec(), feature_names=("entry", "w"),
                        coef=np.zeros((1, 3)), periods=(1,), mode="by_period")
        out = fit.predict(1, {"entry": np.array([0.3, -2.0]), "w": np.array([5.0, 0.0])})
        assert np.allclose(out, 0.5)

    def test_generator_coefficients(self):
        # full generator model: intercept -3, arm -1.05, entry 0.2, w 1.5, period 0.3
        fit = HazardFit(
            spec=ModelSpec(covariates=("arm", "entry", "w", "period"), time="covariate"),
            feature_names=("arm", "entry", "w", "period"),
            coef=np.array([-3.0, -1.05, 0.2, 1.5, 0.3]),
            periods=(1, 2, 3),
            mode="covariate",
        )
        out = fit.predict(1, {"arm": np.zeros(1), "entry": np.zeros(1), "w": np.zeros(1)})
        assert out[0] == pytest.approx(expit(-2.7), abs=1e-12)
        assert out[0] == pytest.approx(0.06297, abs=5e-6)

    def test_monotone_in_positive_coefficient(self):
        fit = HazardFit(spec=ModelSpec(covariates=("w",)), feature_names=("w",),
                        coef=np.array([[0.0, 2.0]]), periods=(1,), mode="by_period")
        w = np.linspace(-2, 2, 9)
        out = fit.predict(1, {"w": w})
        assert np.all(np.diff(out) > 0)

    def test_unfitted_period_rejected(self):
        fit = HazardFit(spec=ModelSpec(), feature_names=("w",),
                        coef=np.array([[0.0, 1.0]]), periods=(1,), mode="by_period")
        with pytest.raises(DataError):
            fit.predict(2, {"w": np.zeros(3)})


class TestFitHazard:
    def test_concurrent_only_uses_concurrent_rows(self):
        rng = np.random.default_rng(8)
        subjects = []
        for i in range(400):
            available = int(rng.random() < 0.5)
            w = float(rng.normal())
            time = int(rng.integers(1, 5))
            subjects.append(subj(i, time=time, event=int(rng.random() < 0.5),
                                 available=available, w=w))
        table = expand_person_period(subjects, 4)
        spec = ModelSpec(response="event", conditioning="concurrent", arm=0,
                         covariates=("w",))
        fit_all = fit_hazard(table, spec)
        concurrent_only = [s for s in subjects if s.available == 1]
        table_conc = expand_person_period(concurrent_only, 4)
        fit_conc = fit_hazard(table_conc, spec)
        assert np.allclose(fit_all.coef, fit_conc.coef, atol=1e-10)

    def test_saturated_fit_matches_empirical_proportions(self):
        # one binary covariate, saturated design: fitted hazards are cell proportions
        subjects = []
        sid = 0
        for w, n_events, n_total in ((0.0, 12, 40), (1.0, 21, 30)):
            for k in range(n_total):
                subjects.append(subj(sid, time=1, event=int(k < n_events), w=w))
                sid += 1
        table = expand_person_period(subjects, 1)
        fit = fit_hazard(table, ModelSpec(response="event", arm=0, covariates=("w",)),
                         periods=[1])
        pred = fit.predict(1, {"w": np.array([0.0, 1.0])})
        assert pred[0] == pytest.approx(12 / 40, abs=1e-10)
        assert pred[1] == pytest.approx(21 / 30, abs=1e-10)

    def test_naive_saturated_in_time_matches_risk_set_proportions(self):
        rng = np.random.default_rng(21)
        subjects = [subj(i, time=int(rng.integers(1, 5)), event=int(rng.random() < 0.6),
                         w=float(rng.normal())) for i in range(300)]
        table = expand_person_period(subjects, 4)
        fit = fit_hazard(
            table,
            ModelSpec(response="event", conditioning="concurrent", arm=0, covariates=()),
            periods=range(1, 5),
        )
        for m in range(1, 5):
            rows = (table.period == m)
            prop = table.event[rows].mean()
            if 0 < prop < 1:
                assert fit.predict(m, {}, n_rows=1)[0] == pytest.approx(prop, abs=1e-9)

    def test_deterministic_availability_separates(self):
        rng = np.random.default_rng(9)
        subjects = []
        for i in range(200):
            entry = float(rng.normal())
            subjects.append(SubjectRecord(
                sid=i, covariates=(0.0,), entry=entry, available=int(entry < 0.0),
                arm=0, time=1, event=1,
            ))
        table = expand_person_period(subjects, 2)
        with pytest.raises(SeparationError):
            fit_hazard(table, ModelSpec(response="availability", conditioning="pooled",
                                        covariates=("entry",)))

    def test_empty_risk_set_falls_back_to_time_covariate(self):
        subjects = (
            [subj(i, time=1, event=1) for i in range(5)]
            + [subj(5 + i, time=2, event=1) for i in range(5)]
            + [subj(10 + i, time=3, event=0) for i in range(5)]
        )
        table = expand_person_period(subjects, 3)
        fit = fit_hazard(table, ModelSpec(response="event", arm=0, covariates=()),
                         periods=range(1, 4))
        assert fit.fallback
        assert 3 in fit.fallback_periods
        assert fit.mode == "covariate"
        assert 0.0 < fit.predict(3, {}, n_rows=1)[0] < 1.0

    def test_recovers_generator_coefficients(self):
        # per-period control-arm fits estimate (-3 + 0.3 m, 0.2, 1.5); ~30
        # events per early-period fit leaves visible finite-sample MLE bias,
        # so the replication count must keep 3*SE above it
        reps = 150
        periods = [1, 2, 3, 4, 5, 6]
        collected = {m: [] for m in periods}
        for r in range(reps):
            trial = gen_trial(DgpConfig(n=1500, rho=0.6, seed=(1000, r)))
            table = trial.expand()
            fit = fit_hazard(
                table,
                ModelSpec(response="event", conditioning="concurrent", arm=0,
                          covariates=("entry", "w")),
                periods=periods,
            )
            for i, m in enumerate(periods):
                collected[m].append(fit.coef[i])
        for m in periods:
            coefs = np.array(collected[m])
            mean = coefs.mean(axis=0)
            se = coefs.std(axis=0, ddof=1) / np.sqrt(reps)
            truth = np.array([-3.0 + 0.3 * m, 0.2, 1.5])
            assert np.all(np.abs(mean - truth) < 3 * se + 1e-9), (
                f"period {m}: mean {mean}, truth {truth}, se {se}"
            )


class TestKnownPropensity:
    def test_half(self):
        prop = known_propensity(0.5)
        assert np.allclose(prop.prob(1, 3), 0.5)
        assert np.allclose(prop.prob(0, 3), 0.5)
        assert np.allclose(prop.prob(1, 3) + prop.prob(0, 3), 1.0)

    def test_quarter(self):
        prop = known_propensity(0.25)
        assert np.allclose(prop.prob(0, 2), 0.75)

    def test_bounds(self):
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ConfigError):
                known_propensity(bad)


class TestModelSpec:
    def test_json_round_trip(self):
        spec = ModelSpec(response="censor", conditioning="pooled", arm=0,
                         covariates=("entry", "w"), time="by_period")
        assert ModelSpec.from_json(spec.to_json()) == spec

    def test_misspecified_drops_entry_and_substitutes(self):
        spec = ModelSpec(covariates=("entry", "w"))
        mis = spec.misspecified({"w": "w_star"})
        assert mis.covariates == ("w_star",)
        assert "entry" not in mis.covariates

    def test_naive_spec(self):
        spec = ModelSpec.naive(arm=1)
        assert spec.covariates == ("period",)
        assert spec.time == "covariate"
        assert spec.conditioning == "concurrent"
