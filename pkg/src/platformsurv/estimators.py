"""Restricted-mean survival estimators for the concurrent population.

Five estimators are provided. The outcome-regression (OR) family plugs fitted
event hazards into the product-limit representation and averages over
concurrent subjects; its variants differ in the control-arm fitting sample
(concurrent-only "oc", pooled "ac", or the unadjusted time-index-only "naive").
The doubly robust (DR) family adds the influence-function augmentation built
from event hazard, censoring hazard, propensity, and availability models; the
"ac" variant pools the control-arm nuisances and reweights the control
augmentation by the availability probability ratio.

Standard errors: OR via subject-level bootstrap (resampled subjects are
re-expanded to person-period form); DR via the sample variance of the
estimated influence values. Pointwise survival-curve bands and delta-method
ratio contrasts come from the same per-time influence values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from ._rng import SeedLike, make_generator
from .curves import SurvivalMatrix, ThetaCurve, drmst, product_limit, theta_plugin
from .data import PersonPeriodTable, TrialDataset
from .errors import (
    BootstrapInstabilityError,
    ConfigError,
    DataError,
    EmptyPopulationError,
    PlatformSurvError,
    PoolingDiagnosticWarning,
)
from .hazard import (
    FittedAvailability,
    HazardFit,
    KnownPropensity,
    LogisticAvailability,
    ModelSpec,
    fit_hazard,
    fit_subject_model,
    known_propensity,
)

OR_VARIANTS = ("oc", "ac", "naive")
DR_VARIANTS = ("oc", "ac")
METHODS = ("OR_oc", "OR_ac", "DR_oc", "DR_ac", "naive")

DENOMINATOR_FLOOR = 1e-6
POOLED_CENSOR_WARN = 0.05
Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# Reports


@dataclass
class EstimateReport:
    """Point estimate, uncertainty, and provenance for one estimand x method."""

    estimand: str
    method: str
    estimate: float
    se: float
    ci: tuple[float, float]
    p_value: float
    se_source: str
    tau: int
    n: int
    n_concurrent: int
    null_value: float = 0.0
    influence: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand,
            "method": self.method,
            "estimate": self.estimate,
            "se": self.se,
            "ci_lo": self.ci[0],
            "ci_hi": self.ci[1],
            "p_value": self.p_value,
            "se_source": self.se_source,
            "tau": self.tau,
            "n": self.n,
            "n_concurrent": self.n_concurrent,
            "null_value": self.null_value,
            **{k: v for k, v in self.meta.items() if np.isscalar(v)},
        }


def _wald(estimate: float, se: float, null: float) -> tuple[tuple[float, float], float]:
    ci = (estimate - Z95 * se, estimate + Z95 * se)
    if se == 0.0:
        p = 0.0 if estimate != null else 1.0
    else:
        p = 2.0 * float(norm.sf(abs(estimate - null) / se))
    return ci, p


# ---------------------------------------------------------------------------
# Shared fitting plumbing


def _as_table(data) -> PersonPeriodTable:
    if isinstance(data, TrialDataset):
        return data.expand()
    if isinstance(data, PersonPeriodTable):
        return data
    raise DataError(f"expected TrialDataset or PersonPeriodTable, got {type(data).__name__}")


def default_adjustment(table: PersonPeriodTable) -> tuple[str, ...]:
    """Entry time plus every baseline covariate except synthetic noise columns."""
    covs = tuple(c for c in table.covariate_names if c != "w_star")
    return ("entry",) + covs


def _check_arms(table: PersonPeriodTable) -> None:
    conc = table.subject_available == 1
    if not conc.any():
        raise EmptyPopulationError("no concurrent subjects")
    for arm in (0, 1):
        if not (conc & (table.subject_arm == arm)).any():
            raise EmptyPopulationError(f"no concurrent subjects in arm {arm}")


def _event_fits(
    table: PersonPeriodTable,
    tau: int,
    variant: str,
    adjust: Sequence[str],
    horizon: int | None = None,
) -> dict[str, HazardFit]:
    """Event-hazard fits needed by an OR/DR variant, through period ``horizon``."""
    horizon = horizon if horizon is not None else tau - 1
    periods = range(1, horizon + 1)
    fits = {}
    if variant == "naive":
        fits["event1"] = fit_hazard(table, ModelSpec.naive(arm=1), periods=periods)
        fits["event0"] = fit_hazard(table, ModelSpec.naive(arm=0), periods=periods)
        return fits
    fits["event1"] = fit_hazard(
        table,
        ModelSpec(response="event", conditioning="concurrent", arm=1, covariates=tuple(adjust)),
        periods=periods,
    )
    conditioning = "pooled" if variant == "ac" else "concurrent"
    fits["event0"] = fit_hazard(
        table,
        ModelSpec(response="event", conditioning=conditioning, arm=0, covariates=tuple(adjust)),
        periods=periods,
    )
    return fits


def _predict_masked(
    fit: HazardFit,
    table: PersonPeriodTable,
    periods,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Hazard predictions per subject and period, restricted to ``mask``.

    Fits conditioned on the concurrent population are only ever consumed at
    concurrent subjects (every term using them carries the concurrency or
    active-arm indicator), so rows outside the mask are left at hazard zero
    rather than extrapolated outside the fitted support.
    """
    periods = list(periods)
    if mask is None:
        return fit.predict_matrix(table.subject_column, periods, n_rows=table.n_subjects)
    out = np.zeros((table.n_subjects, len(periods)))
    rows = np.nonzero(mask)[0]
    if rows.size:
        out[rows] = fit.predict_matrix(
            lambda name: table.subject_column(name)[rows], periods, n_rows=rows.size
        )
    return out


def _survival_from_fit(
    fit: HazardFit,
    table: PersonPeriodTable,
    horizon: int,
    mask: np.ndarray | None = None,
) -> SurvivalMatrix:
    hmat = _predict_masked(fit, table, range(1, horizon + 1), mask)
    return product_limit(hmat, horizon=horizon, lag=0, kind="event")


def survival_curves(
    data,
    tau: int,
    variant: str = "oc",
    adjust: Sequence[str] | None = None,
    horizon: int | None = None,
) -> tuple[ThetaCurve, ThetaCurve]:
    """Plug-in concurrent survival curves (treated, control) through ``horizon``."""
    table = _as_table(data)
    _check_arms(table)
    if variant not in OR_VARIANTS:
        raise ConfigError(f"variant must be one of {OR_VARIANTS}, got {variant!r}")
    horizon = horizon if horizon is not None else tau
    adjust = tuple(adjust) if adjust is not None else default_adjustment(table)
    fits = _event_fits(table, tau, variant, adjust, horizon=horizon)
    conc = table.subject_available == 1
    s1 = _survival_from_fit(fits["event1"], table, horizon, mask=conc)
    mask0 = None if variant == "ac" else conc
    s0 = _survival_from_fit(fits["event0"], table, horizon, mask=mask0)
    label = f"OR_{variant}" if variant != "naive" else "naive"
    return (
        theta_plugin(s1, conc, arm=1, provenance=label),
        theta_plugin(s0, conc, arm=0, provenance=label),
    )


def _or_point_estimates(
    table: PersonPeriodTable,
    tau: int,
    variants: Sequence[str],
    adjust: Sequence[str],
    warm: dict | None = None,
    coef_out: dict | None = None,
) -> dict[str, float]:
    """dRMST point estimates for several OR variants, sharing fits.

    ``warm`` optionally maps fit keys to starting coefficients (used by the
    bootstrap, which refits resamples of the table the warm fits came from);
    ``coef_out`` collects fitted coefficients under the same keys.
    """
    conc = table.subject_available == 1
    out = {}
    fits_cache: dict[tuple, SurvivalMatrix] = {}

    def surv(spec: ModelSpec) -> SurvivalMatrix:
        key = (spec.response, spec.conditioning, spec.arm, spec.covariates, spec.time)
        if key not in fits_cache:
            init = warm.get(key) if warm else None
            fit = fit_hazard(table, spec, periods=range(1, tau), init=init)
            if coef_out is not None and fit.mode == "by_period":
                coef_out[key] = fit.coef
            mask = conc if spec.conditioning == "concurrent" else None
            fits_cache[key] = _survival_from_fit(fit, table, tau - 1, mask=mask)
        return fits_cache[key]

    for variant in variants:
        if variant == "naive":
            s1 = surv(ModelSpec.naive(arm=1))
            s0 = surv(ModelSpec.naive(arm=0))
        else:
            s1 = surv(ModelSpec(response="event", conditioning="concurrent", arm=1,
                                covariates=tuple(adjust)))
            cond = "pooled" if variant == "ac" else "concurrent"
            s0 = surv(ModelSpec(response="event", conditioning=cond, arm=0,
                                covariates=tuple(adjust)))
        theta1 = theta_plugin(s1, conc, arm=1)
        theta0 = theta_plugin(s0, conc, arm=0)
        out[variant] = drmst(theta1, theta0, tau)
    return out


# ---------------------------------------------------------------------------
# Bootstrap


def bootstrap_se(
    data,
    estimator: Callable[[PersonPeriodTable], float],
    n_boot: int = 200,
    seed: SeedLike = 0,
) -> tuple[float, int]:
    """Subject-level bootstrap standard error of ``estimator``.

    Each replicate draws subjects with replacement and re-expands them to
    person-period form before re-estimation. Replicates where the estimator
    raises a toolkit error are dropped and counted; more than 20% failures is
    reported as instability. Returns (se, n_failed).
    """
    if n_boot < 2:
        raise ConfigError(f"need at least 2 bootstrap replicates, got {n_boot}")
    table = _as_table(data)
    rng = make_generator(seed, 47)
    estimates = []
    failures = 0
    for _ in range(n_boot):
        idx = rng.integers(0, table.n_subjects, size=table.n_subjects)
        try:
            estimates.append(float(estimator(resample_table(table, idx))))
        except PlatformSurvError:
            failures += 1
    if failures > 0.2 * n_boot:
        raise BootstrapInstabilityError(
            f"{failures}/{n_boot} bootstrap replicates failed"
        )
    return float(np.std(estimates, ddof=1)), failures


def resample_table(table: PersonPeriodTable, indices: np.ndarray) -> PersonPeriodTable:
    """Person-period table for a subject-level resample (row-block gather)."""
    indices = np.asarray(indices, dtype=np.int64)
    counts = table.subject_time[indices]
    row_start = np.zeros(len(indices) + 1, dtype=np.int64)
    np.cumsum(counts, out=row_start[1:])
    starts = table.row_start[indices]
    rows = np.repeat(starts, counts) + (np.arange(row_start[-1]) - np.repeat(row_start[:-1], counts))
    return PersonPeriodTable(
        subject_index=np.repeat(np.arange(len(indices)), counts),
        period=table.period[rows],
        at_risk_event=table.at_risk_event[rows],
        at_risk_censor=table.at_risk_censor[rows],
        event=table.event[rows],
        censored=table.censored[rows],
        arm=table.arm[rows],
        available=table.available[rows],
        entry=table.entry[rows],
        covariates=table.covariates[rows],
        covariate_names=table.covariate_names,
        n_subjects=len(indices),
        n_periods=table.n_periods,
        row_start=row_start,
        subject_arm=table.subject_arm[indices],
        subject_available=table.subject_available[indices],
        subject_entry=table.subject_entry[indices],
        subject_covariates=table.subject_covariates[indices],
        subject_time=table.subject_time[indices],
        subject_event=table.subject_event[indices],
    )


def bootstrap_se_multi(
    table: PersonPeriodTable,
    tau: int,
    variants: Sequence[str],
    adjust: Sequence[str],
    n_boot: int = 200,
    seed: SeedLike = 0,
) -> dict[str, tuple[float, int]]:
    """Bootstrap SEs for several OR variants from shared resamples."""
    if n_boot < 2:
        raise ConfigError(f"need at least 2 bootstrap replicates, got {n_boot}")
    rng = make_generator(seed, 47)
    estimates: dict[str, list[float]] = {v: [] for v in variants}
    failures = {v: 0 for v in variants}
    warm: dict = {}
    try:
        _or_point_estimates(table, tau, variants, adjust, coef_out=warm)
    except PlatformSurvError:
        warm = {}
    for _ in range(n_boot):
        idx = rng.integers(0, table.n_subjects, size=table.n_subjects)
        tbl = resample_table(table, idx)
        try:
            points = _or_point_estimates(tbl, tau, variants, adjust, warm=warm)
        except PlatformSurvError:
            points = {}
            for v in variants:
                try:
                    points[v] = _or_point_estimates(tbl, tau, [v], adjust, warm=warm)[v]
                except PlatformSurvError:
                    failures[v] += 1
        for v, est in points.items():
            estimates[v].append(est)
    out = {}
    for v in variants:
        if failures[v] > 0.2 * n_boot:
            raise BootstrapInstabilityError(
                f"{failures[v]}/{n_boot} bootstrap replicates failed for OR variant {v!r}"
            )
        out[v] = (float(np.std(estimates[v], ddof=1)), failures[v])
    return out


def estimate_or(
    data,
    tau: int,
    variant: str = "oc",
    adjust: Sequence[str] | None = None,
    n_boot: int = 200,
    seed: SeedLike = 0,
    compute_se: bool = True,
) -> EstimateReport:
    """Outcome-regression dRMST estimate with bootstrap uncertainty."""
    if variant not in OR_VARIANTS:
        raise ConfigError(f"variant must be one of {OR_VARIANTS}, got {variant!r}")
    table = _as_table(data)
    _check_arms(table)
    adjust = tuple(adjust) if adjust is not None else default_adjustment(table)
    estimate = _or_point_estimates(table, tau, [variant], adjust)[variant]
    if compute_se:
        se, n_failed = bootstrap_se_multi(table, tau, [variant], adjust, n_boot, seed)[variant]
    else:
        se, n_failed = float("nan"), 0
    ci, p = _wald(estimate, se, 0.0) if compute_se else ((float("nan"), float("nan")), float("nan"))
    method = "naive" if variant == "naive" else f"OR_{variant}"
    return EstimateReport(
        estimand=f"drmst(tau={tau})",
        method=method,
        estimate=float(estimate),
        se=se,
        ci=ci,
        p_value=p,
        se_source="bootstrap",
        tau=tau,
        n=table.n_subjects,
        n_concurrent=int((table.subject_available == 1).sum()),
        null_value=0.0,
        meta={"adjust": tuple(adjust), "n_boot": n_boot if compute_se else 0,
              "boot_failures": n_failed, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Influence-function machinery


@dataclass
class NuisanceValues:
    """Per-subject nuisance evaluations on the estimation grid.

    Survival matrices hold columns t = 0..tau-1; hazard matrices hold columns
    k = 1..tau-1. Control-arm quantities come from pooled fits in the "ac"
    variant and concurrent-only fits in "oc".
    """

    s1: np.ndarray
    s0: np.ndarray
    g1: np.ndarray
    g0: np.ndarray
    h1: np.ndarray
    h0: np.ndarray
    pi1: np.ndarray
    pi0: np.ndarray
    avail_prob: np.ndarray | None = None


@dataclass
class EifTerms:
    """Per-subject influence decomposition for the dRMST parameter."""

    alpha: np.ndarray
    beta: np.ndarray
    plug: np.ndarray
    aug1: np.ndarray
    aug0: np.ndarray
    uncentered: np.ndarray
    phi: np.ndarray
    estimate: float
    truncated: int


def _augmentation(table, nuis, tau, arm, floor):
    """Summed augmentation term for one arm; returns (per-subject sum, truncations).

    For each period k the summand is
        1(A=arm) * 1(T > k-1) * (dN_k - h_k) / (G(k-1) S(k) pi) * sum_{t>=k} S(t)
    accumulated over k = 1..tau-1, matching the restricted-mean sum over t.
    """
    ks = np.arange(1, tau)
    t_obs = table.subject_time[:, None]
    d = table.subject_event[:, None]
    in_arm = (table.subject_arm == arm).astype(float)[:, None]
    at_risk = (t_obs > ks[None, :] - 1).astype(float)
    dN = ((t_obs == ks[None, :]) & (d == 1)).astype(float)

    s = nuis.s1 if arm == 1 else nuis.s0
    g = nuis.g1 if arm == 1 else nuis.g0
    h = nuis.h1 if arm == 1 else nuis.h0
    pi = nuis.pi1 if arm == 1 else nuis.pi0

    s_at_k = s[:, 1:tau]
    g_at_km1 = g[:, 0:tau - 1]
    den = g_at_km1 * s_at_k * pi[:, None]
    contributing = (in_arm * at_risk) > 0
    truncated = int((contributing & (den < floor)).sum())
    den = np.maximum(den, floor)

    ratio = in_arm * at_risk * (dN - h) / den
    cum = np.cumsum(ratio, axis=1)
    aug = (s[:, 1:tau] * cum).sum(axis=1)
    return aug, truncated


def compute_eif(
    table: PersonPeriodTable,
    nuis: NuisanceValues,
    tau: int,
    variant: str = "oc",
    floor: float = DENOMINATOR_FLOOR,
) -> EifTerms:
    """Influence terms for the dRMST over t = 1..tau-1.

    The centered value phi subtracts alpha times the point estimate, so
    non-concurrent subjects carry zero influence in the concurrent-only
    variant. The sample mean of phi is zero by construction.
    """
    if variant not in DR_VARIANTS:
        raise ConfigError(f"variant must be one of {DR_VARIANTS}, got {variant!r}")
    n = table.n_subjects
    v = (table.subject_available == 1).astype(float)
    p_conc = v.mean()
    if p_conc == 0:
        raise EmptyPopulationError("no concurrent subjects")
    alpha = v / p_conc
    if variant == "ac" and nuis.avail_prob is not None:
        beta = np.asarray(nuis.avail_prob, dtype=float) / p_conc
    else:
        beta = alpha

    plug = alpha * (nuis.s1[:, 1:tau] - nuis.s0[:, 1:tau]).sum(axis=1)
    aug1, trunc1 = _augmentation(table, nuis, tau, arm=1, floor=floor)
    aug0, trunc0 = _augmentation(table, nuis, tau, arm=0, floor=floor)
    w0 = beta if variant == "ac" else alpha
    uncentered = plug - alpha * aug1 + w0 * aug0
    estimate = float(uncentered.mean())
    phi = uncentered - alpha * estimate
    return EifTerms(
        alpha=alpha,
        beta=beta,
        plug=plug,
        aug1=aug1,
        aug0=aug0,
        uncentered=uncentered,
        phi=phi,
        estimate=estimate,
        truncated=trunc1 + trunc0,
    )


def eif_theta(
    table: PersonPeriodTable,
    nuis: NuisanceValues,
    tau: int,
    variant: str = "oc",
    floor: float = DENOMINATOR_FLOOR,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-time influence values for the two survival curves.

    Returns (theta1, theta0, phi1, phi0): estimates of theta(a, t) for
    t = 0..tau-1 and centered per-subject influence matrices of matching shape.
    """
    n = table.n_subjects
    v = (table.subject_available == 1).astype(float)
    p_conc = v.mean()
    if p_conc == 0:
        raise EmptyPopulationError("no concurrent subjects")
    alpha = v / p_conc
    if variant == "ac" and nuis.avail_prob is not None:
        beta = np.asarray(nuis.avail_prob, dtype=float) / p_conc
    else:
        beta = alpha

    out = []
    for arm, weight in ((1, alpha), (0, beta if variant == "ac" else alpha)):
        s = nuis.s1 if arm == 1 else nuis.s0
        g = nuis.g1 if arm == 1 else nuis.g0
        h = nuis.h1 if arm == 1 else nuis.h0
        pi = nuis.pi1 if arm == 1 else nuis.pi0
        ks = np.arange(1, tau)
        t_obs = table.subject_time[:, None]
        d = table.subject_event[:, None]
        in_arm = (table.subject_arm == arm).astype(float)[:, None]
        at_risk = (t_obs > ks[None, :] - 1).astype(float)
        dN = ((t_obs == ks[None, :]) & (d == 1)).astype(float)
        den = np.maximum(g[:, 0:tau - 1] * s[:, 1:tau] * pi[:, None], floor)
        cum = np.cumsum(in_arm * at_risk * (dN - h) / den, axis=1)

        theta = np.empty(tau)
        phi = np.zeros((n, tau))
        theta[0] = 1.0
        for t in range(1, tau):
            unc = alpha * s[:, t] - weight * s[:, t] * cum[:, t - 1]
            theta[t] = float(unc.mean())
            phi[:, t] = unc - alpha * theta[t]
        out.append((theta, phi))
    (theta1, phi1), (theta0, phi0) = out
    return theta1, theta0, phi1, phi0


# ---------------------------------------------------------------------------
# Nuisance assembly and the DR estimators


def _availability_probabilities(table, availability, treat_prob):
    """Resolve the availability argument into per-subject P(V=1|X), or None."""
    if availability is None:
        return None
    if isinstance(availability, str) and availability == "fit":
        fit = fit_subject_model(
            table, ModelSpec(response="availability", conditioning="pooled",
                             covariates=("entry",))
        )
        return FittedAvailability(fit).prob(table.subject_entry)
    if isinstance(availability, (LogisticAvailability, FittedAvailability)):
        return availability.prob(table.subject_entry)
    if callable(availability):
        return np.asarray(availability(table.subject_entry), dtype=float)
    arr = np.asarray(availability, dtype=float)
    if arr.shape != (table.n_subjects,):
        raise DataError("availability array must have one probability per subject")
    return arr


def fit_nuisances(
    table: PersonPeriodTable,
    tau: int,
    variant: str = "oc",
    adjust: Sequence[str] | None = None,
    censor_adjust: Sequence[str] | None = None,
    propensity: KnownPropensity | str | None = None,
    availability=None,
    _shared_treated: tuple | None = None,
) -> tuple[NuisanceValues, dict]:
    """Fit and evaluate every nuisance the DR estimator needs.

    ``propensity`` defaults to the known randomization probability 1/2;
    pass "fit" to estimate it, or a KnownPropensity with another value.
    ``availability`` is None for the deterministic design (the availability
    weight then reduces to the concurrency indicator), an evaluator/array of
    P(V=1 | X) in the stochastic design, or "fit" to estimate it.
    """
    if variant not in DR_VARIANTS:
        raise ConfigError(f"variant must be one of {DR_VARIANTS}, got {variant!r}")
    adjust = tuple(adjust) if adjust is not None else default_adjustment(table)
    censor_adjust = tuple(censor_adjust) if censor_adjust is not None else adjust
    meta: dict = {}

    horizon = tau - 1
    cols = table.subject_column
    n = table.n_subjects
    conc = table.subject_available == 1
    mask0 = None if variant == "ac" else conc
    cond0 = "pooled" if variant == "ac" else "concurrent"
    censor_periods = list(range(1, tau - 1))  # G(k-1), k <= tau-1

    event1 = censor1 = None
    if _shared_treated is not None:
        s1, g1, h1 = _shared_treated
    else:
        event1 = fit_hazard(
            table, ModelSpec(response="event", conditioning="concurrent", arm=1,
                             covariates=adjust), periods=range(1, tau),
        )
        h1 = _predict_masked(event1, table, range(1, tau), mask=conc)
        s1 = product_limit(h1, horizon=horizon, lag=0).values
        if censor_periods:
            censor1 = fit_hazard(
                table, ModelSpec(response="censor", conditioning="concurrent", arm=1,
                                 covariates=censor_adjust), periods=censor_periods,
            )
            gh1 = _predict_masked(censor1, table, censor_periods, mask=conc)
        else:
            gh1 = np.zeros((n, 0))
        g1 = product_limit(gh1, horizon=horizon, lag=1, kind="censoring").values

    event0 = fit_hazard(
        table, ModelSpec(response="event", conditioning=cond0, arm=0,
                         covariates=adjust), periods=range(1, tau),
    )
    h0 = _predict_masked(event0, table, range(1, tau), mask=mask0)
    s0 = product_limit(h0, horizon=horizon, lag=0).values

    if censor_periods:
        censor0 = fit_hazard(
            table, ModelSpec(response="censor", conditioning=cond0, arm=0,
                             covariates=censor_adjust), periods=censor_periods,
        )
        gh0 = _predict_masked(censor0, table, censor_periods, mask=mask0)
    else:
        censor0 = None
        gh0 = np.zeros((n, 0))
    g0 = product_limit(gh0, horizon=horizon, lag=1, kind="censoring").values

    if variant == "ac" and censor_periods:
        censor0_conc = fit_hazard(
            table, ModelSpec(response="censor", conditioning="concurrent", arm=0,
                             covariates=censor_adjust), periods=censor_periods,
        )
        gap = float(np.max(np.abs(
            _predict_masked(censor0_conc, table, censor_periods, mask=conc)
            - np.where(conc[:, None], gh0, 0.0)
        )))
        meta["pooled_censor_gap"] = gap
        if gap > POOLED_CENSOR_WARN:
            meta["pooled_censor_warning"] = True
            warnings.warn(
                f"pooled and concurrent control censoring hazards differ by up to "
                f"{gap:.3f}; pooling the censoring mechanism may be inappropriate",
                PoolingDiagnosticWarning,
                stacklevel=2,
            )

    avail_prob = _availability_probabilities(table, availability, None)

    if propensity is None:
        propensity = known_propensity(0.5)
    if isinstance(propensity, str) and propensity == "fit":
        fit = fit_subject_model(
            table, ModelSpec(response="treatment", conditioning="concurrent",
                             covariates=adjust)
        )
        pi1 = fit.predict(fit.periods[0], cols, n_rows=n)
    else:
        pi1 = propensity.prob(1, n)
    if variant == "ac":
        base = avail_prob if avail_prob is not None else (table.subject_available == 1).astype(float)
        pi0 = 1.0 - pi1 * base
    else:
        pi0 = 1.0 - pi1

    nuis = NuisanceValues(
        s1=s1, s0=s0, g1=g1, g0=g0, h1=h1, h0=h0, pi1=pi1, pi0=pi0, avail_prob=avail_prob
    )
    meta["fallbacks"] = {
        name: fit.fallback_periods
        for name, fit in (("event1", event1), ("event0", event0),
                          ("censor1", censor1), ("censor0", censor0))
        if fit is not None and fit.fallback
    }
    return nuis, meta


def _dr_report_from_terms(table, terms, tau, variant, meta) -> EstimateReport:
    n = table.n_subjects
    se = float(np.std(terms.phi, ddof=1) / math.sqrt(n))
    ci, p = _wald(terms.estimate, se, 0.0)
    return EstimateReport(
        estimand=f"drmst(tau={tau})",
        method=f"DR_{variant}",
        estimate=terms.estimate,
        se=se,
        ci=ci,
        p_value=p,
        se_source="eif",
        tau=tau,
        n=n,
        n_concurrent=int((table.subject_available == 1).sum()),
        null_value=0.0,
        influence=terms.phi,
        meta={**meta, "truncated": terms.truncated},
    )


def estimate_dr(
    data,
    tau: int,
    variant: str = "oc",
    adjust: Sequence[str] | None = None,
    censor_adjust: Sequence[str] | None = None,
    propensity: KnownPropensity | str | None = None,
    availability=None,
    floor: float = DENOMINATOR_FLOOR,
) -> EstimateReport:
    """Doubly robust dRMST estimate with influence-function uncertainty."""
    table = _as_table(data)
    _check_arms(table)
    nuis, meta = fit_nuisances(
        table, tau, variant=variant, adjust=adjust, censor_adjust=censor_adjust,
        propensity=propensity, availability=availability,
    )
    terms = compute_eif(table, nuis, tau, variant=variant, floor=floor)
    return _dr_report_from_terms(table, terms, tau, variant, meta)


def estimate_dr_pair(
    data,
    tau: int,
    adjust: Sequence[str] | None = None,
    censor_adjust: Sequence[str] | None = None,
    propensity: KnownPropensity | str | None = None,
    availability=None,
    floor: float = DENOMINATOR_FLOOR,
) -> dict[str, EstimateReport]:
    """Both DR variants from shared treated-arm fits.

    Produces estimates identical to separate estimate_dr calls; the
    concurrent-arm event and censoring fits are computed once.
    """
    table = _as_table(data)
    _check_arms(table)
    nuis_oc, meta_oc = fit_nuisances(
        table, tau, variant="oc", adjust=adjust, censor_adjust=censor_adjust,
        propensity=propensity, availability=availability,
    )
    nuis_ac, meta_ac = fit_nuisances(
        table, tau, variant="ac", adjust=adjust, censor_adjust=censor_adjust,
        propensity=propensity, availability=availability,
        _shared_treated=(nuis_oc.s1, nuis_oc.g1, nuis_oc.h1),
    )
    out = {}
    for variant, nuis, meta in (("oc", nuis_oc, meta_oc), ("ac", nuis_ac, meta_ac)):
        terms = compute_eif(table, nuis, tau, variant=variant, floor=floor)
        out[f"DR_{variant}"] = _dr_report_from_terms(table, terms, tau, variant, meta)
    return out


def estimate(
    data,
    tau: int,
    method: str,
    adjust: Sequence[str] | None = None,
    censor_adjust: Sequence[str] | None = None,
    propensity=None,
    availability=None,
    n_boot: int = 200,
    seed: SeedLike = 0,
    compute_se: bool = True,
) -> EstimateReport:
    """Dispatch on the method acronym (OR_oc, OR_ac, DR_oc, DR_ac, naive)."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choices: {METHODS}")
    if method in ("OR_oc", "OR_ac", "naive"):
        variant = "naive" if method == "naive" else method.split("_")[1]
        return estimate_or(
            data, tau, variant=variant, adjust=adjust, n_boot=n_boot, seed=seed,
            compute_se=compute_se,
        )
    return estimate_dr(
        data, tau, variant=method.split("_")[1], adjust=adjust,
        censor_adjust=censor_adjust, propensity=propensity, availability=availability,
    )


# ---------------------------------------------------------------------------
# Ratio contrasts and pointwise bands


_RATIO_GRADIENTS = {
    "recovery-ratio": lambda s1, s0: (-s0 / s1**2, 1.0 / s1),
    "survival-ratio": lambda s1, s0: (1.0 / s0, -s1 / s0**2),
    "risk-difference": lambda s1, s0: (-1.0, 1.0),
    "risk-ratio": lambda s1, s0: (-1.0 / (1.0 - s0), (1.0 - s1) / (1.0 - s0) ** 2),
}


def delta_ratio(
    theta1: float,
    theta0: float,
    phi1: np.ndarray,
    phi0: np.ndarray,
    t: int,
    kind: str,
    method: str = "",
    scale: str = "identity",
) -> EstimateReport:
    """Delta-method inference for a pointwise survival contrast.

    ``phi1``/``phi0`` are the per-subject influence values of the two curve
    estimates at time t. With scale="log" (ratio kinds only) the variance is
    computed for the log contrast and the interval back-transformed.
    """
    if kind not in _RATIO_GRADIENTS:
        raise ConfigError(f"unknown contrast kind {kind!r}")
    if kind == "recovery-ratio":
        if theta1 == 0.0:
            raise DataError("recovery ratio undefined: theta(1,t) = 0")
        estimate_value = theta0 / theta1
    elif kind == "survival-ratio":
        if theta0 == 0.0:
            raise DataError("survival ratio undefined: theta(0,t) = 0")
        estimate_value = theta1 / theta0
    elif kind == "risk-difference":
        estimate_value = (1.0 - theta1) - (1.0 - theta0)
    else:
        if theta0 == 1.0:
            raise DataError("risk ratio undefined: 1 - theta(0,t) = 0")
        estimate_value = (1.0 - theta1) / (1.0 - theta0)

    n = len(phi1)
    cov = np.cov(np.vstack([phi1, phi0]), ddof=1) / n
    null = 0.0 if kind == "risk-difference" else 1.0
    if scale == "log":
        if kind == "risk-difference":
            raise ConfigError("log scale applies to ratio contrasts only")
        g1, g0 = _RATIO_GRADIENTS[kind](theta1, theta0)
        grad = np.array([g1 / estimate_value, g0 / estimate_value])
        var_log = float(grad @ cov @ grad)
        se_log = math.sqrt(max(var_log, 0.0))
        log_est = math.log(estimate_value)
        ci = (math.exp(log_est - Z95 * se_log), math.exp(log_est + Z95 * se_log))
        p = 2.0 * float(norm.sf(abs(log_est) / se_log)) if se_log > 0 else (
            1.0 if estimate_value == null else 0.0
        )
        se = se_log * estimate_value
    else:
        g1, g0 = _RATIO_GRADIENTS[kind](theta1, theta0)
        grad = np.array([g1, g0])
        var = float(grad @ cov @ grad)
        se = math.sqrt(max(var, 0.0))
        ci, p = _wald(estimate_value, se, null)
    return EstimateReport(
        estimand=f"{kind}(t={t})",
        method=method,
        estimate=float(estimate_value),
        se=float(se),
        ci=ci,
        p_value=p,
        se_source="delta-method",
        tau=t,
        n=n,
        n_concurrent=n,
        null_value=null,
        meta={"scale": scale, "theta1": theta1, "theta0": theta0},
    )


def pointwise_bands(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Wald band at each time: estimate +/- 1.96 * sd(phi_t)/sqrt(n).

    ``theta`` has one entry per time and ``phi`` the matching (n, T) influence
    values; returns an array of (lo, hi) rows.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.shape[1] != theta.shape[0]:
        raise DataError("influence matrix must have one column per time point")
    n = phi.shape[0]
    se = phi.std(axis=0, ddof=1) / math.sqrt(n)
    return np.column_stack([theta - Z95 * se, theta + Z95 * se])
