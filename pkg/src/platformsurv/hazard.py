"""Logistic nuisance models on person-period data.

All four nuisance functions (event hazard, censoring hazard, treatment
propensity, availability) are logistic regressions. The default fitting mode
runs a separate fit at each discrete period; a single fit with the period index
as a covariate is available both as the "naive" specification and as the
fallback when some period's risk set is empty, single-class, or separated.

Fits are solved by Newton iteration (IRLS) with step-halving, batched across
periods: one pass evaluates every period's gradient and Hessian with grouped
reductions, so a full per-period fit costs a handful of vectorized sweeps over
the table regardless of the number of periods.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import (
    ConfigError,
    DataError,
    NumericalError,
    SeparationError,
    SingularDesignError,
)
from .data import PersonPeriodTable

SEPARATION_NORM = 1e4
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100

STATUS_OK = "converged"
STATUS_EMPTY = "empty"
STATUS_SINGLE_CLASS = "single_class"
STATUS_SEPARATED = "separated"
STATUS_SINGULAR = "singular"
STATUS_MAX_ITER = "max_iterations"


# ---------------------------------------------------------------------------
# Model specification


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: response, conditioning set, arm stratum, covariates, time handling.

    conditioning="concurrent" restricts the fitting sample to subjects for whom
    the active arm was available; "pooled" uses the whole control history.
    time="by_period" fits one coefficient vector per period; "covariate" fits a
    single model with the period index as a linear term.
    """

    response: str = "event"
    conditioning: str = "concurrent"
    arm: int | None = None
    covariates: tuple[str, ...] = ("entry", "w")
    time: str = "by_period"

    def __post_init__(self):
        if self.response not in ("event", "censor", "treatment", "availability"):
            raise ConfigError(f"unknown response {self.response!r}")
        if self.conditioning not in ("concurrent", "pooled"):
            raise ConfigError(f"unknown conditioning {self.conditioning!r}")
        if self.time not in ("by_period", "covariate"):
            raise ConfigError(f"unknown time handling {self.time!r}")
        if self.arm not in (None, 0, 1):
            raise ConfigError(f"arm stratum must be 0, 1 or None, got {self.arm!r}")
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @classmethod
    def naive(cls, arm: int) -> "ModelSpec":
        """Unadjusted specification: time index only, concurrent data."""
        return cls(response="event", conditioning="concurrent", arm=arm,
                   covariates=("period",), time="covariate")

    def misspecified(self, replacements: Mapping[str, str], drop: Sequence[str] = ("entry",)) -> "ModelSpec":
        """Covariate-set transformation for misspecification studies.

        Drops the named columns and substitutes replacement columns, leaving
        the data untouched; only the fitted design changes.
        """
        new = []
        for c in self.covariates:
            if c in drop:
                continue
            new.append(replacements.get(c, c))
        return replace(self, covariates=tuple(new))

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "conditioning": self.conditioning,
            "arm": self.arm,
            "covariates": list(self.covariates),
            "time": self.time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if "covariates" in d:
            d["covariates"] = tuple(d["covariates"])
        return cls(**d)

    @classmethod
    def from_json(cls, s: str) -> "ModelSpec":
        return cls.from_dict(json.loads(s))


# ---------------------------------------------------------------------------
# IRLS core


def _grouped_reduce(values, groups, n_groups):
    return np.bincount(groups, weights=values, minlength=n_groups)


def grouped_irls(
    X: np.ndarray,
    y: np.ndarray,
    groups: np.ndarray,
    n_groups: int,
    weights: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: np.ndarray | None = None,
):
    """Fit independent logistic regressions for each group in one batched loop.

    Returns (coef, status, iterations, grad_norm) with coef of shape
    (n_groups, p). Groups with no rows or a single response class are reported
    via status and left at zero coefficients; they are never solved.

    Rows are sorted by group once so each Newton sweep reduces gradient,
    Hessian, and log-likelihood contributions with a single segmented sum.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    R, p = X.shape
    w = np.ones(R) if weights is None else np.asarray(weights, dtype=float)

    coef = np.zeros((n_groups, p))
    status = np.array([STATUS_OK] * n_groups, dtype=object)
    iterations = np.zeros(n_groups, dtype=int)
    grad_norm = np.zeros(n_groups)

    if R == 0:
        status[:] = STATUS_EMPTY
        return coef, status, iterations, grad_norm

    order = np.argsort(groups, kind="stable")
    X = X[order]
    y = y[order]
    w = w[order]
    groups = groups[order]
    counts = np.bincount(groups, minlength=n_groups)
    offsets = np.zeros(n_groups, dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    empty = counts == 0
    safe_offsets = np.minimum(offsets, R - 1)

    def segsum(values: np.ndarray) -> np.ndarray:
        out = np.add.reduceat(values, safe_offsets, axis=0)
        out[empty] = 0.0
        return out

    wsum = segsum(w)
    ysum = segsum(w * y)
    status[wsum == 0] = STATUS_EMPTY
    single = (wsum > 0) & ((ysum == 0) | (ysum == wsum))
    status[single] = STATUS_SINGLE_CLASS

    solvable = status == STATUS_OK
    if not solvable.any():
        return coef, status, iterations, grad_norm

    iu = np.triu_indices(p)
    xx = X[:, iu[0]] * X[:, iu[1]]  # upper-triangle cross products, fixed

    def hessians(wgt: np.ndarray) -> np.ndarray:
        flat = segsum(xx * wgt[:, None])
        hess = np.empty((n_groups, p, p))
        hess[:, iu[0], iu[1]] = flat
        hess[:, iu[1], iu[0]] = flat
        return hess

    # Rank check on each solvable group's Gram matrix (batched eigenvalues);
    # offending columns are identified by the caller on the failing subset.
    gram = hessians(w)
    act = np.nonzero(solvable)[0]
    eigs = np.linalg.eigvalsh(gram[act])
    rank_tol = eigs[:, -1] * max(R, p) * np.finfo(float).eps
    deficient = act[eigs[:, 0] <= rank_tol]
    if deficient.size:
        status[deficient] = STATUS_SINGULAR
        solvable[deficient] = False
        if not solvable.any():
            return coef, status, iterations, grad_norm

    active = solvable.copy()
    if init is not None and init.shape == (n_groups, p):
        coef = np.where(solvable[:, None], init, 0.0)
        lp = np.einsum("rp,rp->r", X, coef[groups])
    else:
        lp = np.zeros(R)
    ll_old = None
    for _ in range(max_iter):
        mu = expit(lp)
        resid = w * (y - mu)
        grad = segsum(X * resid[:, None])
        gnorm = np.linalg.norm(grad, axis=1)
        grad_norm[active] = gnorm[active]
        active = active & (gnorm > tol)
        if not active.any():
            break

        hess = hessians(w * mu * (1.0 - mu))
        act_idx = np.nonzero(active)[0]
        step = np.zeros((n_groups, p))
        try:
            step[act_idx] = np.linalg.solve(hess[act_idx], grad[act_idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            for gidx in act_idx:
                try:
                    step[gidx] = np.linalg.solve(hess[gidx], grad[gidx])
                except np.linalg.LinAlgError:
                    # Weights collapsed to zero: fitted probabilities pinned
                    # at 0/1, the signature of separation.
                    status[gidx] = STATUS_SEPARATED
                    active[gidx] = False
            act_idx = np.nonzero(active)[0]
        if not active.any():
            break

        # Step-halving guards large steps against log-likelihood decreases
        # beyond summation noise; small Newton steps are always safe.
        if np.max(np.abs(step)) > 2.0:
            if ll_old is None:
                ll_old = segsum(w * (y * lp - np.logaddexp(0.0, lp)))
            scale = np.where(active, 1.0, 0.0)
            noise = 1e-9 * (1.0 + np.abs(ll_old))
            for _half in range(12):
                trial = coef + scale[:, None] * step
                lp = np.einsum("rp,rp->r", X, trial[groups])
                ll_new = segsum(w * (y * lp - np.logaddexp(0.0, lp)))
                worse = active & (ll_new < ll_old - noise)
                if not worse.any():
                    break
                scale[worse] *= 0.5
            coef = coef + scale[:, None] * step
            ll_old = ll_new
        else:
            coef = coef + step
            lp = np.einsum("rp,rp->r", X, coef[groups])
            ll_old = None
        iterations[active] += 1

        diverged = active & (np.linalg.norm(coef, axis=1) > SEPARATION_NORM)
        if diverged.any():
            status[diverged] = STATUS_SEPARATED
            active &= ~diverged
            if not active.any():
                break
    else:
        status[active] = STATUS_MAX_ITER

    # Complete/quasi-complete separation certificate: at a nonzero iterate,
    # every observation sits on the correct side of the boundary (margin >= 0,
    # at least one strictly positive), so the likelihood increases along that
    # direction without bound and the reported fit is a numerical artifact.
    check = (status == STATUS_OK) | (status == STATUS_MAX_ITER)
    if check.any():
        margin = np.where(w > 0, (2.0 * y - 1.0) * lp, 0.0)
        n_wrong = segsum((margin < 0.0).astype(float))
        n_right = segsum((margin > 0.0).astype(float))
        separated = check & (n_wrong == 0) & (n_right > 0)
        status[separated] = STATUS_SEPARATED

    return coef, status, iterations, grad_norm


def _name_singular_columns(X, w, names):
    """Identify linearly dependent design columns via pivoted QR."""
    from scipy.linalg import qr

    Xw = X * np.sqrt(w)[:, None]
    _, r, piv = qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    threshold = diag.max() * max(Xw.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > threshold).sum())
    return tuple(names[j] for j in piv[rank:])


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    column_names: Sequence[str] | None = None,
) -> np.ndarray:
    """Maximum-likelihood logistic fit of y on X (X includes any intercept column).

    Deterministic given input order. Raises SeparationError on complete or
    quasi-complete separation (diverging coefficient norm or a single response
    class), SingularDesignError naming the offending columns on rank
    deficiency.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DataError("design and response must be nonempty with matching rows")
    names = tuple(column_names) if column_names is not None else tuple(
        f"x{j}" for j in range(X.shape[1])
    )
    groups = np.zeros(X.shape[0], dtype=np.int64)
    coef, status, _, _ = grouped_irls(X, y, groups, 1, weights=weights, tol=tol, max_iter=max_iter)
    st = status[0]
    if st == STATUS_OK:
        return coef[0]
    if st == STATUS_SINGLE_CLASS:
        raise SeparationError("all responses identical; the MLE diverges")
    if st == STATUS_SEPARATED:
        raise SeparationError(
            f"separation detected (coefficient norm exceeded {SEPARATION_NORM:g})"
        )
    if st == STATUS_SINGULAR:
        w = np.ones(len(y)) if weights is None else np.asarray(weights, float)
        raise SingularDesignError(_name_singular_columns(X, w, names))
    raise NumericalError(f"logistic fit did not converge within {max_iter} iterations")


# ---------------------------------------------------------------------------
# Hazard fits on person-period tables


def _design_from_columns(features: Sequence[str], columns, n_rows: int, period_value=None):
    cols = [np.ones(n_rows)]
    for name in features:
        if name == "period" and period_value is not None:
            cols.append(np.full(n_rows, float(period_value)))
        else:
            col = columns(name) if callable(columns) else columns[name]
            cols.append(np.asarray(col, dtype=float))
    return np.column_stack(cols)


@dataclass(frozen=True)
class HazardFit:
    """A fitted discrete-time conditional probability model.

    In per-period mode ``coef`` has one row per entry of ``periods``; in
    covariate mode it is a single vector shared by all periods. Evaluation at
    a period outside ``periods`` is an error, not an extrapolation.
    """

    spec: ModelSpec
    feature_names: tuple[str, ...]
    coef: np.ndarray
    periods: tuple[int, ...]
    mode: str
    iterations: tuple[int, ...] = ()
    grad_norm: tuple[float, ...] = ()
    fallback: bool = False
    fallback_periods: tuple[int, ...] = ()
    _period_row: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_period_row", {m: i for i, m in enumerate(self.periods)})

    def coefficients(self, period: int) -> np.ndarray:
        if self.mode == "covariate":
            return self.coef
        try:
            return self.coef[self._period_row[period]]
        except KeyError:
            raise DataError(
                f"period {period} outside the fitted period set {self.periods}"
            ) from None

    def _n_rows(self, columns, n_rows: int | None) -> int:
        if n_rows is not None:
            return n_rows
        for name in self.feature_names:
            if name != "period":
                col = columns(name) if callable(columns) else columns[name]
                return len(np.asarray(col))
        raise DataError("cannot infer row count for an intercept/period-only model; pass n_rows")

    def predict(self, period: int, columns, n_rows: int | None = None) -> np.ndarray:
        """Predicted probability at ``period`` for subjects described by ``columns``.

        ``columns`` maps feature names to equal-length arrays (or is a callable
        doing the same); the period index itself is supplied by ``period``.
        """
        if period not in self._period_row:
            raise DataError(f"period {period} outside the fitted period set {self.periods}")
        n = self._n_rows(columns, n_rows)
        X = _design_from_columns(self.feature_names, columns, n, period_value=period)
        return expit(X @ self.coefficients(period))

    def predict_matrix(self, columns, periods: Sequence[int], n_rows: int | None = None) -> np.ndarray:
        """(n, len(periods)) prediction matrix for fixed subject features."""
        periods = list(periods)
        for m in periods:
            if m not in self._period_row:
                raise DataError(f"period {m} outside the fitted period set {self.periods}")
        n = self._n_rows(columns, n_rows)
        if "period" not in self.feature_names:
            X = _design_from_columns(self.feature_names, columns, n)
            if self.mode == "covariate":
                lp = np.repeat((X @ self.coef)[:, None], len(periods), axis=1)
            else:
                beta = np.stack([self.coefficients(m) for m in periods], axis=1)
                lp = X @ beta
            return expit(lp)
        out = np.empty((n, len(periods)))
        for j, m in enumerate(periods):
            out[:, j] = self.predict(m, columns, n_rows=n)
        return out


def _fit_rows(table: PersonPeriodTable, spec: ModelSpec, periods):
    """Select fitting rows and the response for a spec; returns row mask, y."""
    if spec.response == "event":
        mask = table.at_risk_event.astype(bool)
        y = table.event
    elif spec.response == "censor":
        mask = table.at_risk_censor.astype(bool) & (table.period < table.n_periods)
        y = table.censored
    else:
        raise ConfigError(f"{spec.response!r} is a subject-level response; use fit_subject_model")
    if spec.conditioning == "concurrent":
        mask = mask & (table.available == 1)
    if spec.arm is not None:
        mask = mask & (table.arm == spec.arm)
    periods = list(periods)
    if periods == list(range(periods[0], periods[-1] + 1)):
        mask = mask & (table.period >= periods[0]) & (table.period <= periods[-1])
    else:
        mask = mask & np.isin(table.period, periods)
    return mask, y


def fit_hazard(
    table: PersonPeriodTable,
    spec: ModelSpec,
    periods: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: np.ndarray | None = None,
) -> HazardFit:
    """Fit an event or censoring hazard model as described by ``spec``.

    Per-period mode falls back to the time-covariate mode (recorded on the
    returned fit) when any requested period has an empty, single-class, or
    separated risk set. Separation in the single-fit mode and rank deficiency
    raise.
    """
    if spec.response in ("treatment", "availability"):
        return fit_subject_model(table, spec, tol=tol, max_iter=max_iter)

    if periods is None:
        last = table.n_periods if spec.response == "event" else table.n_periods - 1
        periods = range(1, last + 1)
    periods = [int(m) for m in periods]
    if spec.response == "censor":
        periods = [m for m in periods if m <= table.n_periods - 1]
    if not periods:
        raise DataError("no periods to fit")

    mask, y_all = _fit_rows(table, spec, periods)
    if not mask.any():
        raise DataError(
            f"empty fitting sample for response={spec.response!r} "
            f"conditioning={spec.conditioning!r} arm={spec.arm!r}"
        )
    rows = np.nonzero(mask)[0]
    y = y_all[rows].astype(float)
    X = _design_from_columns(spec.covariates, lambda name: table.column(name)[rows], len(rows))
    feature_names = spec.covariates

    if spec.time == "by_period":
        period_of_row = table.period[rows]
        period_index = {m: g for g, m in enumerate(periods)}
        lut = np.zeros(max(periods) + 1, dtype=np.int64)
        lut[list(periods)] = np.arange(len(periods))
        groups = lut[period_of_row]
        coef, status, iters, gnorm = grouped_irls(
            X, y, groups, len(periods), tol=tol, max_iter=max_iter, init=init
        )
        # A separated period carries too little information for its own fit,
        # exactly like an empty or single-class one (a couple of events in a
        # sparse risk set are almost always linearly separable); all three
        # fall back to the single time-covariate fit, keeping small
        # concurrent-fraction scenarios runnable.
        bad_fallback = [m for m, st in zip(periods, status)
                        if st in (STATUS_EMPTY, STATUS_SINGLE_CLASS, STATUS_SEPARATED)]
        hard = {m: st for m, st in zip(periods, status)
                if st in (STATUS_SINGULAR, STATUS_MAX_ITER)}
        if hard:
            m, st = next(iter(hard.items()))
            if st == STATUS_SINGULAR:
                in_period = groups == period_index[m]
                raise SingularDesignError(_name_singular_columns(
                    X[in_period], np.ones(int(in_period.sum())),
                    ("intercept",) + tuple(feature_names),
                ))
            raise NumericalError(f"period-{m} fit did not converge within {max_iter} iterations")
        if not bad_fallback:
            return HazardFit(
                spec=spec,
                feature_names=feature_names,
                coef=coef,
                periods=tuple(periods),
                mode="by_period",
                iterations=tuple(int(i) for i in iters),
                grad_norm=tuple(float(g) for g in gnorm),
            )
        # Fall back: single fit with the period index as a covariate.
        fallback_spec = spec if "period" in spec.covariates else replace(
            spec, covariates=spec.covariates + ("period",)
        )
        fit = _fit_time_covariate(table, fallback_spec, periods, rows, y, tol, max_iter)
        return replace(fit, spec=spec, fallback=True, fallback_periods=tuple(bad_fallback))

    return _fit_time_covariate(table, spec, periods, rows, y, tol, max_iter)


def _fit_time_covariate(table, spec, periods, rows, y, tol, max_iter):
    covs = spec.covariates
    if len(set(periods)) <= 1 and "period" in covs:
        covs = tuple(c for c in covs if c != "period")  # constant column
    X = _design_from_columns(covs, lambda name: table.column(name)[rows], len(rows))
    names = ("intercept",) + tuple(covs)
    groups = np.zeros(len(rows), dtype=np.int64)
    coef, status, iters, gnorm = grouped_irls(X, y, groups, 1, tol=tol, max_iter=max_iter)
    st = status[0]
    if st == STATUS_SINGLE_CLASS:
        raise SeparationError(f"all responses identical in {spec.response!r} fit; the MLE diverges")
    if st == STATUS_SEPARATED:
        raise SeparationError(f"separation in time-covariate fit for {spec.response!r} model")
    if st == STATUS_SINGULAR:
        raise SingularDesignError(_name_singular_columns(X, np.ones(len(rows)), names))
    if st == STATUS_MAX_ITER:
        raise NumericalError(f"time-covariate fit did not converge within {max_iter} iterations")
    return HazardFit(
        spec=spec,
        feature_names=tuple(covs),
        coef=coef[0],
        periods=tuple(periods),
        mode="covariate",
        iterations=(int(iters[0]),),
        grad_norm=(float(gnorm[0]),),
    )


def fit_subject_model(
    table: PersonPeriodTable,
    spec: ModelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> HazardFit:
    """Subject-level logistic fit for treatment or availability responses."""
    if spec.response == "treatment":
        y = table.subject_arm.astype(float)
        mask = table.subject_available == 1 if spec.conditioning == "concurrent" else np.ones(
            table.n_subjects, dtype=bool
        )
    elif spec.response == "availability":
        y = table.subject_available.astype(float)
        mask = np.ones(table.n_subjects, dtype=bool)
    else:
        raise ConfigError(f"not a subject-level response: {spec.response!r}")
    rows = np.nonzero(mask)[0]
    if len(rows) == 0:
        raise DataError(f"empty fitting sample for {spec.response!r} model")
    X = _design_from_columns(
        [c for c in spec.covariates if c != "period"],
        lambda name: table.subject_column(name)[rows],
        len(rows),
    )
    names = ("intercept",) + tuple(c for c in spec.covariates if c != "period")
    coef = fit_logistic(X, y[rows], tol=tol, max_iter=max_iter, column_names=names)
    return HazardFit(
        spec=spec,
        feature_names=tuple(c for c in spec.covariates if c != "period"),
        coef=coef,
        periods=tuple(range(1, table.n_periods + 1)),
        mode="covariate",
    )


# ---------------------------------------------------------------------------
# Known-by-design evaluators


@dataclass(frozen=True)
class KnownPropensity:
    """Constant randomization probability, known by design."""

    p_active: float

    def __post_init__(self):
        if not 0.0 < self.p_active < 1.0:
            raise ConfigError(f"propensity must lie strictly in (0,1), got {self.p_active}")

    def prob(self, arm: int, n: int) -> np.ndarray:
        value = self.p_active if arm == 1 else 1.0 - self.p_active
        return np.full(n, value)


def known_propensity(p: float) -> KnownPropensity:
    """Evaluator returning p for the active arm and 1-p for control."""
    return KnownPropensity(p)


@dataclass(frozen=True)
class LogisticAvailability:
    """P(active arm available | entry) = expit(intercept + slope * entry)."""

    intercept: float
    slope: float

    def prob(self, entry: np.ndarray) -> np.ndarray:
        return expit(self.intercept + self.slope * np.asarray(entry, dtype=float))


@dataclass(frozen=True)
class FittedAvailability:
    """Availability probability from a fitted subject-level logistic model."""

    fit: HazardFit

    def prob(self, entry: np.ndarray) -> np.ndarray:
        entry = np.asarray(entry, dtype=float)
        return self.fit.predict(self.fit.periods[0], {"entry": entry})
