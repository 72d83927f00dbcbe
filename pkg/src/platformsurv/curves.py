"""Survival curves and causal contrasts built from fitted hazards.

Survival is the running product of one minus the hazard. The event curve S(t)
multiplies hazards through period t; the censoring curve G(t) multiplies
through t-1 (so G(0) = G(1) = 1, the empty product). The identified concurrent
counterfactual curve theta(a, t) is the concurrent-population average of the
per-subject survival products, and the restricted-mean contrast sums the
treated-minus-control difference over t = 1..tau-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DegenerateHazardError, EmptyPopulationError

CONTRAST_KINDS = ("recovery-ratio", "survival-ratio", "risk-difference", "risk-ratio")


@dataclass(frozen=True)
class SurvivalMatrix:
    """Per-subject survival products; column t is the value at time t in 0..horizon."""

    values: np.ndarray
    kind: str
    horizon: int
    lag: int

    def __post_init__(self):
        if self.kind not in ("event", "censoring"):
            raise ConfigError(f"kind must be 'event' or 'censoring', got {self.kind!r}")

    def at(self, t: int) -> np.ndarray:
        if not 0 <= t <= self.horizon:
            raise DataError(f"time {t} outside 0..{self.horizon}")
        return self.values[:, t]


def product_limit(hazards: np.ndarray, horizon: int, lag: int = 0, kind: str = "event") -> SurvivalMatrix:
    """Cumulative products of (1 - hazard) per subject.

    ``hazards`` has one row per subject and one column per period 1..horizon
    (for lag 0) or 1..horizon-1 (lag 1); extra columns are ignored. With lag 1
    the product at time t stops at period t-1, the censoring-curve convention.
    """
    hazards = np.atleast_2d(np.asarray(hazards, dtype=float))
    if lag not in (0, 1):
        raise ConfigError(f"lag must be 0 or 1, got {lag}")
    needed = horizon - lag
    if hazards.shape[1] < needed:
        raise DataError(f"need hazards for {needed} periods, got {hazards.shape[1]}")
    used = hazards[:, :needed]
    if used.size and (np.nanmin(used) < 0.0 or np.nanmax(used) >= 1.0):
        raise DegenerateHazardError("hazard values must lie in [0, 1)")
    n = hazards.shape[0]
    values = np.ones((n, horizon + 1))
    if needed > 0:
        values[:, 1 + lag:] = np.cumprod(1.0 - used, axis=1)
    return SurvivalMatrix(values=values, kind=kind, horizon=horizon, lag=lag)


@dataclass(frozen=True)
class ThetaCurve:
    """Concurrent counterfactual survival curve for one arm, t = 0..horizon."""

    arm: int
    values: np.ndarray
    population: str = "concurrent"
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v[0] != 1.0:
            raise DataError("curve must be one-dimensional with value 1 at t=0")
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise DataError("curve values must lie in [0, 1]")
        if np.any(np.diff(v) > 1e-12):
            raise DataError("curve must be non-increasing in t")

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def at(self, t: int) -> float:
        if not 0 <= t <= self.horizon:
            raise DataError(f"time {t} outside 0..{self.horizon}")
        return float(self.values[t])

    def to_rows(self):
        return [(t, float(v)) for t, v in enumerate(self.values)]


def theta_plugin(surv: SurvivalMatrix, concurrent: np.ndarray, arm: int, provenance: str = "") -> ThetaCurve:
    """Average the per-subject survival rows over the concurrent population."""
    concurrent = np.asarray(concurrent).astype(bool)
    if concurrent.shape[0] != surv.values.shape[0]:
        raise DataError("concurrent flags must align with survival rows")
    if not concurrent.any():
        raise EmptyPopulationError("no concurrent subjects to average over")
    values = surv.values[concurrent].mean(axis=0)
    return ThetaCurve(arm=arm, values=values, provenance=provenance)


def drmst(theta1: ThetaCurve, theta0: ThetaCurve, tau: int) -> float:
    """Difference in restricted mean survival time through horizon tau.

    Sums theta(1,t) - theta(0,t) over t = 1..tau-1, which equals the difference
    of the truncated means E[min(T(a), tau)] exactly in discrete time.
    """
    if tau < 1:
        raise ConfigError(f"tau must be >= 1, got {tau}")
    if theta1.horizon < tau - 1 or theta0.horizon < tau - 1:
        raise DataError(
            f"curves must be defined through {tau - 1}; have horizons "
            f"{theta1.horizon} and {theta0.horizon}"
        )
    if theta1.population != theta0.population:
        raise DataError("curves must target the same population")
    diff = theta1.values[1:tau] - theta0.values[1:tau]
    return float(diff.sum())


def contrast(theta1: ThetaCurve, theta0: ThetaCurve, t: int, kind: str) -> float:
    """Pointwise survival contrast at time t."""
    if kind not in CONTRAST_KINDS:
        raise ConfigError(f"unknown contrast kind {kind!r}; choices: {CONTRAST_KINDS}")
    s1, s0 = theta1.at(t), theta0.at(t)
    if kind == "recovery-ratio":
        if s1 == 0.0:
            raise DataError("recovery ratio undefined: theta(1,t) = 0")
        return s0 / s1
    if kind == "survival-ratio":
        if s0 == 0.0:
            raise DataError("survival ratio undefined: theta(0,t) = 0")
        return s1 / s0
    if kind == "risk-difference":
        return (1.0 - s1) - (1.0 - s0)
    if (1.0 - s0) == 0.0:
        raise DataError("risk ratio undefined: 1 - theta(0,t) = 0")
    return (1.0 - s1) / (1.0 - s0)
