"""Shared fixtures: a tiny discrete world with an exhaustive enumeration oracle.

The tiny world has two entry-time levels and a binary covariate (four strata),
small enough that the identified survival curve and restricted-mean contrast
can be enumerated exactly from empirical cell proportions. Saturated model
fits on stratum dummies must then reproduce the enumeration to float accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from platformsurv import SubjectRecord, TrialDataset

CELLS = ((0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0))
CELL_DUMMIES = ("c01", "c10", "c11")
SATURATED = CELL_DUMMIES  # fit covariates for a saturated per-stratum design


def _cell_covariates(e: float, w: float) -> tuple[float, ...]:
    idx = CELLS.index((e, w))
    dummies = [0.0, 0.0, 0.0]
    if idx > 0:
        dummies[idx - 1] = 1.0
    return (w, *dummies)


@dataclass
class CellPlan:
    """Outcome counts for one (cell, arm, availability) block, K = 2.

    ``events1`` exit with the event at period 1, ``censored1`` are censored at
    period 1, ``events2`` have the event at period 2, and the rest are
    administratively censored at period 2.
    """

    total: int
    events1: int
    censored1: int
    events2: int


def _emit(subjects, sid, e, w, arm, available, plan: CellPlan):
    covs = _cell_covariates(e, w)
    remaining = plan.total - plan.events1 - plan.censored1
    assert 0 < plan.events1 < plan.total
    assert 0 < plan.events2 < remaining
    spec = (
        [(1, 1)] * plan.events1
        + [(1, 0)] * plan.censored1
        + [(2, 1)] * plan.events2
        + [(2, 0)] * (remaining - plan.events2)
    )
    for time, event in spec:
        subjects.append(SubjectRecord(
            sid=sid, covariates=covs, entry=e, available=available,
            arm=arm if available else 0, time=time, event=event,
        ))
        sid += 1
    return sid


def build_tiny_world(with_ncc: bool = True) -> TrialDataset:
    """K=2 dataset over four strata with interior cell proportions everywhere."""
    plans_treated = {
        (0.0, 0.0): CellPlan(20, 3, 2, 5),
        (0.0, 1.0): CellPlan(18, 4, 1, 6),
        (1.0, 0.0): CellPlan(22, 5, 3, 4),
        (1.0, 1.0): CellPlan(16, 2, 2, 7),
    }
    plans_control = {
        (0.0, 0.0): CellPlan(20, 6, 2, 7),
        (0.0, 1.0): CellPlan(18, 7, 1, 5),
        (1.0, 0.0): CellPlan(22, 8, 3, 6),
        (1.0, 1.0): CellPlan(16, 5, 2, 4),
    }
    # Non-concurrent controls: same strata, deliberately different hazards.
    plans_ncc = {
        (0.0, 0.0): CellPlan(15, 2, 1, 9),
        (0.0, 1.0): CellPlan(15, 9, 1, 2),
        (1.0, 0.0): CellPlan(15, 4, 2, 6),
        (1.0, 1.0): CellPlan(15, 6, 1, 3),
    }
    subjects: list[SubjectRecord] = []
    sid = 0
    for (e, w), plan in plans_treated.items():
        sid = _emit(subjects, sid, e, w, arm=1, available=1, plan=plan)
    for (e, w), plan in plans_control.items():
        sid = _emit(subjects, sid, e, w, arm=0, available=1, plan=plan)
    if with_ncc:
        for (e, w), plan in plans_ncc.items():
            sid = _emit(subjects, sid, e, w, arm=0, available=0, plan=plan)
    return TrialDataset(subjects, ("w", *CELL_DUMMIES), 2)


def enum_hazard(dataset: TrialDataset, arm: int, period: int, cell, pooled: bool = False) -> float:
    """Empirical event hazard in one stratum by direct counting."""
    e, w = cell
    at_risk = 0
    events = 0
    for s in dataset.subjects:
        if s.arm != arm or (s.entry, s.covariates[0]) != (e, w):
            continue
        if not pooled and s.available != 1:
            continue
        if s.time >= period:
            at_risk += 1
            if s.time == period and s.event == 1:
                events += 1
    if at_risk == 0:
        raise ValueError(f"empty risk set in cell {cell} arm {arm} period {period}")
    return events / at_risk


def enum_theta(dataset: TrialDataset, arm: int, t: int, pooled_control: bool = False) -> float:
    """Exhaustive enumeration of the identified concurrent survival curve."""
    concurrent = [s for s in dataset.subjects if s.available == 1]
    total = 0.0
    for s in concurrent:
        cell = (s.entry, s.covariates[0])
        surv = 1.0
        for m in range(1, t + 1):
            pooled = pooled_control and arm == 0
            surv *= 1.0 - enum_hazard(dataset, arm, m, cell, pooled=pooled)
        total += surv
    return total / len(concurrent)


def enum_drmst(dataset: TrialDataset, tau: int, pooled_control: bool = False) -> float:
    """Enumeration of the restricted-mean contrast from the survival sums."""
    return sum(
        enum_theta(dataset, 1, t) - enum_theta(dataset, 0, t, pooled_control=pooled_control)
        for t in range(1, tau)
    )


@pytest.fixture(scope="session")
def tiny_world() -> TrialDataset:
    return build_tiny_world()


@pytest.fixture(scope="session")
def tiny_world_concurrent_only() -> TrialDataset:
    return build_tiny_world(with_ncc=False)
