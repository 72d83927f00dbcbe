"""Subject-level and person-period data model for two-arm platform trial extracts.

Each subject carries baseline covariates, a trial entry time, the availability
indicator of the active arm at entry, the assigned arm, and a discrete observed
time with an event indicator. Administrative censoring at the final period K is
coded as (time=K, event=0) rather than with a separate flag.

The person-period expansion produces one row per subject per period up to the
observed time, with the four indicator columns every hazard fit consumes:

    at_risk_event  -- subject still event-free and uncensored entering period m
    at_risk_censor -- additionally not experiencing the event at period m
    event          -- event observed at period m
    censored       -- censoring observed at period m (never at K; that is
                      administrative and leaves all indicators zero)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DesignViolationError, SchemaError


@dataclass(frozen=True)
class SubjectRecord:
    """One trial participant.

    Covariates are a dense real vector; categorical inputs are one-hot expanded
    at ingestion. ``available`` is the availability of the active arm at the
    subject's entry; by design a subject with ``available == 0`` cannot be in
    the active arm.
    """

    sid: object
    covariates: tuple[float, ...]
    entry: float
    available: int
    arm: int
    time: int
    event: int

    def validate(self, n_periods: int) -> None:
        if self.arm not in (0, 1):
            raise DataError(f"subject {self.sid}: arm must be 0 or 1, got {self.arm}")
        if self.available not in (0, 1):
            raise DataError(f"subject {self.sid}: availability must be 0 or 1, got {self.available}")
        if self.available == 0 and self.arm == 1:
            raise DesignViolationError(
                f"subject {self.sid}: assigned to active arm while it was unavailable"
            )
        if not 1 <= self.time <= n_periods:
            raise DataError(
                f"subject {self.sid}: observed time {self.time} outside 1..{n_periods}"
            )
        if self.event not in (0, 1):
            raise DataError(f"subject {self.sid}: event indicator must be 0 or 1, got {self.event}")


@dataclass(frozen=True)
class TrialDataset:
    """A validated subject list plus the metadata shared by every fit."""

    subjects: tuple[SubjectRecord, ...]
    covariate_names: tuple[str, ...]
    n_periods: int

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        p = len(self.covariate_names)
        for s in self.subjects:
            s.validate(self.n_periods)
            if len(s.covariates) != p:
                raise DataError(
                    f"subject {s.sid}: covariate length {len(s.covariates)} != {p}"
                )

    def __len__(self) -> int:
        return len(self.subjects)

    def expand(self) -> "PersonPeriodTable":
        return expand_person_period(self.subjects, self.n_periods, self.covariate_names)

    def resample(self, indices: Sequence[int]) -> "TrialDataset":
        """Subject-level resample (indices may repeat), preserving metadata."""
        subjects = tuple(self.subjects[i] for i in indices)
        return TrialDataset(subjects, self.covariate_names, self.n_periods)

    def to_frame(self) -> pd.DataFrame:
        rows = {
            "id": [s.sid for s in self.subjects],
            "entry": [s.entry for s in self.subjects],
            "available": [s.available for s in self.subjects],
            "arm": [s.arm for s in self.subjects],
            "time": [s.time for s in self.subjects],
            "event": [s.event for s in self.subjects],
        }
        covs = np.array([s.covariates for s in self.subjects], dtype=float)
        for j, name in enumerate(self.covariate_names):
            rows[name] = covs[:, j]
        return pd.DataFrame(rows)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


@dataclass(frozen=True)
class PersonPeriodTable:
    """Longitudinal expansion of a subject list, one row per at-risk period.

    Rows for a subject cover periods 1..time, after which the subject
    contributes nothing. All row arrays share the same length; ``covariates``
    is a row-aligned (rows, p) matrix with names in ``covariate_names``.
    ``row_start`` gives each subject's contiguous row block, for fast
    subject-level resampling. The ``subject_*`` arrays hold one entry per
    subject in input order.
    """

    subject_index: np.ndarray
    period: np.ndarray
    at_risk_event: np.ndarray
    at_risk_censor: np.ndarray
    event: np.ndarray
    censored: np.ndarray
    arm: np.ndarray
    available: np.ndarray
    entry: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    n_subjects: int
    n_periods: int
    row_start: np.ndarray
    subject_arm: np.ndarray = field(repr=False, default=None)
    subject_available: np.ndarray = field(repr=False, default=None)
    subject_entry: np.ndarray = field(repr=False, default=None)
    subject_covariates: np.ndarray = field(repr=False, default=None)
    subject_time: np.ndarray = field(repr=False, default=None)
    subject_event: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.period)

    def column(self, name: str) -> np.ndarray:
        """Row-aligned column by name: 'entry', 'period', 'arm', or a covariate."""
        if name == "entry":
            return self.entry
        if name == "period":
            return self.period.astype(float)
        if name == "arm":
            return self.arm.astype(float)
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown column {name!r}; have {self.covariate_names}") from None
        return self.covariates[:, j]

    def subject_column(self, name: str) -> np.ndarray:
        """Subject-aligned column by name: 'entry', 'arm', or a covariate."""
        if name == "entry":
            return self.subject_entry
        if name == "arm":
            return self.subject_arm.astype(float)
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown column {name!r}; have {self.covariate_names}") from None
        return self.subject_covariates[:, j]


def expand_person_period(
    subjects: Sequence[SubjectRecord],
    n_periods: int,
    covariate_names: tuple[str, ...] | None = None,
) -> PersonPeriodTable:
    """Unfold subject records into the person-period table.

    Reconstructing (time, event) from the indicators reproduces the input
    exactly; see :func:`collapse_person_period`.
    """
    if n_periods < 1:
        raise DataError(f"n_periods must be >= 1, got {n_periods}")
    if not subjects:
        raise DataError("no subjects to expand")
    p = len(subjects[0].covariates)
    for s in subjects:
        s.validate(n_periods)
        if len(s.covariates) != p:
            raise DataError(f"subject {s.sid}: covariate length {len(s.covariates)} != {p}")
    if covariate_names is None:
        covariate_names = tuple(f"w{j}" for j in range(p)) if p != 1 else ("w",)

    n = len(subjects)
    time = np.array([s.time for s in subjects], dtype=np.int64)
    delta = np.array([s.event for s in subjects], dtype=np.int64)
    arm = np.array([s.arm for s in subjects], dtype=np.int64)
    avail = np.array([s.available for s in subjects], dtype=np.int64)
    entry = np.array([s.entry for s in subjects], dtype=float)
    covs = np.array([s.covariates for s in subjects], dtype=float).reshape(n, p)

    row_start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(time, out=row_start[1:])
    idx = np.repeat(np.arange(n), time)
    period = (np.arange(row_start[-1]) - np.repeat(row_start[:-1], time) + 1).astype(np.int64)

    t_rep = time[idx]
    d_rep = delta[idx]
    is_last = period == t_rep
    event = (is_last & (d_rep == 1)).astype(np.int8)
    censored = (is_last & (d_rep == 0) & (period < n_periods)).astype(np.int8)
    at_risk_event = np.ones(len(period), dtype=np.int8)
    at_risk_censor = (1 - event).astype(np.int8)

    return PersonPeriodTable(
        subject_index=idx,
        period=period,
        at_risk_event=at_risk_event,
        at_risk_censor=at_risk_censor,
        event=event,
        censored=censored,
        arm=arm[idx],
        available=avail[idx],
        entry=entry[idx],
        covariates=covs[idx],
        covariate_names=tuple(covariate_names),
        n_subjects=n,
        n_periods=n_periods,
        row_start=row_start,
        subject_arm=arm,
        subject_available=avail,
        subject_entry=entry,
        subject_covariates=covs,
        subject_time=time,
        subject_event=delta,
    )


def collapse_person_period(table: PersonPeriodTable) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruct (time, event) per subject from the indicator rows."""
    time = np.diff(table.row_start).astype(np.int64)
    event = np.zeros(table.n_subjects, dtype=np.int64)
    ev_rows = table.event.astype(bool)
    event[table.subject_index[ev_rows]] = 1
    return time, event


@dataclass(frozen=True)
class TrialSchema:
    """Column map for CSV ingestion.

    ``covariates`` are numeric columns copied in declared order; ``categorical``
    columns are one-hot expanded (levels sorted, first level dropped) and
    appended after the numeric covariates. Arms other than {control_arm,
    active_arm} are dropped with a warning; the active arm is recoded to 1.
    """

    id: str = "id"
    entry: str = "entry"
    available: str = "available"
    arm: str = "arm"
    time: str = "time"
    event: str = "event"
    covariates: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    control_arm: object = 0
    active_arm: object = 1

    @classmethod
    def from_dict(cls, d: dict) -> "TrialSchema":
        d = dict(d)
        for key in ("covariates", "categorical"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def load_trial_csv(path, schema: TrialSchema, n_periods: int) -> TrialDataset:
    """Load and validate a subject-level CSV into a TrialDataset."""
    df = pd.read_csv(path)
    required = [schema.id, schema.entry, schema.available, schema.arm, schema.time, schema.event]
    required += list(schema.covariates) + list(schema.categorical)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"missing columns in {path}: {', '.join(missing)}")

    arm_raw = df[schema.arm]
    keep = arm_raw.isin([schema.control_arm, schema.active_arm])
    n_dropped = int((~keep).sum())
    if n_dropped:
        warnings.warn(
            f"dropped {n_dropped} subjects outside the two-arm comparison "
            f"{{{schema.control_arm}, {schema.active_arm}}}",
            stacklevel=2,
        )
        df = df.loc[keep]
    if df.empty:
        raise DataError(f"no subjects remain in {path} after arm filtering")

    numeric_cols = [schema.entry, schema.available, schema.time, schema.event]
    numeric_cols += list(schema.covariates)
    parsed = {}
    for col in numeric_cols:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna()
        if bad.any():
            line = int(np.where(bad.to_numpy())[0][0]) + 2  # header is line 1
            raise DataError(f"non-numeric value in column {col!r} near line {line} of {path}")
        parsed[col] = values.to_numpy()

    arm = np.where(df[schema.arm].to_numpy() == schema.active_arm, 1, 0)
    avail = parsed[schema.available].astype(np.int64)
    violations = (avail == 0) & (arm == 1)
    if violations.any():
        ids = df[schema.id].to_numpy()[violations][:20]
        raise DesignViolationError(
            "active-arm assignment while unavailable for subject ids: "
            + ", ".join(str(i) for i in ids)
        )

    time = parsed[schema.time]
    if not np.all(time == np.round(time)):
        raise DataError(f"column {schema.time!r} must contain integer periods")
    time = time.astype(np.int64)
    if time.min() < 1 or time.max() > n_periods:
        bad_id = df[schema.id].to_numpy()[(time < 1) | (time > n_periods)][0]
        raise DataError(f"observed time outside 1..{n_periods} for subject id {bad_id}")

    columns = [parsed[c].astype(float) for c in schema.covariates]
    names = list(schema.covariates)
    for col in schema.categorical:
        levels = sorted(df[col].dropna().unique().tolist())
        for level in levels[1:]:
            columns.append((df[col].to_numpy() == level).astype(float))
            names.append(f"{col}={level}")
    matrix = np.column_stack(columns) if columns else np.empty((len(df), 0))

    ids = df[schema.id].to_numpy()
    event = parsed[schema.event].astype(np.int64)
    entry = parsed[schema.entry].astype(float)
    subjects = [
        SubjectRecord(
            sid=ids[i],
            covariates=tuple(matrix[i]),
            entry=float(entry[i]),
            available=int(avail[i]),
            arm=int(arm[i]),
            time=int(time[i]),
            event=int(event[i]),
        )
        for i in range(len(df))
    ]
    return TrialDataset(subjects, tuple(names), n_periods)
