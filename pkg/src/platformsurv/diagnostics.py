"""Decision aids for pooling non-concurrent controls.

The mixture decomposition stratifies the control risk set by availability and
checks the law-of-total-probability identity: the pooled hazard equals the
availability-weighted mixture of the availability-stratified hazards. Strata
where the two stratified hazards differ materially are flagged as evidence
against pooling. The effective-sample-size heuristic compares the pooled and
concurrent control risk-set masses per period, the approximate variance-
reduction factor a pooled hazard fit can deliver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import PersonPeriodTable
from .errors import DataError

A7_FLAG_THRESHOLD = 0.05


@dataclass(frozen=True)
class StratumSpec:
    """Quantile binning of (entry, covariate) for the mixture check."""

    entry_bins: int = 4
    covariate_bins: int = 4
    covariate: str | None = None  # default: first baseline covariate


@dataclass
class MixtureRow:
    period: int
    stratum: str
    n_concurrent: int
    n_nonconcurrent: int
    hazard_concurrent: float
    hazard_nonconcurrent: float
    weight: float
    pooled_reconstructed: float
    pooled_direct: float
    discrepancy: float
    evaluable: bool
    flagged: bool


@dataclass
class MixtureReport:
    rows: list[MixtureRow]
    threshold: float

    def flagged_fraction(self) -> float:
        evaluable = [r for r in self.rows if r.evaluable]
        if not evaluable:
            return float("nan")
        return sum(r.flagged for r in evaluable) / len(evaluable)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows])

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def _quantile_edges(values: np.ndarray, bins: int) -> np.ndarray:
    qs = np.linspace(0, 1, bins + 1)[1:-1]
    return np.unique(np.quantile(values, qs))


def mixture_decomposition(
    table: PersonPeriodTable,
    strata: StratumSpec | None = None,
    threshold: float = A7_FLAG_THRESHOLD,
    periods=None,
) -> MixtureReport:
    """Availability-stratified control hazards and the pooled-hazard identity.

    Strata observed in only one availability class are reported as
    non-evaluable rather than errors (with deterministic availability every
    stratum is non-evaluable: the mixture weight is degenerate).
    """
    strata = strata or StratumSpec()
    control = table.arm == 0
    if not control.any():
        raise DataError("no control-arm rows")
    cov_name = strata.covariate or table.covariate_names[0]
    entry = table.entry
    cov = table.column(cov_name)

    entry_edges = _quantile_edges(table.subject_entry, strata.entry_bins)
    cov_edges = _quantile_edges(table.subject_column(cov_name), strata.covariate_bins)
    entry_bin = np.digitize(entry, entry_edges)
    cov_bin = np.digitize(cov, cov_edges)

    if periods is None:
        periods = range(1, table.n_periods + 1)
    rows = []
    at_risk = table.at_risk_event.astype(bool) & control
    for m in periods:
        in_period = at_risk & (table.period == m)
        for eb in range(strata.entry_bins):
            for cb in range(strata.covariate_bins):
                cell = in_period & (entry_bin == eb) & (cov_bin == cb)
                if not cell.any():
                    continue
                conc = cell & (table.available == 1)
                ncc = cell & (table.available == 0)
                n1, n0 = int(conc.sum()), int(ncc.sum())
                label = f"entry_bin={eb},{cov_name}_bin={cb}"
                pooled_direct = float(table.event[cell].mean())
                if n1 == 0 or n0 == 0:
                    rows.append(MixtureRow(
                        period=int(m), stratum=label, n_concurrent=n1,
                        n_nonconcurrent=n0,
                        hazard_concurrent=float(table.event[conc].mean()) if n1 else float("nan"),
                        hazard_nonconcurrent=float(table.event[ncc].mean()) if n0 else float("nan"),
                        weight=float(n1 / (n1 + n0)),
                        pooled_reconstructed=pooled_direct,
                        pooled_direct=pooled_direct,
                        discrepancy=0.0,
                        evaluable=False,
                        flagged=False,
                    ))
                    continue
                h1 = float(table.event[conc].mean())
                h0 = float(table.event[ncc].mean())
                weight = n1 / (n1 + n0)
                recon = h1 * weight + h0 * (1.0 - weight)
                rows.append(MixtureRow(
                    period=int(m), stratum=label, n_concurrent=n1, n_nonconcurrent=n0,
                    hazard_concurrent=h1, hazard_nonconcurrent=h0, weight=weight,
                    pooled_reconstructed=recon, pooled_direct=pooled_direct,
                    discrepancy=abs(recon - pooled_direct),
                    evaluable=True,
                    flagged=abs(h1 - h0) > threshold,
                ))
    return MixtureReport(rows=rows, threshold=threshold)


@dataclass
class EssRow:
    period: int
    c_pool: float
    c_concurrent: float
    ratio: float
    infinite: bool


@dataclass
class EssReport:
    rows: list[EssRow]

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows])

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def ess_heuristic(table: PersonPeriodTable, periods=None) -> EssReport:
    """Per-period pooled-to-concurrent control risk-set mass ratio.

    c_pool(m) averages the at-risk control indicator over all subjects;
    c_concurrent(m) additionally requires availability. Their ratio is the
    approximate information gain a pooled control hazard fit enjoys at m.
    """
    control = table.arm == 0
    if not control.any():
        raise DataError("no control-arm rows")
    if periods is None:
        periods = range(1, table.n_periods + 1)
    n = table.n_subjects
    rows = []
    for m in periods:
        in_period = (table.period == m) & (table.at_risk_event == 1)
        pool = float((in_period & control).sum()) / n
        conc = float((in_period & control & (table.available == 1)).sum()) / n
        infinite = conc == 0.0
        ratio = float("inf") if infinite else pool / conc
        rows.append(EssRow(period=int(m), c_pool=pool, c_concurrent=conc,
                           ratio=ratio, infinite=infinite))
    return EssReport(rows=rows)
