"""Monte Carlo study driver: replication loops, metrics, and result emission.

Every replicate is an independent work item keyed by (master seed, rho index,
replicate index); datasets, misspecification noise, and bootstrap resamples
all derive their streams from that key, so results are bit-identical across
reruns and worker counts. Reduction sorts by key before aggregating.

Outputs: a metrics table (bias squared, variance, MSE, coverage with its
Monte Carlo standard error, mean reported SE) per (method, rho, tau) cell, an
optional replicate-level table, standard-error-ratio tables for the
pooling-efficiency comparison, and a 2x2 pooling-assumption-by-specification
grid. All tables serialize to CSV with a fixed column order plus a JSON
manifest sufficient to re-run the command.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import __version__ as _version
from .dgp import DgpConfig, TruthTable, gen_trial, misspecify, truth_oracle
from .errors import ConfigError, DataError, PlatformSurvError
from .estimators import (
    METHODS,
    bootstrap_se_multi,
    estimate_dr,
    estimate_dr_pair,
    _or_point_estimates,
)

Z95 = 1.959963984540054

DEFAULT_RHO_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

METRICS_COLUMNS = [
    "method", "rho", "tau", "specification", "regime", "truth", "truth_mc_se",
    "bias", "bias_sq", "variance", "mse", "coverage", "coverage_mc_se",
    "mean_se", "reps", "failures", "flagged",
]
REPLICATE_COLUMNS = [
    "method", "rho", "tau", "specification", "regime", "rep", "seed",
    "estimate", "se", "ci_lo", "ci_hi", "covered", "failed",
]
RATIO_COLUMNS = [
    "regime", "specification", "rho", "tau", "pair",
    "mean_ratio", "mc_se", "reps", "failures",
]
A7_COLUMNS = [
    "pooling_assumption", "gamma", "specification", "method", "rho", "tau",
    "truth", "mean_estimate", "bias", "mc_se", "abs_z", "reps",
]

MISSPEC_ADJUST = ("w_star",)
CORRECT_ADJUST = ("entry", "w")
MISSPEC_RATE = 2.0


@dataclass(frozen=True)
class ScenarioConfig:
    """One full simulation study: grids, replication count, and regimes."""

    dgp: DgpConfig = field(default_factory=DgpConfig)
    rho_grid: tuple[float, ...] = DEFAULT_RHO_GRID
    replications: int = 500
    taus: tuple[int, ...] = (4, 8, 12)
    specification: str = "correct"
    methods: tuple[str, ...] = METHODS
    master_seed: int = 0
    bootstrap_b: int = 200
    compute_se: bool = True
    truth_reps: int = 1_000_000
    workers: int | None = None

    def __post_init__(self):
        if self.specification not in ("correct", "misspecified"):
            raise ConfigError(f"unknown specification {self.specification!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if self.replications < 1:
            raise ConfigError("need at least one replication")
        for tau in self.taus:
            if not 1 <= tau <= self.dgp.n_periods:
                raise ConfigError(f"tau {tau} outside 1..{self.dgp.n_periods}")
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        object.__setattr__(self, "taus", tuple(int(t) for t in self.taus))
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp.to_dict(),
            "rho_grid": list(self.rho_grid),
            "replications": self.replications,
            "taus": list(self.taus),
            "specification": self.specification,
            "methods": list(self.methods),
            "master_seed": self.master_seed,
            "bootstrap_b": self.bootstrap_b,
            "compute_se": self.compute_se,
            "truth_reps": self.truth_reps,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "dgp" in d:
            d["dgp"] = DgpConfig.from_dict(d["dgp"])
        for key in ("rho_grid", "taus", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# ---------------------------------------------------------------------------
# Replicate worker


def _replicate_worker(payload: dict) -> tuple[int, int, list[tuple]]:
    """Run every requested method on one simulated dataset.

    Returns (rho_index, rep, rows) where each row is
    (tau, method, estimate, se, failed).
    """
    import warnings

    from .errors import PoolingDiagnosticWarning

    warnings.simplefilter("ignore", PoolingDiagnosticWarning)
    cfg = ScenarioConfig.from_dict(payload["config"])
    rho_idx = payload["rho_idx"]
    rep = payload["rep"]
    rho = cfg.rho_grid[rho_idx]
    seed = (cfg.master_seed, rho_idx, rep)
    dgp = replace(cfg.dgp, rho=rho, seed=seed)
    trial = gen_trial(dgp)
    dataset = trial.dataset
    if cfg.specification == "misspecified":
        dataset = misspecify(dataset, MISSPEC_RATE, seed=seed)
    adjust = MISSPEC_ADJUST if cfg.specification == "misspecified" else CORRECT_ADJUST
    availability = trial.availability_model  # None in the deterministic regime
    table = dataset.expand()

    rows: list[tuple] = []
    or_variants = [m for m in ("OR_oc", "OR_ac", "naive") if m in cfg.methods]
    variant_keys = ["naive" if m == "naive" else m.split("_")[1] for m in or_variants]
    for tau in cfg.taus:
        points: dict[str, float] = {}
        ses: dict[str, float] = {}
        if variant_keys:
            try:
                points = _or_point_estimates(table, tau, variant_keys, adjust)
            except PlatformSurvError:
                for v in variant_keys:
                    try:
                        points[v] = _or_point_estimates(table, tau, [v], adjust)[v]
                    except PlatformSurvError:
                        pass
            if cfg.compute_se and points:
                try:
                    boot = bootstrap_se_multi(
                        table, tau, [v for v in variant_keys if v in points],
                        adjust, n_boot=cfg.bootstrap_b, seed=seed,
                    )
                    ses = {v: se for v, (se, _) in boot.items()}
                except PlatformSurvError:
                    ses = {}
        for method, variant in zip(or_variants, variant_keys):
            if variant in points:
                est = points[variant]
                se = ses.get(variant, float("nan")) if cfg.compute_se else float("nan")
                rows.append((tau, method, est, se, False))
            else:
                rows.append((tau, method, float("nan"), float("nan"), True))
        dr_methods = [m for m in ("DR_oc", "DR_ac") if m in cfg.methods]
        if len(dr_methods) == 2:
            try:
                reports = estimate_dr_pair(table, tau, adjust=adjust,
                                           censor_adjust=adjust,
                                           availability=availability)
                for method in dr_methods:
                    r = reports[method]
                    rows.append((tau, method, r.estimate, r.se, False))
            except PlatformSurvError:
                for method in dr_methods:
                    rows.append((tau, method, float("nan"), float("nan"), True))
        else:
            for method in dr_methods:
                try:
                    report = estimate_dr(
                        table, tau, variant=method.split("_")[1], adjust=adjust,
                        censor_adjust=adjust, availability=availability,
                    )
                    rows.append((tau, method, report.estimate, report.se, False))
                except PlatformSurvError:
                    rows.append((tau, method, float("nan"), float("nan"), True))
    return rho_idx, rep, rows


def _run_replicates(config: ScenarioConfig, workers: int | None) -> list[tuple]:
    payloads = [
        {"config": config.to_dict(), "rho_idx": rho_idx, "rep": rep}
        for rho_idx in range(len(config.rho_grid))
        for rep in range(config.replications)
    ]
    workers = workers if workers is not None else config.workers
    if workers is None or workers <= 1 or len(payloads) == 1:
        results = [_replicate_worker(p) for p in payloads]
    else:
        chunk = max(1, len(payloads) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_worker, payloads, chunksize=chunk))
    results.sort(key=lambda r: (r[0], r[1]))
    return results


# ---------------------------------------------------------------------------
# Truth cache


_TRUTH_CACHE: dict[tuple, TruthTable] = {}


def cached_truth(dgp: DgpConfig, tau: int, reps: int) -> TruthTable:
    key = (dgp.estimand_digest(), tau, reps)
    if key not in _TRUTH_CACHE:
        _TRUTH_CACHE[key] = truth_oracle(dgp, tau, reps=reps)
    return _TRUTH_CACHE[key]


# ---------------------------------------------------------------------------
# Metrics


def cell_metrics(estimates: np.ndarray, truth: float) -> dict:
    """Bias, variance, and MSE conventions for one study cell.

    bias is the mean estimate minus truth; variance is the sample variance of
    the estimates (divisor R-1); MSE is the mean squared deviation from truth,
    so MSE = bias^2 + (R-1)/R * variance.
    """
    estimates = np.asarray(estimates, dtype=float)
    r = len(estimates)
    bias = float(estimates.mean() - truth)
    variance = float(estimates.var(ddof=1)) if r > 1 else 0.0
    mse = float(((estimates - truth) ** 2).mean())
    return {"bias": bias, "bias_sq": bias * bias, "variance": variance, "mse": mse}


@dataclass
class StudyResult:
    metrics: pd.DataFrame
    replicates: pd.DataFrame
    truths: dict[tuple[float, int], TruthTable]
    config: ScenarioConfig

    def metrics_row(self, method: str, rho: float, tau: int) -> pd.Series:
        m = self.metrics
        sel = (m.method == method) & (np.isclose(m.rho, rho)) & (m.tau == tau)
        if not sel.any():
            raise DataError(f"no metrics cell for {method} rho={rho} tau={tau}")
        return m[sel].iloc[0]


def run_study(config: ScenarioConfig, workers: int | None = None) -> StudyResult:
    """Full replication study with per-cell metrics against the oracle truth."""
    truths: dict[tuple[float, int], TruthTable] = {}
    for rho in config.rho_grid:
        for tau in config.taus:
            truths[(rho, tau)] = cached_truth(
                replace(config.dgp, rho=rho), tau, config.truth_reps
            )

    results = _run_replicates(config, workers)

    rep_rows = []
    for rho_idx, rep, rows in results:
        rho = config.rho_grid[rho_idx]
        for tau, method, est, se, failed in rows:
            truth = truths[(rho, tau)].drmst
            has_ci = not (math.isnan(se) or math.isnan(est))
            lo = est - Z95 * se if has_ci else float("nan")
            hi = est + Z95 * se if has_ci else float("nan")
            covered = bool(lo <= truth <= hi) if has_ci else False
            rep_rows.append({
                "method": method, "rho": rho, "tau": tau,
                "specification": config.specification,
                "regime": config.dgp.availability,
                "rep": rep, "seed": f"{config.master_seed}:{rho_idx}:{rep}",
                "estimate": est, "se": se, "ci_lo": lo, "ci_hi": hi,
                "covered": covered, "failed": failed,
            })
    replicates = pd.DataFrame(rep_rows, columns=REPLICATE_COLUMNS)

    metric_rows = []
    for rho in config.rho_grid:
        for tau in config.taus:
            truth = truths[(rho, tau)]
            for method in config.methods:
                cell = replicates[
                    (replicates.method == method)
                    & np.isclose(replicates.rho, rho)
                    & (replicates.tau == tau)
                ]
                ok = cell[~cell.failed]
                n_ok = len(ok)
                failures = int(cell.failed.sum())
                if n_ok == 0:
                    metric_rows.append(dict.fromkeys(METRICS_COLUMNS, float("nan")) | {
                        "method": method, "rho": rho, "tau": tau,
                        "specification": config.specification,
                        "regime": config.dgp.availability,
                        "reps": 0, "failures": failures, "flagged": True,
                    })
                    continue
                est = ok.estimate.to_numpy()
                stats = cell_metrics(est, truth.drmst)
                if config.compute_se:
                    with_se = ok[~ok.se.isna()]
                    coverage = float(with_se.covered.mean()) if len(with_se) else float("nan")
                    mean_se = float(with_se.se.mean()) if len(with_se) else float("nan")
                    cov_se = (
                        math.sqrt(max(coverage * (1 - coverage), 0.0) / len(with_se))
                        if len(with_se) else float("nan")
                    )
                else:
                    coverage = mean_se = cov_se = float("nan")
                metric_rows.append({
                    "method": method, "rho": rho, "tau": tau,
                    "specification": config.specification,
                    "regime": config.dgp.availability,
                    "truth": truth.drmst, "truth_mc_se": truth.drmst_mc_se,
                    **stats, "coverage": coverage, "coverage_mc_se": cov_se,
                    "mean_se": mean_se, "reps": n_ok, "failures": failures,
                    "flagged": failures > 0.05 * config.replications,
                })
    metrics = pd.DataFrame(metric_rows, columns=METRICS_COLUMNS)
    return StudyResult(metrics=metrics, replicates=replicates, truths=truths, config=config)


# ---------------------------------------------------------------------------
# Standard-error ratio study


def se_ratio_study(
    config: ScenarioConfig,
    regimes: Sequence[str] = ("deterministic", "stochastic"),
    specifications: Sequence[str] = ("correct",),
    pairs: Sequence[str] = ("DR",),
    workers: int | None = None,
) -> pd.DataFrame:
    """Mean concurrent-only / pooled SE ratio per (regime, specification, rho).

    A ratio above 1 means pooling bought precision. The DR pair uses influence
    -function SEs; the OR pair needs bootstrap SEs and is correspondingly
    slower.
    """
    frames = []
    for regime in regimes:
        for spec in specifications:
            methods: list[str] = []
            for pair in pairs:
                methods += [f"{pair}_oc", f"{pair}_ac"]
            sub = replace(
                config,
                dgp=replace(config.dgp, availability=regime),
                specification=spec,
                methods=tuple(methods),
                compute_se=True,
            )
            result = run_study(sub, workers=workers)
            reps = result.replicates
            for rho in sub.rho_grid:
                for tau in sub.taus:
                    for pair in pairs:
                        cell = reps[np.isclose(reps.rho, rho) & (reps.tau == tau)]
                        oc = cell[cell.method == f"{pair}_oc"].set_index("rep")
                        ac = cell[cell.method == f"{pair}_ac"].set_index("rep")
                        joined = oc.join(ac, lsuffix="_oc", rsuffix="_ac")
                        good = (~joined.failed_oc) & (~joined.failed_ac) & \
                            joined.se_oc.notna() & joined.se_ac.notna()
                        ratios = (joined.se_oc / joined.se_ac)[good].to_numpy()
                        frames.append({
                            "regime": regime, "specification": spec, "rho": rho,
                            "tau": tau, "pair": pair,
                            "mean_ratio": float(ratios.mean()) if ratios.size else float("nan"),
                            "mc_se": float(ratios.std(ddof=1) / math.sqrt(ratios.size))
                            if ratios.size > 1 else float("nan"),
                            "reps": int(ratios.size),
                            "failures": int((~good).sum()),
                        })
    return pd.DataFrame(frames, columns=RATIO_COLUMNS)


# ---------------------------------------------------------------------------
# Pooling-assumption x specification grid


def a7_scenario_grid(
    config: ScenarioConfig,
    gamma: float = 0.5,
    methods: Sequence[str] = ("OR_ac", "OR_oc"),
    workers: int | None = None,
) -> pd.DataFrame:
    """2x2 grid: pooling assumption holds (gamma=0) or fails (gamma) crossed
    with correct/misspecified working models.

    Reports each method's bias against the concurrent-population truth of the
    generating process (which includes the injected availability term), in
    Monte Carlo standard error units.
    """
    rows = []
    for cell_gamma in (0.0, gamma):
        for spec in ("correct", "misspecified"):
            sub = replace(
                config,
                dgp=replace(config.dgp, a7_gamma=cell_gamma),
                specification=spec,
                methods=tuple(methods),
                compute_se=False,
            )
            result = run_study(sub, workers=workers)
            for rho in sub.rho_grid:
                for tau in sub.taus:
                    truth = result.truths[(rho, tau)]
                    for method in methods:
                        cell = result.replicates[
                            (result.replicates.method == method)
                            & np.isclose(result.replicates.rho, rho)
                            & (result.replicates.tau == tau)
                        ]
                        ok = cell[~cell.failed]
                        est = ok.estimate.to_numpy()
                        mc_se = float(est.std(ddof=1) / math.sqrt(len(est))) if len(est) > 1 else float("nan")
                        bias = float(est.mean() - truth.drmst) if len(est) else float("nan")
                        rows.append({
                            "pooling_assumption": "holds" if cell_gamma == 0.0 else "violated",
                            "gamma": cell_gamma, "specification": spec,
                            "method": method, "rho": rho, "tau": tau,
                            "truth": truth.drmst, "mean_estimate": float(est.mean()) if len(est) else float("nan"),
                            "bias": bias, "mc_se": mc_se,
                            "abs_z": abs(bias) / mc_se if mc_se and not math.isnan(mc_se) and mc_se > 0 else float("nan"),
                            "reps": int(len(est)),
                        })
    return pd.DataFrame(rows, columns=A7_COLUMNS)


# ---------------------------------------------------------------------------
# Emission


def emit_results(frame: pd.DataFrame, path, manifest: dict | None = None) -> Path:
    """Write a result table as CSV with a stable column order, plus a manifest."""
    if frame is None or len(frame) == 0:
        raise DataError("refusing to write an empty results table")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    if manifest is not None:
        manifest_path = path.with_suffix(".manifest.json")
        manifest = {"version": _version, **manifest}
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def parse_results(path) -> pd.DataFrame:
    return pd.read_csv(path)
