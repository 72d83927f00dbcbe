"""Panel renderers for the simulation-study and survival-curve tables.

Input schemas (column names must match the emitting toolkit exactly):

    metrics.csv   method,rho,tau,specification,regime,truth,truth_mc_se,bias,
                  bias_sq,variance,mse,coverage,coverage_mc_se,mean_se,reps,
                  failures,flagged
    se_ratios.csv regime,specification,rho,tau,pair,mean_ratio,mc_se,reps,failures
    curves.csv    arm,t,estimate,ci_lo,ci_hi,method

Missing cells (NaN) are rendered as line gaps, never interpolated. Rendering
is deterministic at a fixed matplotlib version: the SVG hash salt is pinned
and no timestamps are embedded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "platformsurv-figures"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

METRICS_REQUIRED = ("method", "rho", "tau", "specification", "bias_sq",
                    "variance", "mse", "coverage")
RATIO_REQUIRED = ("regime", "specification", "rho", "pair", "mean_ratio")
CURVES_REQUIRED = ("arm", "t", "estimate", "ci_lo", "ci_hi")

METRIC_PANELS = (("bias_sq", "Bias$^2$"), ("variance", "Variance"),
                 ("mse", "MSE"), ("coverage", "95% CI coverage"))

METHOD_STYLE = {
    "OR_oc": {"color": "#1f77b4", "marker": "o"},
    "OR_ac": {"color": "#d62728", "marker": "s"},
    "DR_oc": {"color": "#2ca02c", "marker": "^"},
    "DR_ac": {"color": "#9467bd", "marker": "v"},
    "naive": {"color": "#7f7f7f", "marker": "x"},
}
PAIR_STYLE = {
    "DR": {"color": "#2ca02c", "marker": "^"},
    "OR": {"color": "#1f77b4", "marker": "o"},
}
ARM_STYLE = {1: {"color": "#2ca02c", "label": "treated"},
             0: {"color": "#7f7f7f", "label": "control"}}


class SchemaMismatch(ValueError):
    """Input CSV does not carry the documented columns."""


@dataclass
class FigureSpec:
    """What to render: inputs, output location, and format."""

    input_csv: Path
    out: Path
    fmt: str = "svg"
    dpi: int = 150
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_csv = Path(self.input_csv)
        self.out = Path(self.out)
        if self.fmt not in ("svg", "png"):
            raise ValueError(f"format must be svg or png, got {self.fmt!r}")


def _load(spec: FigureSpec, required) -> pd.DataFrame:
    frame = pd.read_csv(spec.input_csv)
    if frame.empty:
        raise SchemaMismatch(f"{spec.input_csv} holds no rows; refusing to render")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaMismatch(
            f"{spec.input_csv} lacks required columns: {', '.join(missing)}"
        )
    return frame


def _save(fig, spec: FigureSpec, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {"metadata": {"Date": None}} if spec.fmt == "svg" else {}
    fig.savefig(path, format=spec.fmt, dpi=spec.dpi, **kwargs)
    plt.close(fig)
    return path


def _method_style(spec: FigureSpec, key: str) -> dict:
    return spec.style.get(key) or METHOD_STYLE.get(key) or {"marker": "o"}


def render_metrics_panel(spec: FigureSpec) -> list[Path]:
    """Four-metric grid (bias^2, variance, MSE, coverage) against concurrent %.

    One image per (specification, tau) present in the table; every method in
    the table appears in the legend; a reference line marks nominal 0.95
    coverage.
    """
    frame = _load(spec, METRICS_REQUIRED)
    outputs = []
    for (specification, tau), group in frame.groupby(["specification", "tau"]):
        fig, axes = plt.subplots(2, 2, figsize=(9.5, 7.0), sharex=True)
        for ax, (column, label) in zip(axes.ravel(), METRIC_PANELS):
            for method, sub in group.groupby("method"):
                sub = sub.sort_values("rho")
                ax.plot(sub.rho * 100.0, sub[column], label=method,
                        **_method_style(spec, method))
            ax.set_ylabel(label)
            if column == "coverage":
                ax.axhline(0.95, color="black", linestyle="--", linewidth=0.9)
            ax.grid(alpha=0.25)
        for ax in axes[1]:
            ax.set_xlabel("Concurrent controls (%)")
        handles, labels = axes[0, 0].get_legend_handles_labels()
        fig.legend(handles, labels, loc="lower center", ncol=len(labels),
                   frameon=False)
        fig.suptitle(f"{specification} specification, tau={tau}")
        fig.tight_layout(rect=(0, 0.06, 1, 0.97))
        path = spec.out / f"metrics_{specification}_tau{tau}.{spec.fmt}"
        outputs.append(_save(fig, spec, path))
    return outputs


def render_ratio_panel(spec: FigureSpec) -> list[Path]:
    """SE-ratio panel: one row per availability regime, columns per
    specification, reference line at ratio 1."""
    frame = _load(spec, RATIO_REQUIRED)
    regimes = list(dict.fromkeys(frame.regime))
    specifications = list(dict.fromkeys(frame.specification))
    outputs = []
    for tau, tau_group in frame.groupby("tau") if "tau" in frame.columns else [(None, frame)]:
        fig, axes = plt.subplots(
            len(regimes), len(specifications),
            figsize=(4.8 * len(specifications), 3.2 * len(regimes)),
            sharex=True, sharey=True, squeeze=False,
        )
        for i, regime in enumerate(regimes):
            for j, specification in enumerate(specifications):
                ax = axes[i, j]
                cell = tau_group[(tau_group.regime == regime)
                                 & (tau_group.specification == specification)]
                for pair, sub in cell.groupby("pair"):
                    sub = sub.sort_values("rho")
                    style = spec.style.get(pair) or PAIR_STYLE.get(pair, {})
                    ax.plot(sub.rho * 100.0, sub.mean_ratio,
                            label=f"{pair}-oc / {pair}-ac", **style)
                ax.axhline(1.0, color="black", linestyle="--", linewidth=0.9)
                ax.set_title(f"{regime}, {specification}", fontsize=10)
                ax.grid(alpha=0.25)
                if i == len(regimes) - 1:
                    ax.set_xlabel("Concurrent controls (%)")
                if j == 0:
                    ax.set_ylabel("SE ratio")
        handles, labels = axes[0, 0].get_legend_handles_labels()
        fig.legend(handles, labels, loc="lower center", ncol=max(len(labels), 1),
                   frameon=False)
        fig.tight_layout(rect=(0, 0.08, 1, 1))
        suffix = f"_tau{tau}" if tau is not None else ""
        path = spec.out / f"se_ratio{suffix}.{spec.fmt}"
        outputs.append(_save(fig, spec, path))
    return outputs


def render_curve_bands(spec: FigureSpec) -> list[Path]:
    """Survival curves with pointwise confidence bands, one line per arm."""
    frame = _load(spec, CURVES_REQUIRED)
    method = frame.method.iloc[0] if "method" in frame.columns else ""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for arm, sub in frame.groupby("arm"):
        sub = sub.sort_values("t")
        style = ARM_STYLE.get(int(arm), {"label": f"arm {arm}"})
        ax.step(sub.t, sub.estimate, where="post", color=style.get("color"),
                label=style.get("label", f"arm {arm}"))
        ax.fill_between(sub.t, sub.ci_lo, sub.ci_hi, step="post",
                        color=style.get("color"), alpha=0.2, linewidth=0)
    ax.set_xlabel("Period")
    ax.set_ylabel("Survival")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.25)
    ax.legend(frameon=False, title=method or None)
    fig.tight_layout()
    path = spec.out / f"curves.{spec.fmt}"
    return [_save(fig, spec, path)]
