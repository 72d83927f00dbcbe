"""Command-line interface.

Subcommands: estimate (analyze a subject-level CSV), simulate (write one
generated dataset), study (full metrics study), ratio-study (pooling
efficiency SE ratios), a7-grid (pooling assumption x specification grid),
diagnose (mixture decomposition and risk-set ratios), truth (oracle values).

Configuration is JSON (--config) with command-line flags taking precedence.
Every run writes a manifest echoing the fully resolved configuration; outputs
carry no timestamps, so identical invocations produce identical bytes.

Exit codes: 2 configuration error, 3 data error, 4 numerical failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import TrialSchema, load_trial_csv
from .dgp import DgpConfig, gen_trial, misspecify, truth_oracle
from .diagnostics import StratumSpec, ess_heuristic, mixture_decomposition
from .errors import ConfigError, DataError, NumericalError, PlatformSurvError
from .estimators import METHODS, estimate, eif_theta, fit_nuisances, pointwise_bands
from .harness import (
    ScenarioConfig,
    a7_scenario_grid,
    emit_results,
    run_study,
    se_ratio_study,
)

AVAILABILITY_FLAGS = {"det": "deterministic", "stoch": "stochastic"}
SPEC_FLAGS = {"correct": "correct", "misspec": "misspecified"}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def _scenario_from_args(args) -> ScenarioConfig:
    cfg = _load_config(args.config)
    dgp_dict = cfg.pop("dgp", {})
    scenario = ScenarioConfig.from_dict({"dgp": dgp_dict, **cfg})
    dgp = scenario.dgp
    if args.n is not None:
        dgp = replace(dgp, n=args.n)
    if args.availability is not None:
        dgp = replace(dgp, availability=AVAILABILITY_FLAGS[args.availability])
    overrides = {"dgp": dgp}
    if args.rho is not None:
        overrides["rho_grid"] = tuple(args.rho)
    if args.reps is not None:
        overrides["replications"] = args.reps
    if args.tau is not None:
        overrides["taus"] = tuple(args.tau)
    if args.methods is not None:
        overrides["methods"] = tuple(args.methods)
    if args.spec is not None:
        overrides["specification"] = SPEC_FLAGS[args.spec]
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.bootstrap_b is not None:
        overrides["bootstrap_b"] = args.bootstrap_b
    if args.workers is not None:
        overrides["workers"] = args.workers
    if getattr(args, "truth_reps", None) is not None:
        overrides["truth_reps"] = args.truth_reps
    if getattr(args, "no_se", False):
        overrides["compute_se"] = False
    return replace(scenario, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, scenario: ScenarioConfig | None = None, extra: dict | None = None) -> dict:
    # out/workers are execution details: they must not change artifact bytes
    manifest = {"command": args.command, "argv_overrides": {
        k: v for k, v in vars(args).items()
        if k not in ("func", "command", "out", "workers") and v is not None
    }}
    if scenario is not None:
        manifest["config"] = scenario.to_dict()
    if extra:
        manifest.update(extra)
    return manifest


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_estimate(args) -> int:
    schema_cfg = _load_config(args.schema) if args.schema else {}
    schema = TrialSchema.from_dict(schema_cfg) if schema_cfg else TrialSchema(
        covariates=tuple(args.covariates or ()),
    )
    if args.n_periods is None:
        raise ConfigError("--n-periods is required for estimate")
    dataset = load_trial_csv(args.data, schema, n_periods=args.n_periods)
    methods = tuple(args.methods or METHODS)
    tau = args.tau[0] if args.tau else dataset.n_periods
    availability = "fit" if args.availability == "stoch" else None
    rows = []
    for method in methods:
        report = estimate(
            dataset, tau, method,
            adjust=tuple(args.adjust) if args.adjust else None,
            availability=availability if method.startswith("DR") else None,
            n_boot=args.bootstrap_b or 200,
            seed=args.seed or 0,
        )
        rows.append(report.to_dict())

    import pandas as pd

    frame = pd.DataFrame(rows)
    out = _out_dir(args)
    emit_results(frame, out / "estimates.csv",
                 manifest=_manifest(args, extra={"schema": schema_cfg,
                                                 "n_periods": args.n_periods}))
    header = f"{'method':8s} {'estimate':>10s} {'se':>8s} {'95% CI':>20s} {'p':>8s}"
    print(header)
    for r in rows:
        ci = f"({r['ci_lo']:.3f}, {r['ci_hi']:.3f})"
        print(f"{r['method']:8s} {r['estimate']:10.4f} {r['se']:8.4f} {ci:>20s} {r['p_value']:8.4f}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    dgp = DgpConfig.from_dict(cfg.get("dgp", cfg)) if cfg else DgpConfig()
    if args.n is not None:
        dgp = replace(dgp, n=args.n)
    if args.rho is not None:
        dgp = replace(dgp, rho=args.rho[0])
    if args.availability is not None:
        dgp = replace(dgp, availability=AVAILABILITY_FLAGS[args.availability])
    if args.seed is not None:
        dgp = replace(dgp, seed=args.seed)
    trial = gen_trial(dgp)
    dataset = trial.dataset
    if args.spec == "misspec":
        dataset = misspecify(dataset, 2.0, seed=dgp.seed)
    out = _out_dir(args)
    path = out / "dataset.csv"
    dataset.to_csv(path)
    manifest = _manifest(args, extra={"dgp": dgp.to_dict(),
                                      "threshold": trial.threshold,
                                      "outputs": ["dataset.csv"]})
    (out / "dataset.manifest.json").write_text(
        json.dumps({"version": __version__, **manifest}, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {path} ({len(dataset)} subjects)")
    return 0


def _cmd_study(args) -> int:
    scenario = _scenario_from_args(args)
    result = run_study(scenario, workers=scenario.workers)
    out = _out_dir(args)
    emit_results(result.metrics, out / "metrics.csv", manifest=_manifest(args, scenario))
    emit_results(result.replicates, out / "replicates.csv")
    print(f"wrote {out / 'metrics.csv'} ({len(result.metrics)} cells)", file=sys.stderr)
    return 0


def _cmd_ratio_study(args) -> int:
    scenario = _scenario_from_args(args)
    regimes = [AVAILABILITY_FLAGS[r] for r in (args.regimes or ["det", "stoch"])]
    specs = [SPEC_FLAGS[s] for s in (args.specifications or ["correct"])]
    frame = se_ratio_study(scenario, regimes=regimes, specifications=specs,
                           pairs=tuple(args.pairs or ("DR",)), workers=scenario.workers)
    out = _out_dir(args)
    emit_results(frame, out / "se_ratios.csv", manifest=_manifest(args, scenario))
    print(f"wrote {out / 'se_ratios.csv'}", file=sys.stderr)
    return 0


def _cmd_a7_grid(args) -> int:
    scenario = _scenario_from_args(args)
    frame = a7_scenario_grid(scenario, gamma=args.gamma, workers=scenario.workers)
    out = _out_dir(args)
    emit_results(frame, out / "a7_grid.csv", manifest=_manifest(args, scenario))
    print(f"wrote {out / 'a7_grid.csv'}", file=sys.stderr)
    return 0


def _cmd_diagnose(args) -> int:
    if args.data:
        schema_cfg = _load_config(args.schema) if args.schema else {}
        schema = TrialSchema.from_dict(schema_cfg) if schema_cfg else TrialSchema(
            covariates=tuple(args.covariates or ()),
        )
        if args.n_periods is None:
            raise ConfigError("--n-periods is required with --data")
        dataset = load_trial_csv(args.data, schema, n_periods=args.n_periods)
    else:
        cfg = _load_config(args.config)
        dgp = DgpConfig.from_dict(cfg.get("dgp", cfg)) if cfg else DgpConfig()
        if args.seed is not None:
            dgp = replace(dgp, seed=args.seed)
        if args.availability is not None:
            dgp = replace(dgp, availability=AVAILABILITY_FLAGS[args.availability])
        dataset = gen_trial(dgp).dataset
    table = dataset.expand()
    mixture = mixture_decomposition(table, StratumSpec())
    ess = ess_heuristic(table)
    out = _out_dir(args)
    emit_results(mixture.to_frame(), out / "mixture.csv", manifest=_manifest(args))
    emit_results(ess.to_frame(), out / "ess.csv")
    evaluable = [r for r in mixture.rows if r.evaluable]
    print(f"mixture strata: {len(mixture.rows)} ({len(evaluable)} evaluable, "
          f"{sum(r.flagged for r in evaluable)} flagged)")
    return 0


def _cmd_truth(args) -> int:
    cfg = _load_config(args.config)
    dgp = DgpConfig.from_dict(cfg.get("dgp", cfg)) if cfg else DgpConfig()
    if args.rho is not None:
        dgp = replace(dgp, rho=args.rho[0])
    if args.availability is not None:
        dgp = replace(dgp, availability=AVAILABILITY_FLAGS[args.availability])
    tau = args.tau[0] if args.tau else 8
    truth = truth_oracle(dgp, tau, reps=args.truth_reps or 1_000_000,
                         seed=args.seed or 0)

    import pandas as pd

    rows = [{"t": t, "theta1": truth.theta1[t], "theta0": truth.theta0[t],
             "theta1_mc_se": truth.theta_mc_se1[t], "theta0_mc_se": truth.theta_mc_se0[t]}
            for t in range(tau + 1)]
    out = _out_dir(args)
    emit_results(pd.DataFrame(rows), out / "truth_curves.csv",
                 manifest=_manifest(args, extra={
                     "dgp": dgp.to_dict(), "tau": tau,
                     "drmst": truth.drmst, "drmst_mc_se": truth.drmst_mc_se,
                     "drmst_sum": truth.drmst_sum, "reps": truth.reps,
                 }))
    print(f"dRMST(tau={tau}) = {truth.drmst:.6f} (mc se {truth.drmst_mc_se:.6f})")
    return 0


def _cmd_curves(args) -> int:
    """Influence-based survival curves with pointwise bands, from a CSV."""
    schema_cfg = _load_config(args.schema) if args.schema else {}
    schema = TrialSchema.from_dict(schema_cfg) if schema_cfg else TrialSchema(
        covariates=tuple(args.covariates or ()),
    )
    if args.n_periods is None:
        raise ConfigError("--n-periods is required for curves")
    dataset = load_trial_csv(args.data, schema, n_periods=args.n_periods)
    tau = args.tau[0] if args.tau else dataset.n_periods
    variant = "ac" if (args.methods and "DR_ac" in args.methods) else "oc"
    table = dataset.expand()
    nuis, _ = fit_nuisances(table, tau, variant=variant,
                            adjust=tuple(args.adjust) if args.adjust else None)
    theta1, theta0, phi1, phi0 = eif_theta(table, nuis, tau, variant=variant)
    bands1 = pointwise_bands(theta1, phi1)
    bands0 = pointwise_bands(theta0, phi0)

    import pandas as pd

    rows = []
    for arm, theta, bands in ((1, theta1, bands1), (0, theta0, bands0)):
        for t in range(len(theta)):
            rows.append({"arm": arm, "t": t, "estimate": theta[t],
                         "ci_lo": bands[t, 0], "ci_hi": bands[t, 1],
                         "method": f"DR_{variant}"})
    out = _out_dir(args)
    emit_results(pd.DataFrame(rows), out / "curves.csv", manifest=_manifest(args))
    print(f"wrote {out / 'curves.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platformsurv",
        description="Causal survival estimation for platform trials with "
                    "concurrent and non-concurrent controls",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--workers", type=int, help="parallel worker count")
        p.add_argument("--tau", type=int, nargs="+", help="restriction horizon(s)")
        p.add_argument("--rho", type=float, nargs="+", help="concurrent fraction grid")
        p.add_argument("--reps", type=int, help="replications per cell")
        p.add_argument("--methods", nargs="+", choices=list(METHODS), help="estimators to run")
        p.add_argument("--spec", choices=list(SPEC_FLAGS), help="nuisance model specification")
        p.add_argument("--availability", choices=list(AVAILABILITY_FLAGS),
                       help="availability regime")
        p.add_argument("--bootstrap-b", type=int, help="bootstrap replicates for OR SEs")
        p.add_argument("--n", type=int, help="sample size per dataset")
        p.add_argument("--truth-reps", type=int, help="oracle draw count")
        if data:
            p.add_argument("--data", help="subject-level CSV")
            p.add_argument("--schema", help="JSON column-map for the CSV")
            p.add_argument("--covariates", nargs="+", help="numeric covariate columns")
            p.add_argument("--adjust", nargs="+", help="nuisance adjustment columns")
            p.add_argument("--n-periods", type=int, help="number of discrete periods")

    p = sub.add_parser("estimate", help="estimate contrasts on a dataset")
    common(p, data=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="generate one platform-trial dataset")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("study", help="run the full Monte Carlo study")
    common(p)
    p.add_argument("--no-se", action="store_true",
                   help="skip SE computation (variance-only studies)")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("ratio-study", help="concurrent-vs-pooled SE ratio study")
    common(p)
    p.add_argument("--regimes", nargs="+", choices=list(AVAILABILITY_FLAGS))
    p.add_argument("--specifications", nargs="+", choices=list(SPEC_FLAGS))
    p.add_argument("--pairs", nargs="+", choices=["DR", "OR"])
    p.set_defaults(func=_cmd_ratio_study)

    p = sub.add_parser("a7-grid", help="pooling assumption x specification grid")
    common(p)
    p.add_argument("--gamma", type=float, default=0.5,
                   help="availability term injected into the control hazard")
    p.set_defaults(func=_cmd_a7_grid)

    p = sub.add_parser("diagnose", help="pooling diagnostics on a dataset")
    common(p, data=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("truth", help="oracle estimand values for a configuration")
    common(p)
    p.set_defaults(func=_cmd_truth)

    p = sub.add_parser("curves", help="survival curves with pointwise bands")
    common(p, data=True)
    p.set_defaults(func=_cmd_curves)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 4
    except PlatformSurvError as exc:
        print(f"error: toolkit: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
