"""Command line front end.

Subcommands: validate, estimate, placebo, diagnose, simulate, report.
A JSON config file can pre-set any flag (keys are the flag names with
underscores); explicit command line flags win. Exit codes: 0 success,
2 validation or configuration problem, 3 estimation failure, 4 a strict
mode diagnostic hard-fail.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import cim, did, hcw, inference, lfm, scm, sim
from .effects import EffectEstimate
from .errors import CausalPanelError, EstimationError, PanelValidationError
from .panel import PanelDataset, load_csv, treated_average

METHODS = ("did", "lfm", "scm", "hcw", "di", "cim")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ESTIMATION = 3
EXIT_STRICT = 4


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and (obj != obj):  # NaN has no JSON spelling
        return None
    return obj


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".6g")


def _write_effects(out: Path, est: EffectEstimate, stem: str = "effects") -> None:
    records = est.to_records()
    payload = {
        "method": est.method,
        "level": est.level,
        "average_effect": est.mean_effect(),
        "average_reduction": est.mean_reduction(),
        "cells": records,
        "details": _json_safe(dict(est.details)),
    }
    _write_json(out / f"{stem}.json", payload)
    # tau_hat is written as the exact decimal difference of the printed
    # y and y0_hat fields, so the identity tau = y - y0 survives rounding
    # and holds for anyone re-deriving it from the CSV itself
    lines = ["unit,time,y,y0_hat,tau_hat,lower,upper"]
    for rec in records:
        y_s = _fmt(rec["y"])
        y0_s = _fmt(rec["y0_hat"])
        tau_s = str(Decimal(y_s) - Decimal(y0_s))
        lines.append(
            ",".join(
                [
                    str(rec["unit"]),
                    str(rec["time"]),
                    y_s,
                    y0_s,
                    tau_s,
                    _fmt(rec["lower"]),
                    _fmt(rec["upper"]),
                ]
            )
        )
    (out / f"{stem}.csv").write_text("\n".join(lines) + "\n")


def _schema_from_args(args) -> dict:
    schema = {
        "unit": args.unit_col,
        "time": args.time_col,
        "outcome": args.outcome_col,
    }
    if args.covariates:
        schema["covariates"] = [c for c in args.covariates.split(",") if c]
    return schema


def _load_panel(args) -> PanelDataset:
    if not args.data:
        raise PanelValidationError("--data is required")
    if not args.treated:
        raise PanelValidationError("--treated is required")
    treated = [u.strip() for u in args.treated.split(",") if u.strip()]
    if args.t1 is None:
        raise PanelValidationError("--t1 (last pre-intervention time label) is required")
    return load_csv(args.data, _schema_from_args(args), treated=treated, t1=args.t1)


def _single_treated_panel(panel: PanelDataset, note: list) -> PanelDataset:
    if panel.n2 == 1:
        return panel
    note.append(
        f"averaged {panel.n2} treated units into one series before fitting"
    )
    return treated_average(panel)


def _estimate(panel: PanelDataset, method: str, args, notes: list):
    if method == "did":
        fit = did.fit_did(panel)
        return did.estimate_effects(fit), fit
    if method == "lfm":
        J = "auto" if args.factors in (None, "auto") else int(args.factors)
        fe = tuple(f for f in args.fe.split(",") if f) if args.fe else ()
        est = lfm.estimate_effects_xu(
            panel, J=J, fe=fe, bootstrap=args.bootstrap, seed=args.seed
        )
        return est, None
    if method == "scm":
        features = _parse_features(args.features)
        if panel.n2 > 1 and args.multi == "pooled":
            return scm.acemoglu_pooled_effect(panel, features=features), None
        single = _single_treated_panel(panel, notes)
        if args.optimize_v:
            _, fit = scm.optimize_v(
                single, 0, features, restarts=args.restarts, seed=args.seed
            )
        else:
            fit = scm.fit_weights(single, 0, features)
        return scm.predict_counterfactual(fit), fit
    if method == "hcw":
        single = _single_treated_panel(panel, notes)
        if args.select_controls:
            subset, fit = hcw.select_controls_hcw(single)
            notes.append(
                "selected controls: "
                + ",".join(str(single.control_labels[i]) for i in subset)
            )
        else:
            fit = hcw.fit_hcw(single)
        return hcw.estimate_effects(fit), fit
    if method == "di":
        single = _single_treated_panel(panel, notes)
        rho = None if args.cv else args.rho
        fit = hcw.fit_di(single, rho=rho, delta=args.delta, phi=args.phi)
        return hcw.estimate_effects(fit), fit
    if method == "cim":
        single = _single_treated_panel(panel, notes)
        spec = cim.BstsSpec(
            include_slope=args.slope,
            spike_slab=args.spike_slab,
            iterations=args.iters,
            burn_in=args.burn,
            chains=args.chains,
            seed=args.seed,
        )
        posterior = cim.fit_cim(single, 0, spec, threads=args.threads)
        return cim.estimate_effects(posterior, level=args.level), posterior
    raise PanelValidationError(f"unknown method {method!r}")


def _parse_features(raw: str):
    if raw in ("full", "means"):
        return raw
    labels = [s for s in raw.split(",") if s]
    out = []
    for s in labels:
        try:
            out.append(int(s))
        except ValueError:
            try:
                out.append(float(s))
            except ValueError:
                out.append(s)
    return out


def _diagnostics(panel: PanelDataset, method: str, args, est, fit) -> dict:
    diag: dict = {"method": method}
    strict_fail = None
    if method == "did":
        trend = did.parallel_trends_series(panel)
        diag["parallel_trends"] = {
            "times": list(trend.times),
            "gap": trend.gap,
            "slope": trend.slope,
            "slope_se": trend.slope_se,
            "p_value": trend.p_value,
        }
        if trend.p_value == trend.p_value and trend.p_value < 0.01:
            strict_fail = (
                f"pre-period gap trend rejects parallel trends (p={trend.p_value:.3g})"
            )
    elif method == "scm" and fit is not None:
        hull = scm.convex_hull_check(fit.panel, fit.treated)
        diag["convex_hull"] = {
            "inside": hull.inside,
            "violations": list(hull.violations),
        }
        diag["kkt_residual"] = fit.kkt_residual
        diag["nonunique_donors"] = fit.nonunique
        diag["weights"] = dict(
            zip(map(str, fit.panel.control_labels), fit.w.tolist())
        )
        if not hull.inside:
            strict_fail = (
                f"treated unit outside the donor range at {list(hull.violations)}"
            )
    elif method == "lfm":
        J = est.details.get("J", 0)
        diag["J"] = J
        diag["converged"] = est.details.get("converged")
        if "cv_mse" in est.details:
            diag["cv_mse"] = est.details["cv_mse"]
        if J >= 1:
            fe = est.details.get("fe", ("unit", "time"))
            ffit = lfm.project_treated_loadings(lfm.fit_controls(panel, J, fe))
            try:
                check = lfm.loading_outlier_check(ffit)
                diag["loading_outliers"] = {
                    "distance_sq": check.distance_sq,
                    "threshold": check.threshold,
                    "flagged": check.flagged,
                }
                if bool(np.any(check.flagged)):
                    strict_fail = "treated loadings outside the control loading cloud"
            except CausalPanelError as exc:
                diag["loading_outliers"] = {"error": str(exc)}
    elif method in ("hcw", "di") and fit is not None:
        diag["r2"] = fit.r2
        diag["sigma2"] = fit.sigma2
        longrun = hcw.long_run_effect(est.tau_hat.ravel())
        diag["long_run"] = {
            "mean": longrun.mean,
            "se": longrun.se,
            "p_value": longrun.p_value,
            "ar_coef": longrun.ar_coef,
            "stationary": longrun.stationary,
        }
        if not longrun.stationary:
            strict_fail = "post-period effect series is nonstationary"
    elif method == "cim" and fit is not None:
        pre = cim.diagnose_fit(fit)
        diag["pre_fit"] = {"mse": pre.mse, "mean_width": pre.mean_width}
        diag["psrf"] = fit.psrf
        diag["convergence_flag"] = fit.convergence_flag
        if fit.convergence_flag:
            strict_fail = "split-chain PSRF above 1.2; chains disagree"
    diag["strict_fail"] = strict_fail
    return diag


def _summary_lines(args, extra: dict) -> list:
    lines = ["configuration:"]
    skip = {"func", "config"}
    for key in sorted(vars(args)):
        if key in skip:
            continue
        lines.append(f"  {key} = {getattr(args, key)!r}")
    lines.append("results:")
    for key, val in extra.items():
        lines.append(f"  {key} = {val}")
    return lines


def cmd_validate(args) -> int:
    panel = _load_panel(args)
    print(f"panel ok: n={panel.n} units (n1={panel.n1} controls), T={panel.T} periods")
    print(f"pre-period: {panel.T1} periods through {panel.pre_times[-1]!r}")
    print(f"treated: {', '.join(map(str, panel.treated_labels))}")
    return EXIT_OK


def _write_gap_series(out: Path, panel: PanelDataset, stem: str = "parallel_trends") -> None:
    trend = did.parallel_trends_series(panel)
    lines = ["time,gap"]
    for t, g in zip(trend.times, trend.gap):
        lines.append(f"{t},{_fmt(g)}")
    (out / f"{stem}.csv").write_text("\n".join(lines) + "\n")


def _write_weights(out: Path, fit) -> None:
    lines = ["control_label,weight"]
    for lab, w in zip(fit.panel.control_labels, fit.w):
        lines.append(f"{lab},{_fmt(w)}")
    (out / "weights.csv").write_text("\n".join(lines) + "\n")


def cmd_estimate(args) -> int:
    panel = _load_panel(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    notes: list = []
    est, fit = _estimate(panel, args.method, args, notes)
    diag_panel = fit.panel if hasattr(fit, "panel") and fit is not None else panel
    diag = _diagnostics(diag_panel, args.method, args, est, fit)
    _write_effects(out, est)
    _write_json(out / "diagnostics.json", diag)
    if args.method == "did":
        _write_gap_series(out, panel)
    if args.method == "scm" and fit is not None:
        _write_weights(out, fit)
    if args.method == "cim" and args.draws_csv and fit is not None:
        header = ",".join(str(t) for t in panel.post_times)
        rows = "\n".join(
            ",".join(_fmt(v) for v in row) for row in fit.y0
        )
        (out / "draws.csv").write_text(header + "\n" + rows + "\n")
    extra = {
        "average_effect": f"{est.mean_effect():.6f}",
        "average_reduction": f"{est.mean_reduction():.6f}",
    }
    for note in notes:
        extra[f"note_{notes.index(note)}"] = note
    (out / "summary.txt").write_text("\n".join(_summary_lines(args, extra)) + "\n")
    print(f"{args.method}: average effect {est.mean_effect():.4f} "
          f"(average reduction {est.mean_reduction():.4f})")
    if args.strict and diag.get("strict_fail"):
        print(f"strict: {diag['strict_fail']}", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


def _placebo_fit_fn(method: str, args):
    if method == "scm":
        features = _parse_features(args.features)

        def fn(p):
            return scm.predict_counterfactual(scm.fit_weights(p, 0, features))

        return fn
    if method == "hcw":
        return lambda p: hcw.estimate_effects(hcw.fit_hcw(p))
    if method == "di":
        return lambda p: hcw.estimate_effects(
            hcw.fit_di(p, rho=args.rho, delta=args.delta, phi=args.phi)
        )
    if method == "did":
        return lambda p: did.estimate_effects(did.fit_did(p))
    if method == "lfm":
        J = "auto" if args.factors in (None, "auto") else int(args.factors)
        fe = tuple(f for f in args.fe.split(",") if f) if args.fe else ()
        return lambda p: lfm.estimate_effects_xu(p, J=J, fe=fe)
    raise PanelValidationError(f"placebo not supported for method {method!r}")


def cmd_placebo(args) -> int:
    panel = _load_panel(args)
    notes: list = []
    panel = _single_treated_panel(panel, notes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = inference.placebo_test(
        panel, _placebo_fit_fn(args.method, args), threads=args.threads
    )
    lines = ["unit,r"]
    for lab, r in zip(result.labels, result.r):
        lines.append(f"{lab},{_fmt(r)}")
    (out / "placebo.csv").write_text("\n".join(lines) + "\n")
    extra = {
        "r_treated": f"{result.r_treated:.6g}",
        "rank": f"{result.rank} of {result.n_tested}",
        "p_value": f"{result.p_value:.6g}",
        "excluded": ",".join(map(str, result.excluded)) or "none",
    }
    (out / "summary.txt").write_text("\n".join(_summary_lines(args, extra)) + "\n")
    print(
        f"placebo {args.method}: r={result.r_treated:.4g}, rank {result.rank} of "
        f"{result.n_tested}, p={result.p_value:.4g}"
    )
    return EXIT_OK


def cmd_diagnose(args) -> int:
    panel = _load_panel(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    notes: list = []
    est, fit = _estimate(panel, args.method, args, notes)
    diag_panel = fit.panel if hasattr(fit, "panel") and fit is not None else panel
    diag = _diagnostics(diag_panel, args.method, args, est, fit)
    _write_json(out / "diagnostics.json", diag)
    (out / "summary.txt").write_text(
        "\n".join(_summary_lines(args, {"strict_fail": diag.get("strict_fail")})) + "\n"
    )
    print(json.dumps(_json_safe(diag), indent=2, sort_keys=True))
    if args.strict and diag.get("strict_fail"):
        return EXIT_STRICT
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = sim.DgpSpec(
        family=args.dgp,
        n1=args.n1,
        n2=args.n2,
        T1=args.T1,
        T2=args.T2,
        J=args.J,
        K=args.K,
        noise_sd=args.noise_sd,
        effect=args.effect,
        effect_size=args.effect_size,
        seed=args.seed,
    )
    estimator = _sim_estimator(args.estimator, args)
    report = sim.bias_experiment(spec, estimator, replications=args.reps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "spec": _json_safe(vars(args)),
        "mean_bias": report.mean_bias,
        "mc_se": report.mc_se,
        "rmse": report.rmse,
        "coverage": report.coverage,
        "replications": report.replications,
        "failures": report.failures,
    }
    payload["spec"].pop("func", None)
    _write_json(out / "simulation.json", payload)
    (out / "summary.txt").write_text(
        "\n".join(
            _summary_lines(
                args,
                {
                    "mean_bias": f"{report.mean_bias:.6g}",
                    "mc_se": f"{report.mc_se:.6g}",
                    "rmse": f"{report.rmse:.6g}",
                    "coverage": report.coverage,
                    "failures": report.failures,
                },
            )
        )
        + "\n"
    )
    print(
        f"{args.estimator} on {args.dgp}: bias {report.mean_bias:.4g} "
        f"(mc se {report.mc_se:.4g}), rmse {report.rmse:.4g}"
    )
    return EXIT_OK


def _sim_estimator(name: str, args):
    if name == "did":
        return lambda p: did.estimate_effects(did.fit_did(p))
    if name == "lfm":
        J = args.factors if args.factors is not None else args.J
        return lambda p: lfm.estimate_effects_xu(p, J=int(J))
    if name == "scm":
        return lambda p: scm.predict_counterfactual(scm.fit_weights(p))
    if name == "hcw":
        return lambda p: hcw.estimate_effects(hcw.fit_hcw(p))
    if name == "di":
        return lambda p: hcw.estimate_effects(
            hcw.fit_di(p, rho=args.rho, delta=args.delta, phi=args.phi)
        )
    if name == "cim":
        spec = cim.BstsSpec(iterations=args.iters, burn_in=args.burn, seed=args.seed)
        return lambda p: cim.estimate_effects(cim.fit_cim(p, 0, spec))
    raise PanelValidationError(f"unknown estimator {name!r}")


def cmd_report(args) -> int:
    panel = _load_panel(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    notes: list = []
    single = _single_treated_panel(panel, notes)
    rows = []
    for method in METHODS:
        est, fit = _estimate(panel, method, args, notes)
        _write_effects(out, est, stem=f"effects_{method}")
        rows.append((method, est.mean_effect(), est.mean_reduction()))
    placebo_lines = []
    for method in ("scm", "hcw"):
        result = inference.placebo_test(
            single, _placebo_fit_fn(method, args), threads=args.threads
        )
        lines = ["unit,r"]
        for lab, r in zip(result.labels, result.r):
            lines.append(f"{lab},{_fmt(r)}")
        (out / f"placebo_{method}.csv").write_text("\n".join(lines) + "\n")
        placebo_lines.append(
            f"  {method}: r={result.r_treated:.6g} rank {result.rank} of "
            f"{result.n_tested} p={result.p_value:.6g}"
        )
    _write_gap_series(out, panel)
    lines = ["unit,time,y"]
    for i, unit in enumerate(panel.unit_labels):
        for t, time in enumerate(panel.time_labels):
            lines.append(f"{unit},{time},{_fmt(panel.outcomes[i, t])}")
    (out / "outcomes.csv").write_text("\n".join(lines) + "\n")
    trend = did.parallel_trends_series(panel)
    summary = ["average post-period effects (tau_hat) and reductions (y0_hat - y):"]
    for method, eff, red in rows:
        summary.append(f"  {method:>4}: effect {eff:12.2f}   reduction {red:12.2f}")
    summary.append("placebo ratios:")
    summary.extend(placebo_lines)
    summary.append(
        f"pre-period gap trend: slope {trend.slope:.4g} (p={trend.p_value:.3g})"
    )
    for note in notes:
        summary.append(f"note: {note}")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--data", help="long-format CSV panel")
    p.add_argument("--treated", help="comma-separated treated unit labels")
    p.add_argument("--t1", help="label of the last pre-intervention period")
    p.add_argument("--unit-col", default="unit")
    p.add_argument("--time-col", default="time")
    p.add_argument("--outcome-col", default="outcome")
    p.add_argument("--covariates", default="",
                   help="comma-separated covariate column names")
    p.add_argument("--seed", type=int,
                   default=int(os.environ.get("CAUSALPANEL_SEED", "0")))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--strict", action="store_true",
                   help="exit 4 when a fit diagnostic hard-fails")
    p.add_argument("--out", default="causalpanel_out", help="output directory")


def _add_method_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="scm")
    p.add_argument("--level", type=float, default=0.95)
    # lfm
    p.add_argument("--factors", default="auto",
                   help='number of latent factors, or "auto" for CV')
    p.add_argument("--fe", default="unit,time",
                   help="additive effects for lfm: unit, time, both, or empty")
    p.add_argument("--bootstrap", type=int, default=0,
                   help="parametric bootstrap replications for lfm intervals")
    # scm
    p.add_argument("--features", default="full",
                   help='"full", "means", or comma-separated pre-period times')
    p.add_argument("--optimize-v", action="store_true",
                   help="nested search over feature importances")
    p.add_argument("--restarts", type=int, default=5,
                   help="random restarts for the importance search")
    p.add_argument("--multi", choices=("avg", "pooled"), default="avg",
                   help="several treated units: average first, or pool per-unit fits")
    # hcw / di
    p.add_argument("--select-controls", action="store_true",
                   help="exhaustive subset selection before the regression")
    p.add_argument("--cv", action="store_true",
                   help="pick the di penalties by cross-validation")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--phi", type=float, default=1.0)
    # cim
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--burn", type=int, default=2_000)
    p.add_argument("--chains", type=int, default=2)
    p.add_argument("--slope", action="store_true")
    p.add_argument("--spike-slab", action="store_true")
    p.add_argument("--draws-csv", action="store_true",
                   help="also write the posterior counterfactual draws")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalpanel",
        description="counterfactual estimation for panel data with few treated units",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a panel CSV")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("estimate", help="fit one estimator and write effects")
    _add_common(p)
    _add_method_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("placebo", help="placebo ratios over the donor pool")
    _add_common(p)
    _add_method_options(p)
    p.set_defaults(func=cmd_placebo)

    p = sub.add_parser("diagnose", help="fit diagnostics for one estimator")
    _add_common(p)
    _add_method_options(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="Monte Carlo bias of an estimator")
    _add_common(p)
    _add_method_options(p)
    p.add_argument("--dgp", choices=sim.FAMILIES, default="parallel_trends")
    p.add_argument("--estimator", choices=METHODS, default="did")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--n1", type=int, default=10)
    p.add_argument("--n2", type=int, default=1)
    p.add_argument("--T1", type=int, default=20)
    p.add_argument("--T2", type=int, default=5)
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--effect", choices=sim.EFFECTS, default="constant")
    p.add_argument("--effect-size", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="all estimators, placebos, and diagnostics")
    _add_common(p)
    _add_method_options(p)
    p.set_defaults(func=cmd_report)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PanelValidationError(f"bad config file: {exc}") from exc
        if not isinstance(config, dict):
            raise PanelValidationError("config file must hold a JSON object")
        # re-parse with config values as defaults so explicit flags win
        sub_argv = list(argv)
        for action in parser._subparsers._group_actions:  # noqa: SLF001
            subparser = action.choices.get(args.command)
            if subparser is None:
                continue
            known = {a.dest for a in subparser._actions}  # noqa: SLF001
            unknown = set(config) - known
            if unknown:
                raise PanelValidationError(
                    f"config keys not recognized: {sorted(unknown)}"
                )
            subparser.set_defaults(**config)
        args = parser.parse_args(sub_argv)
    return args


def main(argv: list | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
    except PanelValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PanelValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except CausalPanelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
