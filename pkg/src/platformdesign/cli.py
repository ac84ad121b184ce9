"""Command-line front end for the full design pipeline.

Subcommands: ``adjust`` (multiplicity thresholds), ``design`` (allocation +
sample size), ``estimate`` (preclinical CSV to design parameters), and
``simulate`` (the grid studies).  Flags override config-file values, which
override built-in defaults; the ``PLATFORMDESIGN_SEED`` environment variable
supplies a default seed when ``--seed`` is absent.

Exit codes: 0 success, 2 validation failure, 3 numerical failure (no root /
no convergence / precision), 4 search budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .allocation import DesignScenario, optimize_allocation
from .correlation import (
    ArmCorrelations,
    PlatformArms,
    SingleStudyArms,
    combo_arm,
    mono_arm,
    CONTROL,
    platform_z_correlation_matrix,
    test_stat_correlation,
)
from .errors import (
    BudgetExceeded,
    ConvergenceError,
    DomainError,
    InsufficientData,
    NotPositiveDefinite,
    ParseError,
    PrecisionUnreachable,
    RootBracketError,
    SchemaError,
    ZeroVariance,
)
from .estimation import estimate_trial, ingest_csv, table1_pipeline
from .multiplicity import (
    ErrorMetric,
    ThresholdResult,
    generalized_dunnett_threshold,
    platform_threshold,
)
from .mvnorm import CorrelationMatrix
from .power import find_sample_size
from .studies import (
    GridSpec,
    adjustment_grid,
    design_surface_grid,
    error_curves_grid,
    run_adjustment_comparison,
    run_design_surface,
    run_error_curves,
    run_threshold_curves,
    threshold_grid,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4

SEED_ENV_VAR = "PLATFORMDESIGN_SEED"

_VALIDATION_ERRORS = (DomainError, SchemaError, ParseError, InsufficientData, ZeroVariance)
_NUMERIC_ERRORS = (RootBracketError, ConvergenceError, NotPositiveDefinite, PrecisionUnreachable)

_METRIC_DEFAULT_ALPHA = {"fwer": 0.05, "fmer": 0.0025, "msfp": 0.000625, "mfwer": 0.05}


def _fmt(value, human: bool):
    """Render floats at 6 significant digits for humans, full precision for JSON."""
    if human and isinstance(value, float):
        return format(value, ".6g")
    return value


def _emit(report: dict, args) -> None:
    human = args.format == "human"
    if human:
        lines = [f"{key}: {_fmt(value, True)}" for key, value in report.items()]
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(report, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)


def _broadcast(values, k: int, flag: str) -> tuple[float, ...]:
    if values is None:
        return (0.0,) * k
    if len(values) == 1:
        return (float(values[0]),) * k
    _require(len(values) == k, f"{flag} needs 1 or {k} values, got {len(values)}")
    return tuple(float(v) for v in values)


def _metric_from_args(args) -> ErrorMetric:
    alpha = args.alpha if args.alpha is not None else _METRIC_DEFAULT_ALPHA[args.metric]
    _require(0.0 < alpha < 1.0, f"--alpha must lie in (0, 1), got {alpha}")
    if args.metric == "mfwer":
        m = args.m if args.m is not None else 2
        return ErrorMetric.mfwer(m, alpha, sided=args.sided or "two")
    _require(args.m is None, "--m only applies to --metric mfwer")
    _require(args.sided is None, "--sided only applies to --metric mfwer")
    return ErrorMetric(args.metric, alpha)


def _platform_arms_from_args(args, k: int) -> PlatformArms:
    _require(args.n_a is not None, "--n-a is required for arm-level correlation input")
    _require(args.n_b is not None, "--n-b is required for arm-level correlation input")
    _require(args.n_ab is not None, "--n-ab is required for arm-level correlation input")
    n_mono = _broadcast(args.n_b, k, "--n-b")
    n_combo = _broadcast(args.n_ab, k, "--n-ab")
    rho_ab_a = _broadcast(args.rho_ab_a, k, "--rho-ab-a")
    rho_ab_b = _broadcast(args.rho_ab_b, k, "--rho-ab-b")
    pairs = {}
    for i in range(1, k + 1):
        pairs[(combo_arm(i), CONTROL)] = rho_ab_a[i - 1]
        pairs[(combo_arm(i), mono_arm(i))] = rho_ab_b[i - 1]
    if args.rho_a_b is not None:
        for i, rho in enumerate(_broadcast(args.rho_a_b, k, "--rho-a-b"), start=1):
            pairs[(CONTROL, mono_arm(i))] = rho
    return PlatformArms(float(args.n_a), n_mono, n_combo, ArmCorrelations(k, pairs))


def cmd_adjust(args) -> int:
    metric = _metric_from_args(args)
    k = args.k or 1
    _require(k >= 1, "--k must be at least 1")
    if k == 1 and metric.kind != "mfwer":
        if args.rho is not None:
            _require(-1.0 <= args.rho <= 1.0, f"--rho must lie in [-1, 1], got {args.rho}")
            rho = args.rho
        else:
            arms = _platform_arms_from_args(args, 1)
            single = SingleStudyArms(
                arms.n_control, arms.n_mono[0], arms.n_combo[0],
                rho_ab_a=arms.correlations.get(combo_arm(1), CONTROL),
                rho_ab_b=arms.correlations.get(combo_arm(1), mono_arm(1)),
                rho_a_b=arms.correlations.get(CONTROL, mono_arm(1)),
            )
            rho = test_stat_correlation(single)
        result = generalized_dunnett_threshold(rho, metric)
        z_rho: object = rho
    else:
        if args.rho is not None:
            _require(k == 1, "--rho only describes a single substudy; use arm-level flags")
            z_corr = CorrelationMatrix.bivariate(args.rho)
        else:
            z_corr = platform_z_correlation_matrix(_platform_arms_from_args(args, k))
        result = platform_threshold(
            z_corr, metric, precision=args.precision, seed=args.seed,
            replications=args.replications,
        )
        z_rho = [[round(v, 12) for v in row] for row in z_corr.entries.tolist()]

    _emit(
        {
            "metric": metric.kind,
            "alpha": metric.alpha,
            "m": metric.m,
            "sided": metric.effective_sided,
            "z_correlation": z_rho,
            "critical_value": result.critical_value,
            "p_threshold": result.p_threshold,
            "achieved": result.achieved,
            "achieved_stderr": result.achieved_stderr,
        },
        args,
    )
    return EXIT_OK


def _design_threshold(scenario, alloc, metric, args) -> tuple[ThresholdResult, float | None]:
    """Exact bivariate solver for one substudy, randomized solver otherwise."""
    nominal = 1000.0
    if scenario.K == 1 and metric.kind != "mfwer":
        arms = SingleStudyArms(
            nominal * alloc.ratios[0], nominal * alloc.ratios[1], nominal * alloc.ratios[2],
            rho_ab_a=scenario.rho_combo_control[0],
            rho_ab_b=scenario.rho_combo_mono[0],
        )
        rho = test_stat_correlation(arms)
        return generalized_dunnett_threshold(rho, metric), rho
    counts = [nominal * r for r in alloc.ratios]
    arms = PlatformArms(
        counts[0],
        tuple(counts[1::2]),
        tuple(counts[2::2]),
        ArmCorrelations.from_scenario(scenario),
    )
    z_corr = platform_z_correlation_matrix(arms)
    result = platform_threshold(
        z_corr, metric, precision=args.precision, seed=args.seed,
        replications=args.replications,
    )
    return result, None


def cmd_design(args) -> int:
    k = args.k or 1
    _require(k >= 1, "--k must be at least 1")
    _require(args.delta is not None, "--delta is required")
    _require(args.synergy is not None, "--synergy is required")
    _require(0.0 < args.power < 1.0, f"--power must lie in (0, 1), got {args.power}")
    scenario = DesignScenario(
        delta=_broadcast(args.delta, k, "--delta"),
        synergy=_broadcast(args.synergy, k, "--synergy"),
        sigma2=args.sigma2,
        rho_combo_control=_broadcast(args.rho_ab_a, k, "--rho-ab-a"),
        rho_combo_mono=_broadcast(args.rho_ab_b, k, "--rho-ab-b"),
    )
    metric = _metric_from_args(args)
    alloc = optimize_allocation(scenario, seed=args.seed)
    threshold, z_rho = _design_threshold(scenario, alloc, metric, args)
    result = find_sample_size(
        scenario,
        alloc,
        threshold,
        args.power,
        N0=args.n0,
        n_sim=args.nsim,
        seed=args.seed,
        n_cap=args.n_cap,
    )
    report = {
        "metric": metric.kind,
        "alpha": metric.alpha,
        "allocation": [round(r, 12) for r in alloc.ratios],
        "arm_counts": list(result.arm_counts),
        "z_rho": z_rho,
        "critical_value": threshold.critical_value,
        "p_threshold": threshold.p_threshold,
        "n_star": result.n_star,
        "achieved_power": result.achieved_power,
        "target_power": args.power,
        "seed": args.seed,
    }
    _emit(report, args)
    return EXIT_OK


def cmd_estimate(args) -> int:
    _require(args.input is not None, "--input is required")
    table = ingest_csv(
        args.input,
        model_col=args.model_col,
        treatment_col=args.treatment_col,
        response_col=args.response_col,
        delimiter=args.delimiter,
        duplicates=args.duplicates,
    )
    if args.roles:
        with open(args.roles, encoding="utf-8") as handle:
            roles = json.load(handle)
        _require(isinstance(roles, list), "--roles file must hold a JSON array of trials")
        trials = [(r["drug_a"], r["drug_b"], r["combo"]) for r in roles]
    else:
        _require(
            args.drug_a is not None and args.drug_b is not None and args.combo is not None,
            "--drug-a, --drug-b and --combo are required (or pass --roles)",
        )
        trials = [(args.drug_a, args.drug_b, args.combo)]

    reports = []
    for drug_a, drug_b, combo in trials:
        estimates = estimate_trial(
            table,
            drug_a,
            drug_b,
            combo,
            min_triples=args.min_triples,
            higher_is_better=not args.lower_is_better,
        )
        entry = json.loads(estimates.to_json())
        if args.with_thresholds and not estimates.screened_out:
            summary = table1_pipeline(
                estimates, replications=args.replications, seed=args.seed
            )
            entry["z_rho"] = summary.rho
            entry["unadjusted"] = {
                "fwer": summary.unadjusted.fwer,
                "fmer": summary.unadjusted.fmer,
                "msfp": summary.unadjusted.msfp,
            }
            entry["p_thresholds"] = {
                kind: t.p_threshold for kind, t in summary.thresholds.items()
            }
        reports.append(entry)

    payload = reports[0] if len(reports) == 1 and not args.roles else reports
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_STUDIES = ("error-curves", "adjustments", "thresholds", "design-surface")


def cmd_simulate(args) -> int:
    _require(args.study in _STUDIES, f"--study must be one of {_STUDIES}")
    swept = (args.swept or "rho-ab-b").replace("-", "_")
    _require(
        swept in ("rho_ab_b", "rho_ab_a"),
        "--swept must be rho-ab-b or rho-ab-a",
    )
    if args.study == "error-curves":
        grid = error_curves_grid(
            swept=swept, fixed_rho=args.fixed_rho, replications=args.replications,
            seed=args.seed, start=args.start if args.start is not None else 0.05,
            stop=args.stop if args.stop is not None else 0.95,
            step=args.step if args.step is not None else 0.01,
        )
        table = run_error_curves(grid)
    elif args.study == "adjustments":
        grid = adjustment_grid(
            swept=swept, fixed_rho=args.fixed_rho, replications=args.replications,
            seed=args.seed, start=args.start if args.start is not None else 0.05,
            stop=args.stop if args.stop is not None else 0.95,
            step=args.step if args.step is not None else 0.01,
        )
        table = run_adjustment_comparison(grid)
    elif args.study == "thresholds":
        grid = threshold_grid(
            swept=swept, fixed_rho=args.fixed_rho, seed=args.seed,
            start=args.start if args.start is not None else 0.05,
            stop=args.stop if args.stop is not None else 0.95,
            step=args.step if args.step is not None else 0.01,
        )
        table = run_threshold_curves(grid)
    else:
        grid = design_surface_grid(
            seed=args.seed, n_sim=args.nsim,
            start=args.start if args.start is not None else 0.7,
            stop=args.stop if args.stop is not None else 1.3,
            step=args.step if args.step is not None else 0.1,
            rho_levels=tuple(args.rho_levels) if args.rho_levels else (0.1, 0.3, 0.5, 0.7),
        )
        table = run_design_surface(grid, progress=args.progress)

    if args.format == "jsonl":
        text = table.to_json_lines(args.out)
    else:
        text = table.to_csv(args.out)
    if not args.out:
        sys.stdout.write(text)
    print(f"{args.study}: {len(table.rows)} rows", file=sys.stderr)
    return EXIT_OK


def _add_common_output(parser: argparse.ArgumentParser, formats=("human", "json")) -> None:
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument(
        "--format", choices=formats, default=formats[0],
        help=f"output format (default {formats[0]})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platformdesign",
        description="Design engine for platform trials of combination therapies.",
    )
    parser.add_argument(
        "--config",
        help="JSON file of default flag values (kebab-case keys match flags)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    adjust = sub.add_parser(
        "adjust", help="solve a multiplicity-adjusted critical value / p-threshold"
    )
    adjust.add_argument("--metric", choices=("fwer", "fmer", "msfp", "mfwer"), default="fwer",
                        help="error metric to control (default fwer)")
    adjust.add_argument("--alpha", type=float, default=None,
                        help="target level; defaults: fwer 0.05, fmer 0.0025, msfp 0.000625")
    adjust.add_argument("--m", type=int, default=None, help="exceedance count for mfwer")
    adjust.add_argument("--sided", choices=("one", "two"), default=None,
                        help="exceedance convention for mfwer (default two)")
    adjust.add_argument("--rho", type=float, default=None,
                        help="test-statistic correlation, given directly")
    adjust.add_argument("--k", type=int, default=None, help="number of substudies (default 1)")
    adjust.add_argument("--n-a", type=float, default=None, help="control arm count")
    adjust.add_argument("--n-b", type=float, nargs="+", default=None,
                        help="monotherapy arm count(s), one per substudy")
    adjust.add_argument("--n-ab", type=float, nargs="+", default=None,
                        help="combination arm count(s), one per substudy")
    adjust.add_argument("--rho-ab-a", type=float, nargs="+", default=None,
                        help="combination-control endpoint correlation(s), default 0")
    adjust.add_argument("--rho-ab-b", type=float, nargs="+", default=None,
                        help="combination-monotherapy endpoint correlation(s), default 0")
    adjust.add_argument("--rho-a-b", type=float, nargs="+", default=None,
                        help="control-monotherapy endpoint correlation(s), default 0")
    adjust.add_argument("--precision", type=float, default=1e-4,
                        help="target standard error of randomized probabilities")
    adjust.add_argument("--replications", type=int, default=200_000,
                        help="null draws for count-based metrics")
    adjust.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    _add_common_output(adjust)
    adjust.set_defaults(func=cmd_adjust)

    design = sub.add_parser(
        "design", help="optimal allocation, threshold, and minimal sample size"
    )
    design.add_argument("--k", type=int, default=None, help="number of substudies (default 1)")
    design.add_argument("--delta", type=float, nargs="+", default=None,
                        help="monotherapy effect size(s) in endpoint units")
    design.add_argument("--synergy", type=float, nargs="+", default=None,
                        help="synergy multiplier(s); 1 = additive")
    design.add_argument("--rho-ab-a", type=float, nargs="+", default=None,
                        help="combination-control correlation(s), default 0")
    design.add_argument("--rho-ab-b", type=float, nargs="+", default=None,
                        help="combination-monotherapy correlation(s), default 0")
    design.add_argument("--sigma2", type=float, default=1.0,
                        help="common endpoint variance (default 1)")
    design.add_argument("--power", type=float, default=0.8,
                        help="target power (default 0.8)")
    design.add_argument("--metric", choices=("fwer", "fmer", "msfp", "mfwer"), default="fwer",
                        help="error metric to control (default fwer)")
    design.add_argument("--alpha", type=float, default=None,
                        help="target level; defaults: fwer 0.05, fmer 0.0025, msfp 0.000625")
    design.add_argument("--m", type=int, default=None, help="exceedance count for mfwer")
    design.add_argument("--sided", choices=("one", "two"), default=None,
                        help="exceedance convention for mfwer (default two)")
    design.add_argument("--n0", type=int, default=20, help="initial N for doubling (default 20)")
    design.add_argument("--nsim", type=int, default=10_000,
                        help="Monte Carlo replications per power estimate (default 10000)")
    design.add_argument("--n-cap", type=int, default=1_000_000,
                        help="sample-size search budget (default 1e6)")
    design.add_argument("--precision", type=float, default=1e-4,
                        help="target standard error of randomized probabilities")
    design.add_argument("--replications", type=int, default=200_000,
                        help="null draws for count-based metrics")
    design.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    _add_common_output(design)
    design.set_defaults(func=cmd_design)

    estimate = sub.add_parser(
        "estimate", help="estimate design parameters from paired-endpoint CSV data"
    )
    estimate.add_argument("--input", help="CSV of (model, treatment, response) records")
    estimate.add_argument("--drug-a", help="treatment name playing the control role A")
    estimate.add_argument("--drug-b", help="treatment name playing the monotherapy role B")
    estimate.add_argument("--combo", help="treatment name of the combination A+B")
    estimate.add_argument("--roles", default=None,
                          help="JSON file with a list of {drug_a, drug_b, combo} trials")
    estimate.add_argument("--model-col", default="model_id",
                          help="column holding the model identifier (default model_id)")
    estimate.add_argument("--treatment-col", default="treatment",
                          help="column holding the treatment name (default treatment)")
    estimate.add_argument("--response-col", default="response",
                          help="column holding the numeric endpoint (default response)")
    estimate.add_argument("--delimiter", default=",",
                          help="CSV field delimiter (default comma)")
    estimate.add_argument("--duplicates", choices=("error", "mean"), default="error",
                          help="policy for duplicate (model, treatment) rows")
    estimate.add_argument("--min-triples", type=int, default=3,
                          help="minimum complete (A, B, combo) triples required (default 3)")
    estimate.add_argument("--lower-is-better", action="store_true",
                          help="flip response signs (endpoint where lower is favorable)")
    estimate.add_argument("--with-thresholds", action="store_true",
                          help="append z-correlation, unadjusted rates, and p-thresholds")
    estimate.add_argument("--replications", type=int, default=100_000,
                          help="null replications for the unadjusted rates (default 100000)")
    estimate.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    estimate.add_argument("--out", help="output path (default: stdout)")
    estimate.set_defaults(func=cmd_estimate, format="json")

    simulate = sub.add_parser("simulate", help="run a full simulation study grid")
    simulate.add_argument("--study", required=True, choices=_STUDIES)
    simulate.add_argument("--swept", choices=("rho-ab-b", "rho-ab-a"), default=None,
                          help="which arm correlation to sweep (default rho-ab-b)")
    simulate.add_argument("--fixed-rho", type=float, default=0.3,
                          help="value of the non-swept correlation (default 0.3)")
    simulate.add_argument("--start", type=float, default=None, help="sweep start")
    simulate.add_argument("--stop", type=float, default=None, help="sweep stop")
    simulate.add_argument("--step", type=float, default=None, help="sweep step")
    simulate.add_argument("--rho-levels", type=float, nargs="+", default=None,
                          help="correlation levels for the design surface")
    simulate.add_argument("--replications", type=int, default=100_000,
                          help="null replications per grid point")
    simulate.add_argument("--nsim", type=int, default=10_000,
                          help="power replications (design surface)")
    simulate.add_argument("--progress", action="store_true",
                          help="print per-point progress to stderr")
    simulate.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    _add_common_output(simulate, formats=("csv", "jsonl"))
    simulate.set_defaults(func=cmd_simulate)

    return parser


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Fill flag values from the config file for flags not given on the CLI."""
    if not args.config:
        return
    with open(args.config, encoding="utf-8") as handle:
        config = json.load(handle)
    if not isinstance(config, dict):
        raise DomainError("--config file must hold a JSON object")
    given = {token.split("=")[0] for token in argv if token.startswith("--")}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise DomainError(f"--config key {key!r} does not match any flag")
        if f"--{key.replace('_', '-')}" in given:
            continue
        setattr(args, dest, value)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, argv)
        if getattr(args, "seed", None) is None:
            env = os.environ.get(SEED_ENV_VAR)
            args.seed = int(env) if env else 0
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
