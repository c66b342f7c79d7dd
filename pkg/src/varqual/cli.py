"""Command-line interface.

Four subcommands:

* ``audit`` — read a t-statistic file from a real platform (or from
  ``simulate``) and print/write the three variance-quality reports.
* ``sweep`` — run the full power/complexity/efficiency study and write
  power.csv, complexity.csv, efficiency.csv, and results.json.
* ``plotdata`` — turn a sweep output directory into per-theta plot series
  files (and optionally best-effort SVG figures).
* ``simulate`` — generate a t-statistic file from the A/A simulator.

Exit codes: 0 success, 2 parse error (bad flags or malformed input files),
3 validation error (well-formed but invalid values), 4 missing dependency
(input artifacts or optional packages), 5 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from varqual import io
from varqual.metrics import (
    NULL_VALUES,
    DegenerateVarianceError,
    InsufficientDataError,
    MetricKind,
    Sidedness,
    ZeroStandardErrorError,
    metric_estimate,
    metric_report,
)
from varqual.power import (
    INTERP_MODES,
    MetricKind as _MetricKind,  # noqa: F401  (re-export convenience)
    complexity_table,
    efficiency_table,
    log_grid,
    run_sweep,
)
from varqual.simulate import FAST, FULL, ExperimentConfig, Normal, Uniform, run_aa_batch

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_DEPENDENCY = 4
EXIT_RUNTIME = 5

_SIDEDNESS_CHOICES = tuple(s.value for s in Sidedness)
_METRIC_CHOICES = tuple(m.value for m in MetricKind)


def _float_list(text: str):
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")


def _int_list(text: str):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _metric_list(text: str):
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    for name in names:
        if name not in _METRIC_CHOICES:
            raise argparse.ArgumentTypeError(
                f"unknown metric {name!r}; choose from {', '.join(_METRIC_CHOICES)}"
            )
    return names


# ---------------------------------------------------------------------------
# audit


def _audit_entry(kind: MetricKind, t, alpha: float, sidedness: Sidedness, ci_level: float) -> dict:
    """One metric's audit row; degrades to an unavailable marker when the
    estimate or its z-test cannot be formed on this input."""
    entry: dict = {"metric": kind.value, "available": False}
    try:
        entry["estimate"] = metric_estimate(kind, t, ci_level)
    except (InsufficientDataError, DegenerateVarianceError) as e:
        entry["unavailable_reason"] = str(e)
        return entry
    try:
        report = metric_report(kind, t, alpha, sidedness, ci_level)
    except (InsufficientDataError, DegenerateVarianceError, ZeroStandardErrorError) as e:
        entry["unavailable_reason"] = str(e)
        return entry
    entry.update(
        available=True,
        null_value=report.null_value,
        std_error=report.std_error,
        z_score=report.z_score,
        p_value=report.p_value,
        reject=report.reject,
    )
    return entry


def _print_audit(report: dict, out=None) -> None:
    out = out if out is not None else sys.stdout
    print(f"n = {report['n']} t-statistics from {report['input']}", file=out)
    print(
        f"alpha = {report['alpha']}, sidedness = {report['sidedness']}, "
        f"ci_level = {report['ci_level']}",
        file=out,
    )
    header = f"{'metric':<10} {'estimate':>12} {'null':>8} {'se':>12} {'z':>10} {'p':>12} {'reject':>7}"
    print(header, file=out)
    for e in report["metrics"]:
        if e["available"]:
            print(
                f"{e['metric']:<10} {e['estimate']:>12.6g} {e['null_value']:>8.4g} "
                f"{e['std_error']:>12.6g} {e['z_score']:>10.4f} {e['p_value']:>12.6g} "
                f"{str(e['reject']):>7}",
                file=out,
            )
        elif "estimate" in e:
            print(
                f"{e['metric']:<10} {e['estimate']:>12.6g}  [z-test unavailable: "
                f"{e['unavailable_reason']}]",
                file=out,
            )
        else:
            print(f"{e['metric']:<10} {'—':>12}  [unavailable: {e['unavailable_reason']}]", file=out)


def cmd_audit(args) -> int:
    data = io.read_tstats(args.input)
    if data.n < 1:
        raise io.ValidationError(f"{args.input}: file contains no t-statistics")
    sidedness = Sidedness(args.sidedness)
    report = {
        "input": str(args.input),
        "n": data.n,
        "alpha": args.alpha,
        "sidedness": sidedness.value,
        "ci_level": args.ci_level,
        "metrics": [
            _audit_entry(kind, data.t, args.alpha, sidedness, args.ci_level)
            for kind in MetricKind
        ],
    }
    if data.manifest is not None:
        report["input_manifest"] = data.manifest
    _print_audit(report)
    if args.json:
        io.atomic_write_text(args.json, json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.json}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


_SWEEP_OVERRIDES = (
    "seed", "mode", "group_size", "alpha", "ci_level", "sidedness",
    "thetas", "n_grid", "trials", "metrics", "target_powers", "interp", "workers",
)


def _sweep_manifest(args) -> io.RunManifest:
    if args.manifest:
        manifest = io.read_manifest_file(args.manifest)
    else:
        manifest = io.default_sweep_manifest()
    overrides = {}
    for name in _SWEEP_OVERRIDES:
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.fast:
        overrides["mode"] = FAST
    if overrides:
        d = manifest.to_dict()
        d.update(overrides)
        manifest = io.RunManifest.from_dict(d)
    if not manifest.n_grid:
        manifest.n_grid = tuple(int(n) for n in log_grid(100, 10_000, 30))
    return manifest


def cmd_sweep(args) -> int:
    manifest = _sweep_manifest(args)
    metrics = tuple(MetricKind(m) for m in manifest.metrics)
    manifest.started = io.utc_now()
    t0 = time.monotonic()
    curves = run_sweep(
        manifest.thetas,
        manifest.n_grid,
        trials=manifest.trials,
        metrics=metrics,
        base=manifest.base_config(),
        seed=manifest.seed,
        workers=manifest.workers,
        sidedness=Sidedness(manifest.sidedness),
        ci_level=manifest.ci_level,
    )
    complexity = complexity_table(curves, manifest.target_powers, manifest.interp)
    efficiency = efficiency_table(curves, manifest.target_powers, manifest.interp)
    elapsed = time.monotonic() - t0
    manifest.finished = io.utc_now()
    manifest.diagnostics = {
        "degenerate_batches": sum(c.degenerate for c in curves),
        "not_reached_cells": sum(1 for r in complexity if r.n_required is None),
        "undefined_efficiencies": sum(1 for e in efficiency if e.e12 is None),
        "elapsed_seconds": round(elapsed, 3),
    }
    paths = io.write_sweep_results(args.out, curves, complexity, efficiency, manifest)
    print(
        f"swept {len(manifest.thetas)} noise levels x {len(manifest.n_grid)} batch sizes "
        f"x {manifest.trials} trials ({manifest.mode} mode) in {elapsed:.1f}s"
    )
    for name in (io.POWER_CSV, io.COMPLEXITY_CSV, io.EFFICIENCY_CSV, io.RESULTS_JSON):
        print(f"wrote {paths[name]}")
    diag = manifest.diagnostics
    print(
        f"degenerate batches: {diag['degenerate_batches']}; "
        f"sample-complexity cells not reached: {diag['not_reached_cells']}; "
        f"undefined efficiencies: {diag['undefined_efficiencies']}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# plotdata


def cmd_plotdata(args) -> int:
    out_dir = args.out if args.out is not None else args.sweep_dir
    result = io.write_plotdata(out_dir, args.sweep_dir)
    for path in [*result["figure1"], *result["figure2"]]:
        print(f"wrote {path}")
    if result["omitted_undefined"]:
        print(f"omitted {result['omitted_undefined']} UNDEFINED efficiency points")
    if args.svg:
        for path in io.render_svg(out_dir, args.sweep_dir):
            print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    if args.source == "uniform":
        source = Uniform(args.lo, args.hi)
    else:
        source = Normal(args.mean, args.sd)
    config = ExperimentConfig(
        theta=args.theta,
        n_tests=args.n,
        group_size=args.group_size,
        source=source,
        mode=args.mode,
        seed=args.seed,
    )
    t = run_aa_batch(config)
    ids = [f"aa-{i + 1:06d}" for i in range(config.n_tests)]
    manifest = dataclasses.asdict(config)
    manifest["source"] = config.source.as_dict()
    manifest["artifact_version"] = io.ARTIFACT_VERSION
    path = io.write_tstats(args.out, ids, t, manifest)
    print(f"wrote {config.n_tests} simulated t-statistics to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varqual",
        description="Audit A/B-test confidence intervals with variance-quality "
        "metrics computed from A/A-test t-statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="report the three variance-quality metrics on a t-statistic file")
    p.add_argument("input", help="t-statistic CSV (header 'experiment_id,t')")
    p.add_argument("--alpha", type=float, default=0.1, help="z-test significance level (default 0.1)")
    p.add_argument("--sidedness", choices=_SIDEDNESS_CHOICES, default=Sidedness.TWO_SIDED.value)
    p.add_argument("--ci-level", type=float, default=0.90,
                   help="CI level whose false positive rate is audited (default 0.90)")
    p.add_argument("--json", metavar="FILE", default=None, help="also write the report as JSON")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="run the power / sample-complexity / efficiency study")
    p.add_argument("--manifest", metavar="FILE", default=None,
                   help="JSON run manifest; flags below override its fields")
    p.add_argument("--out", metavar="DIR", default="sweep_out", help="output directory (default sweep_out)")
    p.add_argument("--thetas", type=_float_list, default=None, help="comma-separated noise levels")
    p.add_argument("--n-grid", dest="n_grid", type=_int_list, default=None,
                   help="comma-separated batch sizes (default: 30 log-spaced in [100, 10000])")
    p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials per cell (default 500)")
    p.add_argument("--metrics", type=_metric_list, default=None,
                   help=f"comma-separated subset of {{{','.join(_METRIC_CHOICES)}}}")
    p.add_argument("--target-powers", dest="target_powers", type=_float_list, default=None,
                   help="comma-separated target powers (default 0.5,0.6,0.7,0.8,0.9)")
    p.add_argument("--interp", choices=INTERP_MODES, default=None,
                   help="power-curve inversion rule (default first-crossing)")
    p.add_argument("--sidedness", choices=_SIDEDNESS_CHOICES, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--ci-level", dest="ci_level", type=float, default=None)
    p.add_argument("--group-size", dest="group_size", type=int, default=None,
                   help="units per experiment arm in full mode (default 1000)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=(FULL, FAST), default=None)
    p.add_argument("--fast", action="store_true", help="shorthand for --mode fast")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plotdata", help="emit per-theta plot series files from sweep outputs")
    p.add_argument("sweep_dir", help="directory holding power.csv and efficiency.csv")
    p.add_argument("--out", metavar="DIR", default=None, help="output directory (default: sweep dir)")
    p.add_argument("--svg", action="store_true", help="also render SVG figures (needs matplotlib)")
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("simulate", help="write a file of simulated A/A t-statistics")
    p.add_argument("--theta", type=float, default=0.0, help="variance-noise scale (default 0)")
    p.add_argument("--n", type=int, default=1000, help="number of t-statistics (default 1000)")
    p.add_argument("--group-size", dest="group_size", type=int, default=1000)
    p.add_argument("--source", choices=("uniform", "normal"), default="uniform",
                   help="per-unit response distribution (full mode only)")
    p.add_argument("--lo", type=float, default=5.0, help="uniform lower bound (default 5)")
    p.add_argument("--hi", type=float, default=6.0, help="uniform upper bound (default 6)")
    p.add_argument("--mean", type=float, default=0.0, help="normal mean (default 0)")
    p.add_argument("--sd", type=float, default=1.0, help="normal standard deviation (default 1)")
    p.add_argument("--mode", choices=(FULL, FAST), default=FULL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="FILE", default="tstats.csv")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except io.ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except io.DependencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (io.ValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
