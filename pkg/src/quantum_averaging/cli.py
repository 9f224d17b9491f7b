"""Command-line front end: ``qavg theory | run | figure``.

Exit codes: 0 success, 2 usage or validation error, 3 starved
post-selection, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import functools
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import DomainError, StarvedSelectionError
from .gaussian import (
    QuadratureCovariance,
    TruncationWindow,
    conditional_covariance,
    derive_seed,
    feedforward_gain,
    sample_gaussian,
    success_probability,
    threshold_for_success,
)
from .means import (
    CorrelatedPair,
    VarianceSet,
    arithmetic_mean,
    arithmetic_mean_correlated,
    geometric_mean,
    harmonic_mean,
    harmonic_mean_correlated,
)
from .network import apply_to_covariance
from .protocol import (
    ARITHMETIC_PICK,
    HARMONIC_HERALDED,
    PROTOCOLS,
    PostSelectionRule,
    interference_network,
    run_arithmetic_interference,
    run_arithmetic_pick,
    run_harmonic_feedforward,
    run_harmonic_heralded,
)
from .scenarios import (
    DEFAULT_SAMPLES,
    FIG2_DEFAULTS,
    FIGURE_PRESETS,
    Fig2Spec,
    SweepRecord,
    SweepSpec,
    crossing_from_records,
    default_c_grid,
    emit,
    records_to_csv,
    run_spec,
)

EXIT_OK, EXIT_USAGE, EXIT_STARVED, EXIT_IO = 0, 2, 3, 4
FIGURES = ("fig2", "fig4a", "fig4b", "fig5")
HELP_WIDTH = 88


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _seed(text: str) -> int:
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return s


def _count(text: str) -> int:
    try:
        n = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer count, got {text!r}")
    return n


def build_parser() -> argparse.ArgumentParser:
    fmt = functools.partial(argparse.HelpFormatter, width=HELP_WIDTH)
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=_seed, default=0, help="run seed, unsigned 64-bit (default 0)")
    g.add_argument("--out", type=Path, default=None, help="output directory for CSV / manifest / plot")
    g.add_argument("--format", choices=("csv", "json"), default=None, help="machine-readable stdout format")
    g.add_argument("--config", type=Path, default=None, help="key = value file supplying any flag")
    g.add_argument("--plot", action="store_true", help="also write a line plot (needs --out)")

    p = argparse.ArgumentParser(prog="qavg", formatter_class=fmt,
                                description="Quantum averaging of squeezed-state quadrature variances.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{theory,run,figure}")
    sub.required = True

    t = sub.add_parser("theory", parents=[common], formatter_class=fmt,
                       help="closed-form means for a set of variances")
    t.add_argument("--v", type=_floats, default=None, help="input variances, comma separated (shot-noise units)")
    t.add_argument("--c", type=float, default=None, help="correlation <X1 X2> (two inputs only)")

    r = sub.add_parser("run", parents=[common], formatter_class=fmt, help="run one averaging protocol")
    r.add_argument("--protocol", choices=PROTOCOLS, default=None, help="averaging protocol (required)")
    r.add_argument("--v", type=_floats, default=None, help="input variances, comma separated (required)")
    r.add_argument("--c", type=float, default=None, help="correlation <X1 X2> (two inputs only)")
    win = r.add_mutually_exclusive_group()
    win.add_argument("--threshold", type=float, default=None, help="post-selection window |b| <= t")
    win.add_argument("--ps", type=float, default=None, help="target success probability (single trigger)")
    r.add_argument("--n", type=_count, default=DEFAULT_SAMPLES, help=f"sample count (default {DEFAULT_SAMPLES})")

    f = sub.add_parser("figure", parents=[common], formatter_class=fmt, help="reproduce a figure as data")
    f.add_argument("figure_id", choices=FIGURES)
    f.add_argument("--n", type=_count, default=DEFAULT_SAMPLES, help="samples per grid point")
    f.add_argument("--ps-grid", type=_floats, default=None, help="success-probability grid (sorted)")
    f.add_argument("--c", type=_floats, default=None, help="fig5 correlation grid (default 0, .25, .5 of sqrt(V1 V2))")
    f.add_argument("--v", type=_floats, default=None, help="override the preset input variances")
    f.add_argument("--workers", type=int, default=None, help="threads for independent grid points")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        parser.error(f"malformed config file: {exc}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest: a for a in subparser._actions}  # noqa: SLF001
    defaults = {}
    for key, value in cp["config"].items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config", "figure_id"):
            parser.error(f"unknown config key {key!r}")
        action = known[dest]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[dest] = value.strip().lower() in ("1", "true", "yes", "on")
        else:
            conv = action.type or str
            try:
                defaults[dest] = conv(value.strip())
            except (argparse.ArgumentTypeError, ValueError) as exc:
                parser.error(f"config key {key!r}: {exc}")
            if action.choices is not None and defaults[dest] not in action.choices:
                parser.error(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
    subparser.set_defaults(**defaults)
    # the command line still wins: reparse with the file values as defaults
    return parser.parse_args(argv)


# -- validation ----------------------------------------------------------------


def _sigma_from(v: Optional[Sequence[float]], c: Optional[float]) -> QuadratureCovariance:
    if v is None:
        raise UsageError("--v is required (on the command line or in --config)")
    vs = VarianceSet.of(v)
    if c is None:
        return QuadratureCovariance.from_variances(vs)
    if len(vs) != 2:
        raise UsageError("--c needs exactly two variances")
    pair = CorrelatedPair(vs.values[0], vs.values[1], c)
    if not pair.strictly_positive_definite:
        raise UsageError(f"--c must satisfy |c| < sqrt(v1*v2) = {math.sqrt(pair.v1 * pair.v2):.6g}")
    return QuadratureCovariance.from_pair(pair)


def _check_out(args):
    if args.plot and args.out is None:
        raise UsageError("--plot needs --out")
    if args.out is not None and args.out.exists() and not args.out.is_dir():
        raise UsageError(f"--out {args.out} exists and is not a directory")


# -- subcommands ---------------------------------------------------------------


def cmd_theory(args, stdout) -> int:
    sigma = _sigma_from(args.v, args.c)
    vs = VarianceSet.of(args.v)
    rows = [("V_A", arithmetic_mean(vs)), ("V_H", harmonic_mean(vs)), ("V_G", geometric_mean(vs))]
    if args.c is not None:
        pair = CorrelatedPair(vs.values[0], vs.values[1], args.c)
        rows += [("V_Ac", arithmetic_mean_correlated(pair)), ("V_Hc", harmonic_mean_correlated(pair))]
    if len(vs) >= 2:
        image = apply_to_covariance(interference_network(len(vs)), sigma)
        gain = feedforward_gain(image, 0, list(range(1, len(vs))))
        rows.append(("V_schur", float(conditional_covariance(image, [0], list(range(1, len(vs))))[0, 0])))
        rows += [(f"gain_{i + 1}", float(g)) for i, g in enumerate(gain)]
    if args.format == "json":
        stdout.write(json.dumps(dict(rows), indent=2) + "\n")
    elif args.format == "csv":
        stdout.write("quantity,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows))
    else:
        for k, v in rows:
            stdout.write(f"{k:>8} = {v:.6g}\n")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "theory.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write("quantity,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows))
    return EXIT_OK


def _window_for(args, sigma: QuadratureCovariance) -> TruncationWindow:
    if args.threshold is not None:
        return TruncationWindow(args.threshold)
    if args.ps is not None:
        if sigma.n != 2:
            raise UsageError("--ps needs a single trigger channel (two inputs); use --threshold")
        image = apply_to_covariance(interference_network(2), sigma)
        return threshold_for_success(float(image[1, 1]), args.ps)
    return TruncationWindow.open()


def _validate_run(args) -> QuadratureCovariance:
    if args.protocol is None:
        raise UsageError("--protocol is required (on the command line or in --config)")
    sigma = _sigma_from(args.v, args.c)
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.threshold is not None and not (args.threshold > 0 and math.isfinite(args.threshold)):
        raise UsageError("--threshold must be a positive number")
    if args.ps is not None and not 0 < args.ps <= 1:
        raise UsageError("--ps must lie in (0, 1]")
    if args.protocol != HARMONIC_HERALDED and (args.threshold is not None or args.ps is not None):
        raise UsageError(f"--threshold/--ps only apply to {HARMONIC_HERALDED}")
    if args.protocol == ARITHMETIC_PICK and args.c not in (None, 0.0):
        raise UsageError("arithmetic-pick draws independent resources; --c is not supported")
    if args.protocol != ARITHMETIC_PICK and sigma.n < 2:
        raise UsageError(f"{args.protocol} needs at least two inputs")
    _check_out(args)
    return sigma


def cmd_run(args, stdout, stderr) -> int:
    sigma = _validate_run(args)
    window = _window_for(args, sigma)
    t0 = time.perf_counter()
    try:
        if args.protocol == ARITHMETIC_PICK:
            batches = [sample_gaussian([[v]], args.n, derive_seed(args.seed, i), labels=[f"x{i}"])
                       for i, v in enumerate(args.v)]
            oc = run_arithmetic_pick(batches, derive_seed(args.seed, len(args.v)), variances=args.v)
        elif args.protocol == HARMONIC_HERALDED:
            rule = PostSelectionRule.all_but(sigma.n, window)
            oc = run_harmonic_heralded(sigma, args.n, rule, args.seed)
        elif args.protocol == "harmonic-feedforward":
            oc = run_harmonic_feedforward(sigma, args.n, args.seed)
        else:
            oc = run_arithmetic_interference(sigma, args.n, args.seed)
    except StarvedSelectionError as exc:
        stderr.write(f"starved selection: {exc}\nempirical P_S = {exc.success_probability:g}\n")
        return EXIT_STARVED
    elapsed = time.perf_counter() - t0
    c = args.c if args.c is not None else (0.0 if sigma.n == 2 else None)
    rec = SweepRecord(
        figure="run", protocol=oc.protocol, n=sigma.n, v_inputs=tuple(args.v), c=c,
        threshold=None if window.is_open or args.protocol != HARMONIC_HERALDED else window.t,
        ps_analytic=_ps_analytic(args.protocol, sigma, window),
        ps_empirical=oc.success.p, ps_ci_lo=oc.success.ci_lo, ps_ci_hi=oc.success.ci_hi,
        var_analytic=oc.analytic_prediction, var_empirical=oc.variance.value,
        var_stderr=oc.variance.standard_error, kept=oc.kept_count, total=oc.total, seed=args.seed,
    )
    csv_text = records_to_csv([rec])
    if args.format == "csv":
        stdout.write(csv_text)
    elif args.format == "json":
        stdout.write(json.dumps({k: getattr(rec, k) for k in rec.__dataclass_fields__}, indent=2) + "\n")
    else:
        stdout.write(
            f"protocol   {oc.protocol}\n"
            f"variance   {oc.variance.value:.6g} +/- {oc.variance.standard_error:.2g}\n"
            f"P_S        {oc.success.p:.6g} [{oc.success.ci_lo:.4g}, {oc.success.ci_hi:.4g}]\n"
            f"kept       {oc.kept_count} / {oc.total}\n"
            + (f"analytic   {oc.analytic_prediction:.6g}\n" if oc.analytic_prediction is not None else "")
        )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "run.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(csv_text)
        manifest = {"command": "run", "args": _args_echo(args), "versions": {"artifact": __version__},
                    "wall_time_s": elapsed}
        with open(args.out / "run.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _ps_analytic(protocol: str, sigma: QuadratureCovariance, window: TruncationWindow) -> Optional[float]:
    if protocol != HARMONIC_HERALDED or window.is_open:
        return 1.0
    if sigma.n != 2:
        return None
    image = apply_to_covariance(interference_network(2), sigma)
    return success_probability(float(image[1, 1]), window)


def _args_echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _figure_spec(args):
    if args.figure_id == "fig2":
        if args.v is not None:
            if len(args.v) != 2:
                raise UsageError("fig2 --v takes two values: quiet,broken")
            VarianceSet.of(args.v)
            return Fig2Spec(v_quiet=args.v[0], v_broken=args.v[1])
        return Fig2Spec(v_quiet=FIG2_DEFAULTS["v_quiet"], v_broken=FIG2_DEFAULTS["v_broken"])
    v = tuple(args.v) if args.v is not None else FIGURE_PRESETS[args.figure_id]
    VarianceSet.of(v)
    kw = dict(n_samples=args.n, seed=args.seed)
    if args.ps_grid is not None:
        kw["ps_grid"] = tuple(args.ps_grid)
    if args.figure_id == "fig5":
        c_grid = tuple(args.c) if args.c is not None else default_c_grid(*v)
        return SweepSpec("fig5", v, c_grid, summary_ps=0.10, **kw)
    if args.c is not None:
        if len(args.c) != 1:
            raise UsageError(f"{args.figure_id} takes a single --c value")
        return SweepSpec(args.figure_id, v, tuple(args.c), **kw)
    return SweepSpec(args.figure_id, v, **kw)


def cmd_figure(args, stdout) -> int:
    if args.workers is not None and args.workers < 1:
        raise UsageError("--workers must be >= 1")
    spec = _figure_spec(args)
    _check_out(args)
    timings: list = []
    records = run_spec(spec, workers=args.workers, timings=timings)
    if args.out is not None:
        paths = emit(records, args.out, args.figure_id, spec=spec, timings=timings, plot=args.plot)
        for kind, path in paths.items():
            stdout.write(f"{kind}: {path}\n")
        if args.figure_id in ("fig4a", "fig4b"):
            cross = crossing_from_records(records)
            if cross is not None:
                stdout.write(f"variance=1 crossing at P_S ~ {cross:.4f}\n")
        return EXIT_OK
    if args.format == "json":
        stdout.write(json.dumps([{k: getattr(r, k) for k in r.__dataclass_fields__} for r in records]) + "\n")
    else:
        stdout.write(records_to_csv(records))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "theory":
            _check_out(args)
            return cmd_theory(args, stdout)
        if args.command == "run":
            return cmd_run(args, stdout, stderr)
        return cmd_figure(args, stdout)
    except (UsageError, DomainError) as exc:
        stderr.write(f"qavg {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        stderr.write(f"qavg {args.command}: I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
