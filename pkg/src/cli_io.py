"""
Command-line surface.

    analyze   closed-form AoI of one scenario under both schemes
    simulate  Monte Carlo AoI with a 95% confidence interval
    sweep     figure replicas or a custom sweep, as CSV
    optimize  blocklength (and optionally coding rate) search
    compare   exact crossover redundancy vs the low-error threshold

Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from src import __version__
from src.aoi_analytic import (
    AnalyticResult,
    Scheme,
    alpha_threshold,
    avg_aoi_distributed,
    avg_aoi_joint,
    evaluate,
)
from src.aoi_sim import simulate
from src.config import RunConfig, RunManifest, parse_config
from src.errors import ExportError, NoCrossoverError, UnboundedAoIError, ValidationError
from src.export import emit_csv, format_number, profile_rows
from src.fbl_channel import joint_error_approx
from src.study import (
    FIGURES,
    SchemeSelection,
    SweepSpec,
    SweepVariable,
    locate_crossover,
    optimize_blocklength,
    optimize_coding_rate,
    replica_base,
    replica_specs,
    run_sweep,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

CONFIG_FLAGS = ("sensors", "bits_per_sensor", "alpha", "rate", "snr", "snr_db", "slot_duration",
                "frames", "warmup", "replications", "seed", "forced_error")

# Command options that a replayed manifest may fill in, with their fallbacks.
COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "analyze": {},
    "simulate": {"scheme": "both", "workers": 1, "slow": False, "debug": False},
    "sweep": {"figure": None, "variable": None, "grid": None, "scheme": "both",
              "with_simulation": False, "workers": 1},
    "optimize": {"scheme": "joint", "m_min": 1, "m_max": None, "rates": None},
    "compare": {"alpha_min": 0, "alpha_max": None},
}


class CommandParser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# ---------------------------
# PARSER
# ---------------------------

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value scenario file or JSON run manifest")
    common.add_argument("--manifest", help="write a JSON run manifest to this path")
    common.add_argument("--sensors", type=int, help="number of sensors N")
    common.add_argument("--bits-per-sensor", type=int, help="bits per sensor update L_h")
    common.add_argument("--alpha", type=int, help="information redundancy in bits")
    common.add_argument("--rate", type=float, help="coding rate R (bits per channel use)")
    snr = common.add_mutually_exclusive_group()
    snr.add_argument("--snr", type=float, help="received SNR, linear")
    snr.add_argument("--snr-db", type=float, help="received SNR in dB")
    common.add_argument("--slot-duration", type=float, help="seconds per channel use T_u")
    common.add_argument("--forced-error", type=float, help="inject a fixed block error rate")
    common.add_argument("--frames", type=int, help="simulated frames K (warm-up included)")
    common.add_argument("--warmup", type=int, help="warm-up frames W discarded from the average")
    common.add_argument("--replications", type=int, help="independent replications")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--seconds", action="store_true", help="report AoI in seconds")
    common.add_argument("-v", "--verbose", action="count", default=0)
    return common


def build_parser() -> CommandParser:
    parser = CommandParser(prog="aoi", description="Short-packet AoI: joint vs distributed encoding")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common_options()
    schemes = [s.value for s in SchemeSelection]

    p = sub.add_parser("analyze", parents=[common], help="closed-form AoI for one scenario")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo AoI for one scenario")
    p.add_argument("--scheme", choices=schemes)
    p.add_argument("--workers", type=int, help="processes for replications")
    p.add_argument("--slow", action="store_true", default=None, help="slot-by-slot engine")
    p.add_argument("--debug", action="store_true", default=None,
                   help="check age accounting at every slot (implies --slow)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="figure replica or custom sweep as CSV")
    p.add_argument("--figure", choices=FIGURES)
    p.add_argument("--variable", choices=[v.value for v in SweepVariable])
    p.add_argument("--grid", help="comma-separated, strictly increasing values")
    p.add_argument("--scheme", choices=schemes)
    p.add_argument("--with-simulation", action="store_true", default=None)
    p.add_argument("--workers", type=int, help="processes for grid points")
    p.add_argument("--output", help="CSV path for a custom sweep (stdout when omitted)")
    p.add_argument("--output-dir", default=".", help="directory for figure CSVs")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("optimize", parents=[common], help="blocklength search")
    p.add_argument("--scheme", choices=[Scheme.JOINT.value, Scheme.DISTRIBUTED.value])
    p.add_argument("--m-min", type=int, help="smallest blocklength searched")
    p.add_argument("--m-max", type=int, help="largest blocklength searched (default 4 x bits)")
    p.add_argument("--rates", help="comma-separated coding rates to compare as well")
    p.add_argument("--output", help="write the AoI profile as CSV")
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("compare", parents=[common], help="exact crossover vs threshold")
    p.add_argument("--alpha-min", type=int)
    p.add_argument("--alpha-max", type=int, help="default N·L_h − 1")
    p.set_defaults(handler=cmd_compare)
    return parser


# ---------------------------
# HELPERS
# ---------------------------

def _resolve(args: argparse.Namespace) -> RunConfig:
    """Scenario/settings from every layer, and manifest replay of command options."""
    replayed: Dict[str, Any] = {}
    if args.config and Path(args.config).suffix.lower() == ".json" and Path(args.config).is_file():
        replayed = RunManifest.read(args.config).get("arguments", {}) or {}
    for key, fallback in COMMAND_DEFAULTS[args.command].items():
        if getattr(args, key, None) is None:
            setattr(args, key, replayed.get(key, fallback))
    flags = {key: getattr(args, key, None) for key in CONFIG_FLAGS}
    return parse_config(flags, args.config)


def _arguments(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key) for key in COMMAND_DEFAULTS[args.command]}


def _write_manifest(args: argparse.Namespace, run: RunConfig, with_settings: bool):
    if not args.manifest:
        return
    RunManifest(
        command=args.command,
        scenario=run.scenario,
        settings=run.settings if with_settings else None,
        config=run.values,
        arguments=_arguments(args),
    ).write(args.manifest)
    logger.info("run manifest written to %s", args.manifest)


def _aoi(result: Optional[AnalyticResult], args: argparse.Namespace, run: RunConfig) -> str:
    if result is None:
        return "unbounded"
    if args.seconds:
        return f"{format_number(result.in_seconds(run.scenario.channel.slot_duration))} s"
    return f"{format_number(result.avg_aoi_slots)} slots"


def _slots(value: float, args: argparse.Namespace, run: RunConfig) -> str:
    if args.seconds:
        return f"{format_number(value * run.scenario.channel.slot_duration)} s"
    return f"{format_number(value)} slots"


# scenario fields a figure replica fixes, keyed by their config name
_REPLICA_FIELDS = (
    ("sensors", "num_sensors"),
    ("bits_per_sensor", "per_sensor_bits"),
    ("alpha", "redundancy_bits"),
    ("rate", "coding_rate"),
)


def _check_replica_scenario(run: RunConfig):
    """Figure replicas carry their own scenarios; refuse settings they would ignore."""
    base, sc = replica_base(), run.scenario
    reason = "figure replicas fix this parameter; use --variable and --grid to change it"
    for key, field in _REPLICA_FIELDS:
        if getattr(sc, field) != getattr(base, field):
            raise ValidationError(key, reason, getattr(sc, field))
    if sc.channel.snr_linear != base.channel.snr_linear:
        key = "snr_db" if run.values.get("snr_db") is not None else "snr"
        raise ValidationError(key, reason, run.values.get(key))


def _values(text: str, key: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(key, "expected comma-separated numbers", text) from None


def _describe(run: RunConfig) -> str:
    sc = run.scenario
    return (f"N={sc.num_sensors} L_h={sc.per_sensor_bits} alpha={sc.redundancy_bits} "
            f"R={format_number(sc.coding_rate)} snr={format_number(sc.channel.snr_linear)} "
            f"(L={sc.joint_bits}, M={sc.joint_blocklength}, M_h={sc.sensor_blocklength})")


# ---------------------------
# COMMANDS
# ---------------------------

def cmd_analyze(args: argparse.Namespace) -> int:
    run = _resolve(args)
    sc = run.scenario
    forced = run.settings.forced_error_rate
    joint = avg_aoi_joint(sc, forced)
    dist = avg_aoi_distributed(sc, forced)
    threshold = alpha_threshold(sc, forced)

    print(f"scenario: {_describe(run)}")
    print(f"joint:       eps={format_number(joint.error_rate)}  AoI={_aoi(joint, args, run)}")
    print(f"distributed: eps={format_number(dist.error_rate)}  sigma={format_number(dist.sigma)}  "
          f"beta={format_number(dist.beta)}  AoI={_aoi(dist, args, run)}")
    print(f"eps_J ~ eps_D^N = {format_number(joint_error_approx(dist.error_rate, sc.num_sensors))}"
          f"  (low-error approximation behind alpha_0)")
    print(f"alpha_0={format_number(threshold.alpha_0)}  "
          f"approx_diff={format_number(threshold.aoi_diff)}")
    print(f"preferred scheme: {threshold.preferred_scheme.value}")
    flags = sorted(set(joint.flags + dist.flags + threshold.flags))
    if flags:
        print(f"flags: {';'.join(flags)}")
    _write_manifest(args, run, with_settings=False)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    run = _resolve(args)
    settings = replace(run.settings, workers=args.workers, fast=not (args.slow or args.debug),
                       debug=bool(args.debug))
    print(f"scenario: {_describe(run)}")
    for scheme in SchemeSelection(args.scheme).schemes:
        result = simulate(scheme, run.scenario, settings)
        try:
            reference = evaluate(scheme, run.scenario, settings.forced_error_rate)
        except UnboundedAoIError:
            reference = None
        scale = run.scenario.channel.slot_duration if args.seconds else 1.0
        print(f"{scheme.value}: {format_number(result.avg_aoi_slots * scale)} "
              f"± {format_number(result.ci95_half_width * scale)} "
              f"{'s' if args.seconds else 'slots'} "
              f"({result.frames_used} frames x {len(result.per_replication_means)} replications, "
              f"seed {result.seed}); analytic {_aoi(reference, args, run)}")
    _write_manifest(args, run, with_settings=True)
    return EXIT_OK


def _custom_spec(args: argparse.Namespace, run: RunConfig) -> SweepSpec:
    if not args.variable or not args.grid:
        raise ValidationError("sweep", "give --figure, or both --variable and --grid")
    variable = SweepVariable(args.variable)
    grid = _values(args.grid, "grid")
    if variable.is_integer:
        grid = [int(v) if float(v).is_integer() else v for v in grid]
    return SweepSpec(
        scheme=SchemeSelection(args.scheme),
        swept_variable=variable,
        grid=tuple(grid),
        base=run.scenario,
        with_simulation=bool(args.with_simulation),
        sim=run.settings,
        forced_error_rate=run.settings.forced_error_rate,
    )


def cmd_sweep(args: argparse.Namespace) -> int:
    run = _resolve(args)
    if args.figure:
        _check_replica_scenario(run)
        specs = replica_specs(args.figure, with_simulation=bool(args.with_simulation),
                              sim=run.settings, forced_error_rate=run.settings.forced_error_rate)
        out_dir = Path(args.output_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ExportError(str(out_dir), e.strerror or str(e)) from e
        for spec in specs:
            path = out_dir / f"{args.figure}_{spec.label}.csv"
            emit_csv(run_sweep(spec, workers=args.workers), path)
            print(f"wrote {path}")
    else:
        spec = _custom_spec(args, run)
        emit_csv(run_sweep(spec, workers=args.workers), args.output)
        if args.output:
            print(f"wrote {args.output}")
    _write_manifest(args, run, with_settings=bool(args.with_simulation))
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    run = _resolve(args)
    sc = run.scenario
    scheme = Scheme(args.scheme)
    bits = sc.joint_bits if scheme is Scheme.JOINT else sc.per_sensor_bits
    m_max = args.m_max if args.m_max is not None else 4 * bits
    forced = run.settings.forced_error_rate
    opt = optimize_blocklength(scheme, bits, sc.channel, (args.m_min, m_max),
                               num_sensors=sc.num_sensors, forced_error_rate=forced)
    label = "M" if scheme is Scheme.JOINT else "M_h"
    print(f"{scheme.value}: {label}*={opt.best_blocklength} "
          f"(R={format_number(bits / opt.best_blocklength)})  "
          f"AoI={_slots(opt.best_aoi_slots, args, run)}  "
          f"searched [{opt.searched_range[0]}, {opt.searched_range[1]}]")
    if opt.at_range_boundary:
        print("minimum at range boundary: widen --m-min/--m-max")
    if args.rates:
        choice = optimize_coding_rate(scheme, sc, _values(args.rates, "rates"), forced)
        print(f"best rate on grid: R={format_number(choice.best_rate)} "
              f"({label}={choice.best_blocklength})  AoI={_slots(choice.best_aoi_slots, args, run)}")
    if args.output:
        emit_csv(profile_rows(opt), args.output)
        print(f"wrote {args.output}")
    _write_manifest(args, run, with_settings=False)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    run = _resolve(args)
    sc = run.scenario
    forced = run.settings.forced_error_rate
    hi = args.alpha_max if args.alpha_max is not None else sc.num_sensors * sc.per_sensor_bits - 1
    threshold = alpha_threshold(sc, forced)
    crossover = locate_crossover(sc, (args.alpha_min, hi), forced)
    print(f"scenario: {_describe(run)}")
    print(f"alpha_0 (low-error threshold) = {format_number(threshold.alpha_0)} bits")
    print(f"exact crossover              = {format_number(crossover)} bits")
    print(f"difference                   = {format_number(abs(crossover - threshold.alpha_0))} bits")
    _write_manifest(args, run, with_settings=False)
    return EXIT_OK


# ---------------------------
# ENTRY POINT
# ---------------------------

def _configure_logging(verbosity: int):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UnboundedAoIError, NoCrossoverError, ExportError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
