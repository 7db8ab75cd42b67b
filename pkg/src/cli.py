#!/usr/bin/env python3
# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Command-line interface for Envelopes.
Runs the envelope and St. Petersburg models and writes JSON/CSV reports.
"""

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

from . import __version__
from .config import (
    RunConfig,
    SEED_ENV_VAR,
    config_from_dict,
    config_to_dict,
    load_config_data,
    validate_config,
)
from .envelope_models import (
    DensitySpec,
    bayesian_envelope_report,
    build_bayesian_envelope,
    build_envelope_pair,
    envelope_pure_report,
    lln_experiment,
    naive_other_expectation,
    pure_switch_gain,
    single_pair_model,
)
from .errors import ConfigError, DomainError, ResourceError
from .measure_core import PureState, make_uniform_grid
from .measurement import RNG_ALGORITHM, ExperimentRecord, RngStream
from .stpetersburg_models import (
    build_stp,
    stp_parallel_experiment,
    stp_prob_other_greater,
    stp_truncated_expectation,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
# Trace columns written as integers in CSV output
INTEGER_COLUMNS = ("n", "m", "count")
# Commands whose output defaults to the CSV trace when nothing else decides
CSV_DEFAULT_COMMANDS = ("envelope-lln",)


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Log to standard error, plus a file when log_file is set."""
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _rng(config: RunConfig) -> RngStream:
    return RngStream(config.seed)


def _payouts(config: RunConfig) -> Tuple[float, float]:
    if config.omega is not None:
        return float(config.omega), 2.0 * config.omega
    return float(config.v1), float(config.v2)


def cmd_envelope_naive(config: RunConfig) -> Tuple[Dict[str, Any], Optional[ExperimentRecord]]:
    """The 1.25*alpha argument next to the zero gain at both candidate pairs."""
    alpha = config.alpha
    naive = naive_other_expectation(alpha)
    gains = []
    for v1, v2 in ((alpha / 2, alpha), (alpha, 2 * alpha)):
        model = single_pair_model(v1, v2)
        gains.append({"pair": [v1, v2], "gain": pure_switch_gain(model, PureState(0))})

    print(
        f"Naive E(other) = {naive.e_other:g} for alpha = {alpha:g} (invalid reasoning); "
        f"switching gain at a fixed pair = {gains[0]['gain']:g}",
        file=sys.stderr,
    )
    return {**naive.to_dict(), "pure_switch_gains": gains}, None


def cmd_envelope_pure(config: RunConfig) -> Tuple[Dict[str, Any], Optional[ExperimentRecord]]:
    """Fixed-state measurement, with the maximum-likelihood pairs for alpha on the grid."""
    v1, v2 = _payouts(config)
    model = single_pair_model(v1, v2)
    lattice = build_envelope_pair(
        make_uniform_grid(config.grid_lo, config.grid_hi, config.grid_n, align=config.grid_align)
    )
    report = envelope_pure_report(model, PureState(0), alpha=config.alpha, mle_model=lattice)

    print(
        f"Pair ({v1:g}, {v2:g}): switching gain {report['pure_switch_gain']:g}, "
        f"MLE pairs for alpha={config.alpha:g}: {report['mle']['maximizers']}",
        file=sys.stderr,
    )
    return report, None


def cmd_envelope_lln(config: RunConfig) -> Tuple[Dict[str, Any], Optional[ExperimentRecord]]:
    """Repeated quasi-product measurement with running averages."""
    v1, v2 = _payouts(config)
    record = lln_experiment(
        single_pair_model(v1, v2),
        PureState(0),
        config.trials,
        _rng(config),
        chunk_size=config.chunk_size,
        workers=config.workers,
    )
    stats = record.statistics
    print(
        f"After {config.trials} trials: you {stats['avg_you']:.4f}, host {stats['avg_host']:.4f} "
        f"(target {stats['target']:g})",
        file=sys.stderr,
    )
    return record.to_dict(), record


def cmd_envelope_bayes(config: RunConfig) -> Tuple[Dict[str, Any], Optional[ExperimentRecord]]:
    """Posterior at alpha and the switching gains under a prior density."""
    density = DensitySpec(
        name=config.density,
        loc=config.density_loc,
        scale=config.density_scale,
        shape=config.density_shape,
    )
    model, prior = build_bayesian_envelope(density, config.grid_lo, config.grid_hi, config.grid_n)
    report = bayesian_envelope_report(
        model,
        prior,
        config.alpha,
        density=density,
        trials=config.trials,
        rng=_rng(config),
        chunk_size=config.chunk_size,
        workers=config.workers,
    )
    weights = report.posterior_weights
    print(
        f"alpha={report.alpha:g}: posterior {weights['lower']['weight']:.4f} / "
        f"{weights['upper']['weight']:.4f}, conditional gain {report.conditional_gain:.4f}, "
        f"overall gain {report.unconditional_gain:.3g}",
        file=sys.stderr,
    )
    return report.to_dict(), None


def cmd_stpetersburg(config: RunConfig) -> Tuple[Dict[str, Any], Optional[ExperimentRecord]]:
    """Truncated expectation and/or probability criterion, plus sampled pairs."""
    model = build_stp(config.formulation, config.k_max, config.labeling)
    report: Dict[str, Any] = dict(model.describe())

    if config.criterion in ("expectation", "both"):
        expected = stp_truncated_expectation(model)
        report["partial_sum"] = expected.partial_sum
        report["divergence_flag"] = expected.divergent
    if config.criterion in ("probability", "both"):
        criterion = stp_prob_other_greater(config.m, config.k_max)
        report["m"] = config.m
        report["prob_other_greater_exact"] = float(criterion.exact)
        report["prob_other_greater_truncated"] = criterion.truncated

    record = stp_parallel_experiment(
        model,
        config.trials,
        _rng(config),
        chunk_size=config.chunk_size,
        workers=config.workers,
        max_cells=config.max_table_cells,
        m=config.m,
    )
    report["experiment"] = record.to_dict()
    report["verdict"] = record.statistics["switch_verdict"]

    print(
        f"St. Petersburg k_max={config.k_max}: P(y > 2^{config.m}) = {2.0 ** -config.m:g}, "
        f"sampled P(y > x) = {record.statistics['p_y_greater']:.4f}",
        file=sys.stderr,
    )
    return report, record


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], Tuple[Dict[str, Any], Optional[ExperimentRecord]]]] = {
    "envelope-naive": cmd_envelope_naive,
    "envelope-pure": cmd_envelope_pure,
    "envelope-lln": cmd_envelope_lln,
    "envelope-bayes": cmd_envelope_bayes,
    "stpetersburg": cmd_stpetersburg,
}


def report_body(config: RunConfig, report: Dict[str, Any]) -> Dict[str, Any]:
    """The reproducible part of a report: config, version and results."""
    return {"config": config_to_dict(config), "version": __version__, "report": report}


def render_json(config: RunConfig, report: Dict[str, Any]) -> str:
    document = report_body(config, report)
    document["metadata"] = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "rng_algorithm": RNG_ALGORITHM,
    }
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def render_csv(record: ExperimentRecord, stride: int) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(record.trace_columns)
    integer = [name in INTEGER_COLUMNS for name in record.trace_columns]
    for row in record.trace_rows(stride):
        writer.writerow([int(v) if as_int else v for v, as_int in zip(row, integer)])
    return buffer.getvalue()


def output_format(config: RunConfig) -> str:
    """Explicit format, else the output extension, else the command's default."""
    if config.format:
        return config.format
    suffix = Path(config.output).suffix.lower() if config.output else ""
    if suffix in (".csv", ".json"):
        return suffix[1:]
    return "csv" if config.command in CSV_DEFAULT_COMMANDS else "json"


def write_outputs(config: RunConfig, report: Dict[str, Any], record: Optional[ExperimentRecord]) -> None:
    fmt = output_format(config)
    if fmt == "csv" and (record is None or not record.trace_columns):
        raise ConfigError(f"Command '{config.command}' has no trace to write as CSV")

    text = render_csv(record, config.trace_stride) if fmt == "csv" else render_json(config, report)
    if not config.output:
        sys.stdout.write(text)
        return

    path = Path(config.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info(f"Wrote {fmt} output to {path}")
    if fmt == "csv":
        report_path = path.with_suffix(".report.json")
        report_path.write_text(render_json(config, report))
        logger.info(f"Wrote report to {report_path}")


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Options accepted both before and after the subcommand."""
    s = argparse.SUPPRESS
    parser.add_argument("--config", "-c", default=s, help="Flat YAML config file")
    parser.add_argument("--replay", default=s, help="Re-run the config embedded in a JSON report")
    parser.add_argument("--output", "-o", default=s, help="Output file (default: standard output)")
    parser.add_argument("--format", choices=["json", "csv"], default=s,
                        help="Output format (default: from the output extension, else csv for envelope-lln, json otherwise)")
    parser.add_argument("--seed", type=int, default=s, help=f"Random seed (default: ${SEED_ENV_VAR} or 12345)")
    parser.add_argument("--workers", type=int, default=s, help="Sampling threads (default: 1)")
    parser.add_argument("--chunk-size", dest="chunk_size", type=int, default=s,
                        help="Samples per random stream (default: 65536)")
    parser.add_argument("--verbose", "-v", action="store_true", default=s, help="Log progress")
    parser.add_argument("--log-file", dest="log_file", default=s, help="Also log to this file")


def _add_grid_arguments(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--grid-lo", dest="grid_lo", type=float, default=s, help="Grid lower end (default: 0)")
    parser.add_argument("--grid-hi", dest="grid_hi", type=float, default=s, help="Grid upper end (default: 30)")
    parser.add_argument("--grid-n", dest="grid_n", type=int, default=s, help="Grid cells (default: 30000)")


def _add_pair_arguments(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--v1", type=float, default=s, help="Smaller amount (default: 10)")
    parser.add_argument("--v2", type=float, default=s, help="Larger amount (default: 20)")
    parser.add_argument("--omega", type=float, default=s, help="Shorthand for --v1 OMEGA --v2 2*OMEGA")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envelopes",
        description="Envelopes - two-envelope and St. Petersburg measurement models",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  envelopes envelope-naive --alpha 100             The 1.25*alpha fallacy
  envelopes envelope-pure --v1 10 --v2 20          Fixed pair, zero switching gain
  envelopes envelope-lln --trials 100000 -o t.csv  Running averages as CSV
  envelopes envelope-bayes --density expon --alpha 2
  envelopes stpetersburg --k-max 10 --criterion probability --m 3
  envelopes --replay report.json                   Re-run an earlier report

Environment:
  ENVELOPES_SEED    Default random seed (default: 12345)
        """
    )
    _add_common_arguments(parser)
    s = argparse.SUPPRESS

    subparsers = parser.add_subparsers(dest="command", help="Command to run")
    common = argparse.ArgumentParser(add_help=False)
    _add_common_arguments(common)

    naive = subparsers.add_parser("envelope-naive", parents=[common], help="Naive 1.25*alpha expectation")
    naive.add_argument("--alpha", type=float, default=s, help="Amount found (default: 2)")

    pure = subparsers.add_parser("envelope-pure", parents=[common], help="Fixed-pair measurement and MLE")
    _add_pair_arguments(pure)
    pure.add_argument("--alpha", type=float, default=s, help="Amount found, for the MLE (default: 2)")
    _add_grid_arguments(pure)
    pure.add_argument("--grid-align", dest="grid_align", choices=["right", "midpoint"], default=s,
                      help="Grid labels (default: right)")

    lln = subparsers.add_parser("envelope-lln", parents=[common], help="Law of large numbers experiment")
    _add_pair_arguments(lln)
    lln.add_argument("--trials", type=int, default=s, help="Repetitions (default: 100000)")
    lln.add_argument("--trace-stride", dest="trace_stride", type=int, default=s,
                     help="Keep every k-th CSV row (default: 1)")

    bayes = subparsers.add_parser("envelope-bayes", parents=[common], help="Bayesian envelope model")
    bayes.add_argument("--density", default=s, help="scipy.stats prior name (default: expon)")
    bayes.add_argument("--density-loc", dest="density_loc", type=float, default=s, help="Prior loc (default: 0)")
    bayes.add_argument("--density-scale", dest="density_scale", type=float, default=s,
                       help="Prior scale (default: 1)")
    bayes.add_argument("--density-shape", dest="density_shape", type=float, default=s,
                       help="Prior shape for gamma, lognorm, pareto")
    bayes.add_argument("--alpha", type=float, default=s, help="Amount found (default: 2)")
    bayes.add_argument("--trials", type=int, default=s, help="Monte Carlo cross-check draws (default: 100000)")
    _add_grid_arguments(bayes)

    stp = subparsers.add_parser("stpetersburg", parents=[common], help="St. Petersburg two-envelope problem")
    stp.add_argument("--k-max", dest="k_max", type=int, default=s, help="Truncation depth (default: 10)")
    stp.add_argument("--m", type=int, default=s, help="Found 2^m dollars (default: 3)")
    stp.add_argument("--criterion", choices=["expectation", "probability", "both"], default=s,
                     help="Which criterion to report (default: both)")
    stp.add_argument("--formulation", choices=["pure", "statistical"], default=s,
                     help="Model formulation (default: pure)")
    stp.add_argument("--labeling", choices=["coin", "pin"], default=s,
                     help="State labeling for the statistical formulation (default: coin)")
    stp.add_argument("--trials", type=int, default=s, help="Sampled pairs (default: 100000)")
    stp.add_argument("--max-table-cells", dest="max_table_cells", type=int, default=s,
                     help="Largest product table to materialize (default: 1000000)")
    stp.add_argument("--trace-stride", dest="trace_stride", type=int, default=s,
                     help="Keep every k-th CSV row (default: 1)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file or replayed report, then flags."""
    options = vars(args)
    data: Dict[str, Any] = {}
    if "replay" in options:
        try:
            document = json.loads(Path(options["replay"]).read_text())
        except (OSError, ValueError) as e:
            raise ConfigError(f"Cannot replay {options['replay']}: {e}") from e
        if not isinstance(document, dict) or not isinstance(document.get("config"), dict):
            raise ConfigError(f"{options['replay']} has no embedded config")
        data.update(document["config"])
    else:
        data.update(load_config_data(options.get("config")))

    for key, value in options.items():
        if key in ("config", "replay", "verbose", "log_file") or value is None:
            continue
        data[key] = value
    return config_from_dict(data)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one command, and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    options = vars(args)
    configure_logging(options.get("verbose", False), options.get("log_file"))

    if not options.get("command") and "replay" not in options:
        parser.print_help(sys.stderr)
        return 0

    try:
        config = resolve_config(args)
        errors = validate_config(config)
        if errors:
            for error in errors:
                print(f"Config error: {error}", file=sys.stderr)
            return 2

        logger.info(f"Running {config.command} with seed {config.seed}")
        report, record = COMMAND_HANDLERS[config.command](config)
        write_outputs(config, report, record)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except (DomainError, ResourceError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    """Main entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
