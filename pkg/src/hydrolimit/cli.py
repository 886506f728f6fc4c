"""
Command-line interface for hydrolimit

Each subcommand loads an ExperimentConfig (file plus overrides), runs one
harness pipeline and prints its result. Exit code 0 when every check of
the run passes, 1 when a check fails, 2 for usage or configuration errors.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from pydantic import ValidationError

from . import __version__
from .core import logger, settings, error_handler, ErrorCategory, ErrorSeverity, HydroLimitError, DomainError
from .core.artifact_store import dumps_json
from .utils.io_utils import IOUtils
from .services import experiment_harness as harness

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(pairs: List[str]) -> Dict[str, Any]:
    """``key.sub=value`` pairs; values are read as JSON when they parse"""
    overrides = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        overrides[key.strip()] = _parse_value(value.strip())
    return overrides


def _shortcut_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    mapping = {
        "N": "geometry.N", "d": "geometry.d", "K": "K", "eps": "certificate.eps",
        "replicas": "replicas", "seed": "seed", "output": "output_dir", "workers": "workers",
        "t_end": "t_end",
    }
    return {key: getattr(args, name) for name, key in mapping.items()
            if getattr(args, name, None) is not None}


def load_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    overrides = parse_overrides(args.set)
    overrides.update(_shortcut_overrides(args))
    return harness.ExperimentConfig.from_file(args.config, overrides)


def plot_series(csv_path: Path, x: str, y: str, group: Optional[str], output: Path) -> Dict[str, Any]:
    """Line chart of one CSV written by a run, saved as SVG"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frame = IOUtils.read_series(csv_path)
    missing = [c for c in (x, y, group) if c is not None and c not in frame.columns]
    if missing:
        raise DomainError(f"columns {missing} not in {csv_path}", {"columns": list(frame.columns)})
    fig, ax = plt.subplots(figsize=(7, 4))
    if group is None:
        ax.plot(frame[x], frame[y])
    else:
        for key, sub in frame.groupby(group):
            ax.plot(sub[x], sub[y], label=f"{group}={key}")
        ax.legend(fontsize="small")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    fig.tight_layout()
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, format="svg")
    plt.close(fig)
    logger.log_file_operation("plot", str(output), output.stat().st_size)
    return {"output": str(output), "rows": len(frame), "passed": True}


def find_series(run_dir: Path, columns: List[str]) -> Path:
    """First CSV of a run directory that carries every requested column"""
    for path in IOUtils.list_csv(run_dir):
        header = IOUtils.read_series(path).columns
        if all(c in header for c in columns):
            return path
    raise DomainError(f"no CSV in {run_dir} has columns {columns}")


def _run_plot(args: argparse.Namespace) -> Dict[str, Any]:
    source = Path(args.input)
    if source.is_dir():
        source = find_series(source, [c for c in (args.x, args.y, args.group) if c is not None])
    output = Path(args.svg) if args.svg else source.with_suffix(".svg")
    return plot_series(source, args.x, args.y, args.group, output)


COMMANDS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "design-rates": harness.run_design,
    "wave": harness.run_wave,
    "pde": harness.run_pde_ladder,
    "certify": harness.run_certificates,
    "hydro": harness.run_hydrodynamic,
    "oracle": harness.run_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON or TOML experiment config")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, dotted keys allowed (repeatable)")
    common.add_argument("--N", type=int, default=None, help="lattice side")
    common.add_argument("--d", type=int, default=None, choices=[1, 2], help="dimension")
    common.add_argument("--K", type=float, default=None, help="reaction scale K > 1")
    common.add_argument("--eps", type=float, default=None, help="interface width for certificates")
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--t-end", dest="t_end", type=float, default=None)
    common.add_argument("--workers", type=int, default=None, help="replica worker processes")
    common.add_argument("--output", type=str, default=None, help="output root directory")
    common.add_argument("--log-level", type=str, default=None)

    parser = argparse.ArgumentParser(
        prog="hydrolimit",
        description="Glauber-Kawasaki hydrodynamic-limit laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Example: hydrolimit certify --N 256 --K 16 --eps 0.02",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design-rates", parents=[common], help="design a rate table for the target cubic")
    sub.add_parser("wave", parents=[common], help="solve and save the traveling wave")
    sub.add_parser("pde", parents=[common], help="run the P_N^K ladder")
    kmc = sub.add_parser("kmc", parents=[common], help="run particle replicas")
    kmc.add_argument("--entropy-proxy", action="store_true",
                     help="also compare block densities with the lattice PDE")
    sub.add_parser("certify", parents=[common], help="build the comparison certificate")
    hydro = sub.add_parser("hydro", parents=[common], help="compare the particle system with the front limit")
    hydro.add_argument("--sweep", action="store_true",
                       help="run every size in sweep.N_values and check the scaling across N")
    sub.add_parser("oracle", parents=[common], help="check Monte Carlo against the exact law")
    plot = sub.add_parser("plot", help="render a run CSV as an SVG line chart")
    plot.add_argument("input", type=str, help="CSV file, or a run directory to search for one")
    plot.add_argument("--x", type=str, default="t")
    plot.add_argument("--y", type=str, default="density")
    plot.add_argument("--group", type=str, default=None)
    plot.add_argument("--svg", type=str, default=None, help="output path (default: next to the CSV)")
    plot.add_argument("--log-level", type=str, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if args.log_level:
        logger.set_level(args.log_level)

    try:
        if args.command == "plot":
            result = _run_plot(args)
        else:
            cfg = load_config(args)
            if args.workers is not None:
                settings.processing.parallel_workers = max(1, args.workers)
            if args.command == "kmc":
                result = harness.run_kmc(cfg, entropy_proxy=args.entropy_proxy)
            elif args.command == "hydro" and args.sweep:
                result = harness.run_hydro_sweep(cfg)
            else:
                result = COMMANDS[args.command](cfg)
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except DomainError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except HydroLimitError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILED
    except Exception as e:
        error_handler.handle_error(error=e, context={"command": args.command},
                                   category=ErrorCategory.UNKNOWN, severity=ErrorSeverity.CRITICAL)
        return EXIT_FAILED

    sys.stdout.write(dumps_json(result))
    return EXIT_OK if result.get("passed", False) else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
