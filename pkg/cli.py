"""
Command-line entry point for the Voxel Pyramid Toolkit

Sub-commands:
    voxelize      adaptive voxel pyramid for one point cloud
    eval          score a predicted cloud against a ground truth
    bench         time DR-MSV against the fixed-resolution baseline on a fixture directory
    pool          TAP-LME pooling demo, toy training and gradient check
    gen-fixtures  write the synthetic fixture suite

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
"""

import argparse
import glob
import os
import sys
from typing import Dict, List, Optional

from dotenv import dotenv_values

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import config
from core.evaluation import evaluate_clouds, timed_pipeline
from core.pipeline import VoxelPipeline
from core.pyramid import level_histogram
from core.report_formatter import ReportFormatter
from core.tap_lme import PoolingParams, forward
from core.tap_training import ToyTrainer, dataset_loss, gradient_check, load_tokens_csv, make_attention_task, save_loss_curve
from core.voxel_grid import CellLabel, GridConfig
from utils.data_loader import load_point_cloud
from utils.fixtures import FixtureGenerator

# Options that take no value; a config file enables them with a true-ish value
_FLAG_OPTIONS = {"verbose", "train", "grad-check", "synthetic"}
_TRUE_VALUES = {"1", "true", "yes", "on"}


# ============================================================================
# Argument parsing
# ============================================================================

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("common options")
    group.add_argument("--seed", type=int, default=config.DEFAULT_SEED,
                       help=f"Seed for every random draw (default: {config.DEFAULT_SEED})")
    group.add_argument("--threads", type=int, default=config.DEFAULT_THREADS,
                       help="Worker threads; 1 is the reproducible mode (default: 1)")
    group.add_argument("--config", metavar="FILE",
                       help="key=value file with option defaults; explicit flags win")
    group.add_argument("-v", "--verbose", action="store_true",
                       help="Print progress lines to standard error")
    group.add_argument("--format", choices=config.REPORT_FORMATS, default=config.DEFAULT_REPORT_FORMAT,
                       help=f"Report format (default: {config.DEFAULT_REPORT_FORMAT})")
    return common


def _grid_options() -> argparse.ArgumentParser:
    grid = argparse.ArgumentParser(add_help=False)
    group = grid.add_argument_group("grid options")
    group.add_argument("--resolution", type=int, default=config.DEFAULT_RESOLUTION,
                       help=f"Cells per axis, a power of two (default: {config.DEFAULT_RESOLUTION})")
    group.add_argument("--percentile", type=float, default=config.DEFAULT_PERCENTILE,
                       help=f"Threshold percentile for every metric (default: {config.DEFAULT_PERCENTILE:g})")
    group.add_argument("--rule", choices=config.CLASSIFICATION_RULES, default=config.DEFAULT_CLASSIFICATION_RULE,
                       help="Complex when any / all metrics reach their threshold")
    group.add_argument("--max-level", type=int, default=None,
                       help="Largest merge level (default: log2 of the resolution)")
    group.add_argument("--threshold", action="append", default=[], metavar="METRIC=VALUE",
                       help=f"Fixed threshold overriding the percentile; metrics: {', '.join(config.METRIC_NAMES)}")
    group.add_argument("--k", type=int, default=config.DEFAULT_NORMAL_NEIGHBORS,
                       help=f"Neighbors for normal estimation (default: {config.DEFAULT_NORMAL_NEIGHBORS})")
    return grid


def build_parser() -> argparse.ArgumentParser:
    """Parser with one sub-command per operation"""
    parser = argparse.ArgumentParser(
        prog="voxel-toolkit",
        description="Adaptive multi-scale voxelization, evaluation and token pooling",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python cli.py gen-fixtures --out fixtures --points 20000
  python cli.py voxelize --input fixtures/plane.ply --resolution 16 --percentile 75 --out pyr.txt
  python cli.py eval --pred pred.ply --gt fixtures/plane.ply --format json
  python cli.py bench --fixtures fixtures --mode both
  python cli.py pool --synthetic --variant all --train --loss-out loss.csv
  python cli.py pool --synthetic --grad-check
        """
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common_options()
    grid = _grid_options()

    voxelize = subparsers.add_parser("voxelize", parents=[common, grid],
                                     help="Build an adaptive voxel pyramid for one cloud")
    voxelize.add_argument("-i", "--input", required=True, help="Input point cloud (.ply, .xyz, .txt)")
    voxelize.add_argument("-o", "--out", required=True, help="Pyramid text file")
    voxelize.add_argument("--mode", choices=config.PIPELINE_MODES, default="dr-msv",
                          help="dr-msv merges simple regions, frv keeps the fixed grid")
    voxelize.add_argument("--metrics-out", help="Per-cell metrics CSV (default: <out>.metrics.csv)")
    voxelize.add_argument("--centers-out", help="Leaf-center PLY (default: <out>.centers.ply)")
    voxelize.add_argument("--grid-out", help="Optional level-0 grid text file")
    voxelize.set_defaults(handler=cmd_voxelize)

    evaluate = subparsers.add_parser("eval", parents=[common],
                                     help="Score a predicted cloud against a ground truth")
    evaluate.add_argument("--pred", required=True, help="Predicted point cloud")
    evaluate.add_argument("--gt", required=True, help="Ground-truth point cloud")
    evaluate.add_argument("--resolution", type=int, default=config.DEFAULT_RESOLUTION,
                          help="Ground-truth occupancy resolution")
    evaluate.add_argument("--pred-resolution", type=int, default=None,
                          help="Prediction occupancy resolution (default: --resolution)")
    evaluate.add_argument("--radius", type=float, default=config.DEFAULT_F1_RADIUS,
                          help="F1 match tolerance (default: one cell edge)")
    evaluate.set_defaults(handler=cmd_eval)

    bench = subparsers.add_parser("bench", parents=[common, grid],
                                  help="Time DR-MSV and FRV over a fixture directory")
    bench.add_argument("--fixtures", required=True, metavar="DIR", help="Directory of point cloud files")
    bench.add_argument("--mode", choices=config.BENCH_MODES, default="both", help="Pipelines to time")
    bench.add_argument("--batch-size", type=int, default=config.DEFAULT_BATCH_SIZE,
                       help="Shapes per batch for the per-batch timing")
    bench.add_argument("--radius", type=float, default=config.DEFAULT_F1_RADIUS,
                       help="F1 match tolerance (default: one cell edge)")
    bench.add_argument("--downstream-epochs", type=int, default=config.DOWNSTREAM_EPOCHS,
                       help="Leaf consumer passes per shape, timed after each run (0 skips)")
    bench.set_defaults(handler=cmd_bench)

    pool = subparsers.add_parser("pool", parents=[common], help="TAP-LME pooling demo, training and gradient check")
    source = pool.add_mutually_exclusive_group(required=True)
    source.add_argument("--tokens", help="Token matrix CSV, one token per row, no header")
    source.add_argument("--synthetic", action="store_true", help="Use the synthetic attention task")
    pool.add_argument("--variant", choices=list(config.POOLING_VARIANTS) + ["all"], default="tap_res_learnt",
                      help="Pooling variant (default: tap_res_learnt)")
    pool.add_argument("--params", help="Parameter file to start from (default: seeded initialization)")
    pool.add_argument("--train", action="store_true", help="Train on the synthetic task before pooling")
    pool.add_argument("--epochs", type=int, default=config.DEFAULT_EPOCHS)
    pool.add_argument("--step-size", type=float, default=config.DEFAULT_STEP_SIZE)
    pool.add_argument("--grad-check", action="store_true", help="Run the finite-difference gradient check")
    pool.add_argument("--loss-out", help="Loss curve CSV (per variant suffix when several)")
    pool.add_argument("--params-out", help="Parameter file (per variant suffix when several)")
    pool.set_defaults(handler=cmd_pool)

    fixtures = subparsers.add_parser("gen-fixtures", parents=[common], help="Write the synthetic fixture suite")
    fixtures.add_argument("-o", "--out", required=True, metavar="DIR", help="Output directory")
    fixtures.add_argument("--points", type=int, default=config.DEFAULT_FIXTURE_POINTS,
                          help=f"Points per fixture (default: {config.DEFAULT_FIXTURE_POINTS})")
    fixtures.add_argument("--names", nargs="+", choices=config.FIXTURE_NAMES, default=None,
                          help="Subset of fixtures (default: all)")
    fixtures.set_defaults(handler=cmd_gen_fixtures)

    return parser


def config_file_args(file_path: str) -> List[str]:
    """
    Turn a key=value config file into command-line tokens

    Keys are option names with '-' or '_' (resolution=32, max_level=2).

    Args:
        file_path: Config file

    Returns:
        Tokens to place in front of the explicit flags
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Config file not found: {file_path}")

    tokens: List[str] = []
    for key, value in dotenv_values(file_path).items():
        option = key.strip().lower().replace("_", "-")
        if option == "config":
            continue
        if option in _FLAG_OPTIONS:
            if value is not None and value.strip().lower() in _TRUE_VALUES:
                tokens.append(f"--{option}")
            continue
        if value is None or value == "":
            raise ValueError(f"{file_path}: key '{key}' has no value")
        tokens += [f"--{option}", value]
    return tokens


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse argv, folding in --config values ahead of the explicit flags"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        position = argv.index(args.command) + 1
        args = parser.parse_args(argv[:position] + config_file_args(args.config) + argv[position:])
    return args


def _parse_thresholds(items: List[str]) -> Optional[Dict[str, float]]:
    thresholds = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--threshold expects METRIC=VALUE, got '{item}'")
        try:
            thresholds[name.strip()] = float(value)
        except ValueError:
            raise ValueError(f"--threshold {name.strip()}: '{value}' is not a number") from None
    return thresholds or None


def grid_config_from_args(args: argparse.Namespace) -> GridConfig:
    """GridConfig from the grid options (validated before any work starts)"""
    return GridConfig(
        resolution=args.resolution,
        percentile=args.percentile,
        fixed_thresholds=_parse_thresholds(args.threshold),
        max_merge_level=args.max_level,
        classification_rule=args.rule,
        threads=args.threads,
    )


def _require_file(path: str, what: str):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _variant_path(path: str, variant: str, n_variants: int) -> str:
    if n_variants == 1:
        return path
    root, ext = os.path.splitext(path)
    return f"{root}.{variant}{ext}"


# ============================================================================
# Commands
# ============================================================================

def cmd_voxelize(args: argparse.Namespace) -> int:
    """load -> normalize -> normals -> voxelize -> metrics -> thresholds -> classify -> merge"""
    grid_config = grid_config_from_args(args)
    formatter = ReportFormatter(args.format)
    _require_file(args.input, "Input point cloud")

    pipeline = VoxelPipeline(grid_config, mode=args.mode, k=args.k, show_progress=args.verbose)
    result = pipeline.run(args.input)

    stem = os.path.splitext(args.out)[0]
    VoxelPipeline.write_outputs(
        result,
        pyramid_path=args.out,
        metrics_path=args.metrics_out or f"{stem}.metrics.csv",
        centers_path=args.centers_out or f"{stem}.centers.ply",
        grid_path=args.grid_out,
        show_progress=args.verbose,
    )

    summary = {
        "input": args.input,
        "mode": config.PIPELINE_MODE_LABELS[args.mode],
        "resolution": grid_config.resolution,
        "points": len(result.cloud),
        "occupied_cells": len(result.grid),
        "complex_cells": sum(1 for cell in result.grid if cell.label == CellLabel.COMPLEX),
        "leaves": len(result.pyramid),
        "rounds": result.pyramid.rounds_executed,
        "leaves_per_level": {str(level): count for level, count in level_histogram(result.pyramid).items()},
        "data_prep_s": result.timings["data_prep"],
        "fit_s": result.timings["fit"],
    }
    print(formatter.format_summary(summary))
    return config.EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Chamfer, F1 and occupancy scores of --pred against --gt"""
    formatter = ReportFormatter(args.format)
    _require_file(args.pred, "Predicted point cloud")
    _require_file(args.gt, "Ground-truth point cloud")

    pred = load_point_cloud(args.pred, show_progress=args.verbose)
    gt = load_point_cloud(args.gt, show_progress=args.verbose)
    report = evaluate_clouds(
        pred, gt,
        resolution=args.resolution,
        pred_resolution=args.pred_resolution,
        radius=args.radius,
        threads=args.threads,
    )
    print(formatter.format_report(report))
    return config.EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    """Comparison table of the timed pipelines over every cloud in --fixtures"""
    grid_config = grid_config_from_args(args)
    formatter = ReportFormatter(args.format)
    if not os.path.isdir(args.fixtures):
        raise FileNotFoundError(f"Fixture directory not found: {args.fixtures}")

    paths = sorted(
        path for path in glob.glob(os.path.join(args.fixtures, "*"))
        if os.path.splitext(path)[1].lower() in config.FORMAT_BY_EXTENSION and os.path.isfile(path)
    )
    if not paths:
        extensions = ", ".join(config.FORMAT_BY_EXTENSION)
        raise ValueError(f"No point cloud files ({extensions}) in {args.fixtures}")

    reports = [
        timed_pipeline(paths, grid_config, mode=mode, batch_size=args.batch_size,
                       radius=args.radius, downstream_epochs=args.downstream_epochs,
                       show_progress=args.verbose)
        for mode in config.BENCH_MODE_PIPELINES[args.mode]
    ]
    print(formatter.format_bench(reports))
    return config.EXIT_OK


def cmd_pool(args: argparse.Namespace) -> int:
    """Pool one token matrix per variant, optionally after toy training, optionally gradient-checked"""
    formatter = ReportFormatter(args.format)
    variants = list(config.POOLING_VARIANTS) if args.variant == "all" else [args.variant]
    if args.train and not args.synthetic:
        raise ValueError("--train needs --synthetic: a token CSV carries no regression targets")

    if args.synthetic:
        dataset = make_attention_task(seed=args.seed)
        tokens = dataset[0][0]
    else:
        dataset = None
        tokens = load_tokens_csv(args.tokens)

    initial = PoolingParams.load(args.params) if args.params else PoolingParams.initialize(tokens.shape[1], args.seed)

    results = {}
    for variant in variants:
        params = initial
        losses = {}
        if args.train:
            trainer = ToyTrainer(variant, epochs=args.epochs, step_size=args.step_size,
                                 seed=args.seed, show_progress=args.verbose)
            params, loss_curve = trainer.train(dataset, initial)
            losses["initial_loss"] = dataset_loss(dataset, initial, variant)
            losses["final_loss"] = loss_curve[-1] if loss_curve else losses["initial_loss"]
            if args.loss_out:
                save_loss_curve(loss_curve, _variant_path(args.loss_out, variant, len(variants)))
        if args.params_out:
            params.save(_variant_path(args.params_out, variant, len(variants)))

        output = forward(tokens, params, variant)
        results[variant] = {
            "lambda": float(output.lam),
            "g": output.g.tolist(),
            "g_max": output.g_max.tolist(),
            "alpha": output.alpha.tolist(),
            **losses,
        }

    exit_code = config.EXIT_OK
    if args.grad_check:
        check = gradient_check(seed=args.seed, variants=variants, show_progress=args.verbose)
        results["gradient_check"] = {
            "max_relative_error": check.max_relative_error,
            "configs": check.n_configs,
            "passed": check.passed,
        }
        if not check.passed:
            exit_code = config.EXIT_RUNTIME_ERROR

    print(formatter.format_pooling(results))
    return exit_code


def cmd_gen_fixtures(args: argparse.Namespace) -> int:
    """Write plane, sphere, cube_edges, line and mixed as ascii PLY"""
    formatter = ReportFormatter(args.format)
    if args.points < 1:
        raise ValueError(f"--points must be >= 1, got {args.points}")

    paths = FixtureGenerator(args.points, args.seed).write_all(args.out, args.names, show_progress=args.verbose)
    names = args.names or config.FIXTURE_NAMES
    print(formatter.format_summary(dict(zip(names, paths))))
    return config.EXIT_OK


# ============================================================================
# Entry point
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Process exit code
    """
    try:
        args = parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:
        # argparse usage errors (2) and --help (0)
        return exc.code if isinstance(exc.code, int) else config.EXIT_OK
    except (ValueError, FileNotFoundError) as exc:
        print(f"✗ Error: {exc}", file=sys.stderr)
        return config.EXIT_USAGE_ERROR
    except Exception as exc:
        print(f"✗ Error: {exc}", file=sys.stderr)
        return config.EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
