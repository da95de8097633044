"""
Command-line interface for the LFM GAN toolkit.

Subcommands: train, pairs, fid, sample, bench2d and stats. Exit codes are
0 on success, 1 when a pairs check fails, 2 for configuration or argument
errors, 3 for runtime aborts and 4 for I/O failures.
"""

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..config import Config, TrainConfig, config, resolve_seed
from ..core import (
    ConfigError,
    DataValidationError,
    LfmError,
    LfmMode,
    PairVariant,
    ShapeError,
)
from ..data import build_dataset, load_image_folder
from ..eval import build_extractor, feature_stats, frechet_distance, load_stats, save_stats
from ..formats import PointsLoader, RecordsLoader, loader_for, to_uint8, write_points
from ..latent import orthogonal_pairs, rejection_rate
from ..plots import line_chart
from ..train import reference_samples, sample_generator, train
from ..train.checkpoint import FORMAT_TAG, load_checkpoint
from ..utils import atomic_write_text, create_manifest, save_metadata, utc_timestamp

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

MANIFEST_FILE = "manifest.json"
CONFIG_SNAPSHOT = "config.conf"
FID_COLUMNS = ("source", "reference", "extractor", "n", "fid")
BENCH_COLUMNS = (
    "arm", "seed", "steps", "min_fid", "final_fid", "final_coverage", "final_hq_fraction", "wall_s",
)
BENCH_ARMS = ("baseline", "lfm", "g_only")
ORTHOGONALITY_TOL = 1e-5

# Toy benchmark settings applied unless the config file sets them.
BENCH_DEFAULTS = {
    "data.kind": "ring",
    "model.kind": "mlp",
    "model.z_dim": 16,
    "model.hidden": 128,
    "eval.extractor": "identity",
    "train.checkpoint_every": 0,
    "train.log_every": 1000,
}


def setup_logging(level: str = "INFO") -> None:
    """
    Send toolkit log records to stderr.

    Training progress, skipped images and eigenvalue clipping are reported
    through the module loggers; the line format comes from the
    ``logging.format`` configuration key.

    Args:
        level: DEBUG, INFO, WARNING or ERROR
    """
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=config.get("logging.format"),
    )


def _load_config(args) -> Config:
    return Config(args.config) if args.config else Config()


def _parse_sets(items: List[str]) -> Dict[str, str]:
    values = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _write_manifest(directory: Path, config_text: str, seed: int, started_at: str,
                    outputs: List[Path], **extra) -> Path:
    manifest = create_manifest(config_text, seed, __version__, started_at, outputs, directory,
                               extra=extra or None)
    path = directory / MANIFEST_FILE
    save_metadata(manifest, path)
    return path


def train_command(args) -> int:
    """Handle train command."""
    started_at = utc_timestamp()
    cfg = _load_config(args)
    overrides = {
        "lfm.lambda_d": args.lambda_d,
        "lfm.lambda_g": args.lambda_g,
        "lfm.mode": args.lfm_mode,
        "lfm.pair_variant": args.pair_variant,
        "train.iterations": args.iterations,
        "train.batch_size": args.batch_size,
        "train.output_dir": args.output_dir,
        "train.dtype": args.dtype,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    cfg.update(_parse_sets(args.set))
    seed = resolve_seed(args.seed, cfg)
    train_cfg = TrainConfig.from_config(cfg, seed=seed)

    run = train(train_cfg, resume=args.resume)
    resolved = run.state.config
    snapshot = run.output_dir / CONFIG_SNAPSHOT
    config_text = resolved.to_config().to_text()
    atomic_write_text(snapshot, config_text)
    extra: Dict[str, Any] = {"command": "train", "iterations": run.state.iteration}
    if args.resume:
        extra["resumed_from"] = str(args.resume)
    if run.coverage is not None:
        extra["final_coverage"] = run.coverage.modes_covered
        extra["final_hq_fraction"] = run.coverage.high_quality_fraction
    manifest = _write_manifest(run.output_dir, config_text, resolved.seed, started_at,
                               [*run.outputs, snapshot], **extra)
    print(f"Trained {run.state.iteration} iterations; outputs in {run.output_dir} ({manifest.name})")
    return EXIT_OK


def _max_pair_dot(values: np.ndarray) -> float:
    if len(values) % 2:
        raise DataValidationError(f"Pair files need an even row count, got {len(values)}")
    half = len(values) // 2
    dots = np.einsum("ij,ij->i", values[:half], values[half:])
    return float(np.abs(dots).max()) if half else 0.0


def _check_pairs(path: Path) -> int:
    values = PointsLoader(path).load()["points"]
    worst = _max_pair_dot(values)
    # only the z- half has a solved, bounded last coordinate
    last = values[len(values) // 2:, -1]
    print(f"{path}: {len(values) // 2} pairs, max |z+ . z-| = {worst:.3e}, "
          f"z- last coordinate in [{last.min(initial=0.0):.6f}, {last.max(initial=0.0):.6f}]")
    if worst > ORTHOGONALITY_TOL:
        logger.error(f"Pair dot product {worst:.3e} exceeds {ORTHOGONALITY_TOL:g}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def pairs_command(args) -> int:
    """Handle pairs command."""
    if args.check:
        return _check_pairs(Path(args.check))

    cfg = _load_config(args)
    seed = resolve_seed(args.seed, cfg)
    rng = np.random.default_rng(seed)
    batch = orthogonal_pairs(args.count, args.z_dim, args.variant, rng)
    out = Path(args.out)
    write_points(out, batch.values, prefix="z")
    print(f"Wrote {args.count // 2} {batch.variant.value} pairs (z_dim={args.z_dim}, seed={seed}) "
          f"to {out}; max |z+ . z-| = {_max_pair_dot(batch.values):.3e}")

    if args.rejection_trials:
        estimate_rng = np.random.default_rng([seed, 1])
        print("variant,z_dim,trials,rate,ci95")
        for variant in (PairVariant.ABS, PairVariant.NO_ABS):
            est = rejection_rate(variant, args.z_dim, args.rejection_trials, estimate_rng)
            print(f"{variant.value},{args.z_dim},{est.trials},{est.rate:.6f},{est.ci95:.6f}")
    return EXIT_OK


def _load_samples(path: Path, n: int, image_size: int, seed: int) -> np.ndarray:
    """
    Samples from a PPM directory, a points CSV, a record file holding a
    ``samples`` or ``images`` tensor, or a checkpoint (generated with
    plain Gaussian noise).
    """
    if not path.exists():
        raise FileNotFoundError(f"Path does not exist: {path}")
    if path.is_dir():
        return load_image_folder(path, image_size, n).images
    loader = loader_for(path)
    data = loader.load()
    if isinstance(loader, PointsLoader):
        return data["points"][:n]
    if not isinstance(loader, RecordsLoader):
        raise DataValidationError(f"{path}: pass a folder of images, not a single image")
    if _record_header(data).get("format") == FORMAT_TAG:
        state = load_checkpoint(path)
        return sample_generator(state, n, np.random.default_rng(seed))
    tensors = data["tensors"]
    if "samples" in tensors:
        return np.asarray(tensors["samples"], dtype=np.float64)[:n]
    if "images" in tensors:
        return load_image_folder(path, image_size, n).images
    raise DataValidationError(f"{path} holds neither samples nor images")


def _record_header(data: Dict[str, Any]) -> Dict[str, Any]:
    try:
        header = json.loads(data["header"]) if data["header"] else {}
    except ValueError:
        return {}
    return header if isinstance(header, dict) else {}


def _is_stats_file(path: Path) -> bool:
    if not path.is_file():
        return False
    try:
        loader = loader_for(path)
    except ValueError:
        return False
    if not isinstance(loader, RecordsLoader):
        return False
    return _record_header(loader.load()).get("kind") == "gaussian_stats"


def fid_command(args) -> int:
    """Handle fid command."""
    cfg = _load_config(args)
    seed = resolve_seed(args.seed, cfg)
    n = args.n if args.n is not None else cfg.get("eval.n")
    image_size = cfg.get("data.image_size")
    extractor = build_extractor(
        args.extractor or cfg.get("eval.extractor"),
        args.extractor_seed if args.extractor_seed is not None else cfg.get("eval.extractor_seed"),
        args.extractor_checkpoint or cfg.get("eval.extractor_checkpoint"),
    )

    source = Path(args.source)
    samples = _load_samples(source, n, image_size, seed)
    reference = Path(args.ref)
    if _is_stats_file(reference):
        ref_stats, tag = load_stats(reference)
        if tag != extractor.tag:
            raise ConfigError(f"{reference} holds {tag!r} statistics, requested {extractor.tag!r}")
    else:
        ref_stats = feature_stats(_load_samples(reference, n, image_size, seed), extractor)

    value = frechet_distance(feature_stats(samples, extractor), ref_stats)
    print(f"fid = {value!r} (n={len(samples)}, extractor={extractor.tag})")

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        new_file = not out.exists() or out.stat().st_size == 0
        with open(out, "a", newline="") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(FID_COLUMNS)
            writer.writerow([str(source), str(reference), extractor.tag, len(samples), repr(value)])
    return EXIT_OK


def sample_command(args) -> int:
    """Handle sample command."""
    started_at = utc_timestamp()
    cfg = _load_config(args)
    seed = resolve_seed(args.seed, cfg)
    state = load_checkpoint(args.checkpoint)
    samples = sample_generator(state, args.n, np.random.default_rng(seed))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    outputs: List[Path] = []
    if samples.ndim == 4:
        for i, image in enumerate(samples):
            path = out_dir / f"sample_{i:04d}.ppm"
            loader_for(path).save({"image": to_uint8(image)})
            outputs.append(path)
    else:
        path = out_dir / "points.csv"
        loader_for(path).save({"points": samples})
        outputs.append(path)

    _write_manifest(out_dir, state.config.to_config().to_text(), seed, started_at, outputs,
                    command="sample", checkpoint=loader_for(args.checkpoint).get_metadata(), n=args.n)
    print(f"Wrote {args.n} samples to {out_dir}")
    return EXIT_OK


def _arm_config(base: Dict[str, Any], arm: str, seed: int, steps: int, output_dir: Path) -> TrainConfig:
    values = dict(base, seed=seed, iterations=steps, output_dir=str(output_dir))
    if arm == "baseline":
        values.update(lfm_mode=LfmMode.OFF.value, lambda_d=0.0, lambda_g=0.0)
    elif arm == "lfm":
        values.update(lfm_mode=LfmMode.FULL.value)
    elif arm == "g_only":
        values.update(lfm_mode=LfmMode.G_ONLY.value)
    else:
        raise ConfigError(f"Unknown benchmark arm {arm!r}")
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def _bench_run(job: Tuple[Dict[str, Any], str, int, int, str]) -> Dict[str, Any]:
    """One benchmark arm for one seed; runs in a worker process when --jobs > 1."""
    base, arm, seed, steps, output_dir = job
    cfg = _arm_config(base, arm, seed, steps, Path(output_dir))
    start = time.perf_counter()
    run = train(cfg)
    wall = time.perf_counter() - start
    curve = [(m.iteration, m.fid) for m in run.state.history if m.fid is not None]
    fids = [f for _, f in curve]
    return {
        "arm": arm,
        "seed": seed,
        "steps": steps,
        "min_fid": min(fids) if fids else float("nan"),
        "final_fid": fids[-1] if fids else float("nan"),
        "final_coverage": run.coverage.modes_covered if run.coverage else "",
        "final_hq_fraction": run.coverage.high_quality_fraction if run.coverage else "",
        "wall_s": round(wall, 3),
        "curve": curve,
        "outputs": [str(p) for p in run.outputs],
    }


def _median_curve(curves: List[List[Tuple[int, float]]]) -> Tuple[List[int], List[float]]:
    length = min(len(c) for c in curves)
    xs = [it for it, _ in curves[0][:length]]
    ys = np.median(np.array([[f for _, f in c[:length]] for c in curves]), axis=0)
    return xs, ys.tolist()


def bench2d_command(args) -> int:
    """Handle bench2d command."""
    started_at = utc_timestamp()
    cfg = _load_config(args)
    cfg.update({k: v for k, v in BENCH_DEFAULTS.items() if k not in cfg.explicit})
    if args.eval_every is not None:
        cfg.set("eval.every", args.eval_every)
    if args.lambda_d is not None:
        cfg.set("lfm.lambda_d", args.lambda_d)
    if args.lambda_g is not None:
        cfg.set("lfm.lambda_g", args.lambda_g)
    cfg.update(_parse_sets(args.set))
    if cfg.get("data.kind") != "ring":
        raise ConfigError("data.kind: bench2d runs on the ring mixture only")
    base = TrainConfig.from_config(cfg).as_dict()

    arms = ["baseline", "lfm"] + (["g_only"] if args.g_only else [])
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(base, arm, seed, args.steps, str(out_dir / f"{arm}_seed{seed}"))
            for arm in arms for seed in args.seeds]
    logger.info(f"Benchmark: {len(jobs)} runs ({', '.join(arms)} x seeds {args.seeds}), "
                f"{args.steps} steps, {args.jobs} process(es)")

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_run, jobs))
    else:
        results = [_bench_run(job) for job in jobs]

    summary = out_dir / "bench_summary.csv"
    with open(summary, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_COLUMNS)
        for row in results:
            writer.writerow([row[c] for c in BENCH_COLUMNS])

    outputs: List[Path] = [summary]
    medians = {}
    for arm in arms:
        arm_rows = [r for r in results if r["arm"] == arm]
        curves = [r["curve"] for r in arm_rows if r["curve"]]
        if curves:
            series = {f"seed {r['seed']}": ([i for i, _ in r["curve"]], [f for _, f in r["curve"]])
                      for r in arm_rows if r["curve"]}
            outputs.append(line_chart(out_dir / f"fid_{arm}.svg", series,
                                      title=f"FID proxy, {arm}", ylabel="fid"))
            medians[arm] = _median_curve(curves)
        coverage = [r["final_coverage"] for r in arm_rows if r["final_coverage"] != ""]
        min_fid = min(r["min_fid"] for r in arm_rows)
        print(f"{arm}: median final coverage "
              f"{float(np.median(coverage)) if coverage else float('nan'):.1f}, min fid {min_fid:.5f}")
        outputs.extend(Path(p) for r in arm_rows for p in r["outputs"])
    if medians:
        outputs.append(line_chart(out_dir / "fid_median.svg", medians,
                                  title="Median FID proxy across seeds", ylabel="fid"))

    _write_manifest(out_dir, cfg.to_text(), int(args.seeds[0]), started_at, outputs,
                    command="bench2d", arms=arms, seeds=list(args.seeds), steps=args.steps)
    print(f"Wrote {summary}")
    return EXIT_OK


def stats_command(args) -> int:
    """Handle stats command."""
    cfg = _load_config(args)
    if args.data:
        cfg.update({"data.kind": "images", "data.path": args.data})
    seed = resolve_seed(args.seed, cfg)
    kind = cfg.get("data.kind")
    extractor_kind = args.extractor or cfg.get("eval.extractor")
    if kind == "images" and extractor_kind == "identity":
        raise ConfigError("eval.extractor: identity features are only meant for 2-D data")
    dataset = build_dataset(
        kind, seed, path=cfg.get("data.path"), image_size=cfg.get("data.image_size"),
        subset_n=cfg.get("data.subset_n"), ring_modes=cfg.get("data.ring_modes"),
        ring_radius=cfg.get("data.ring_radius"), ring_sigma=cfg.get("data.ring_sigma"),
        ring_n=cfg.get("data.ring_n"),
    )
    extractor = build_extractor(
        extractor_kind,
        args.extractor_seed if args.extractor_seed is not None else cfg.get("eval.extractor_seed"),
        cfg.get("eval.extractor_checkpoint"),
    )
    stats = feature_stats(reference_samples(dataset, seed), extractor)
    save_stats(args.out, stats, extractor.tag)
    print(f"Wrote {extractor.tag} statistics over {stats.n} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfmgan",
        description="GAN training with latent feature maximization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--config",
        type=str,
        help="Path to a key = value configuration file",
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=None,
        help="Set logging level (default: logging.level from the configuration)",
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Train command
    train_parser = subparsers.add_parser("train", help="Train a GAN")
    train_parser.add_argument("--seed", type=int, help="Run seed (overrides train.seed and LFM_SEED)")
    train_parser.add_argument("--resume", help="Checkpoint to continue from")
    train_parser.add_argument("--lambda-d", type=float, help="LFM weight on the discriminator")
    train_parser.add_argument("--lambda-g", type=float, help="LFM weight on the generator")
    train_parser.add_argument("--lfm-mode", choices=[m.value for m in LfmMode])
    train_parser.add_argument("--pair-variant", choices=[v.value for v in PairVariant])
    train_parser.add_argument("--iterations", type=int)
    train_parser.add_argument("--batch-size", type=int)
    train_parser.add_argument("--output-dir")
    train_parser.add_argument("--dtype", choices=["float32", "float64"])
    train_parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                              help="Override any configuration key (repeatable)")

    # Pairs command
    pairs_parser = subparsers.add_parser("pairs", help="Generate orthogonal latent pairs")
    pairs_parser.add_argument("--z-dim", type=int, default=100)
    pairs_parser.add_argument("--count", type=int, default=128, help="Rows to emit (even)")
    pairs_parser.add_argument("--variant", choices=[PairVariant.ABS.value, PairVariant.NO_ABS.value],
                              default=PairVariant.ABS.value)
    pairs_parser.add_argument("--seed", type=int)
    pairs_parser.add_argument("--out", default="pairs.csv", help="Output CSV path")
    pairs_parser.add_argument("--check", metavar="CSV",
                              help="Recompute dot products of an existing pairs CSV instead")
    pairs_parser.add_argument("--rejection-trials", type=int, default=0,
                              help="Also estimate rejection rates of both variants")

    # FID command
    fid_parser = subparsers.add_parser("fid", help="Frechet distance between two sample sets")
    fid_parser.add_argument("source", help="Samples (PPM dir, points CSV, record file) or checkpoint")
    fid_parser.add_argument("--ref", required=True, help="Reference statistics file or samples")
    fid_parser.add_argument("--extractor", choices=["identity", "fixed_random_cnn", "trained_df"])
    fid_parser.add_argument("--extractor-seed", type=int)
    fid_parser.add_argument("--extractor-checkpoint")
    fid_parser.add_argument("-n", type=int, help="Samples per side (default eval.n, 128)")
    fid_parser.add_argument("--seed", type=int)
    fid_parser.add_argument("--out", default="fid.csv", help="CSV to append the result to")

    # Sample command
    sample_parser = subparsers.add_parser("sample", help="Generate samples from a checkpoint")
    sample_parser.add_argument("checkpoint")
    sample_parser.add_argument("-n", type=int, default=16)
    sample_parser.add_argument("--seed", type=int)
    sample_parser.add_argument("--out", required=True, help="Output directory")

    # Bench2d command
    bench_parser = subparsers.add_parser("bench2d", help="Baseline vs LFM on the 2-D ring")
    bench_parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    bench_parser.add_argument("--steps", type=int, default=5000)
    bench_parser.add_argument("--g-only", action="store_true", help="Add the generator-only LFM arm")
    bench_parser.add_argument("--jobs", type=int, default=1, help="Worker processes")
    bench_parser.add_argument("--eval-every", type=int)
    bench_parser.add_argument("--lambda-d", type=float)
    bench_parser.add_argument("--lambda-g", type=float)
    bench_parser.add_argument("--output-dir", default="runs/bench2d")
    bench_parser.add_argument("--set", action="append", metavar="KEY=VALUE")

    # Stats command
    stats_parser = subparsers.add_parser("stats", help="Reference statistics for a dataset")
    stats_parser.add_argument("--data", help="Image directory or record file (sets data.kind=images)")
    stats_parser.add_argument("--extractor", choices=["identity", "fixed_random_cnn", "trained_df"])
    stats_parser.add_argument("--extractor-seed", type=int)
    stats_parser.add_argument("--seed", type=int)
    stats_parser.add_argument("--out", required=True, help="Statistics file to write")

    return parser


COMMANDS = {
    "train": train_command,
    "pairs": pairs_command,
    "fid": fid_command,
    "sample": sample_command,
    "bench2d": bench2d_command,
    "stats": stats_command,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.log_level or config.get("logging.level"))

    handler = COMMANDS.get(args.command)
    if handler is None:
        parser.print_help()
        return EXIT_OK

    try:
        return handler(args)
    except (ConfigError, ShapeError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as e:
        logger.error(f"Bad input data: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except LfmError as e:
        logger.error(f"{args.command} aborted: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        logger.error(f"Invalid argument: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
