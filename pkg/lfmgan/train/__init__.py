"""
Alternating GAN training with the LFM regularizer.

Each iteration runs one discriminator step and then one generator step.
Training noise comes from orthogonal latent pairs (unless LFM is off);
evaluation noise is always plain Gaussian and is drawn from a generator
seeded by (run seed, iteration) so evaluating never disturbs training.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..config import TrainConfig
from ..core import DScope, EvaluationError, LfmMode, NumericalError, ShapeError
from ..data import BatchStream, Dataset, ImageDataset, RingDataset, build_dataset
from ..eval import (
    Coverage,
    Evaluator,
    GaussianStats,
    ModeSpec,
    build_extractor,
    feature_stats,
    load_stats,
    save_stats,
)
from ..latent import sample_gaussian, training_latents
from ..lfm import d_total_loss, g_total_loss, lfm_base
from ..nets import eval_mode, forward_d, forward_g, frozen, frozen_stats
from ..utils import save_metadata
from .checkpoint import load_checkpoint, save_checkpoint
from .state import METRIC_COLUMNS, StepMetrics, TrainState, build_state

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_DIR = "checkpoints"
NAN_DUMP_FILE = "nan_dump.json"


def _check_grads(net, what: str) -> None:
    for name, p in net.named_parameters().items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"Non-finite gradient in {what} parameter {name}")


def train_step(state: TrainState, real_batch: np.ndarray) -> StepMetrics:
    """
    One discriminator update followed by one generator update.

    The discriminator sees the real batch and detached fakes; its LFM term
    reaches the whole network, or only the F layer when the scope is
    f_only. The generator step draws fresh latents and runs the
    discriminator frozen, with its batchnorm running statistics fixed.

    Raises:
        ShapeError: If the batch size does not match the configuration
        NumericalError: If a loss, activation or gradient is not finite
    """
    cfg = state.config
    lfm = state.lfm
    G, D = state.generator, state.discriminator
    if real_batch.shape[0] != cfg.batch_size:
        raise ShapeError(f"Real batch has {real_batch.shape[0]} rows, expected {cfg.batch_size}")
    started = time.perf_counter()
    variant = cfg.train_variant

    # discriminator
    z = training_latents(cfg.batch_size, cfg.z_dim, variant, state.rng)
    with ag.no_grad():
        fake = forward_g(G, z)
    score_real, _, _ = forward_d(D, Tensor(real_batch, dtype=state.dtype))
    score_fake, raw_fake, f_fake = forward_d(D, fake)
    if cfg.d_scope is DScope.F_ONLY:
        f_fake = D.apply_f(raw_fake.detach())
    loss_d = d_total_loss(score_real, score_fake, f_fake, lfm)
    state.opt_d.zero_grad()
    ag.backward(loss_d)
    _check_grads(D, "discriminator")
    state.opt_d.step()

    # generator
    z = training_latents(cfg.batch_size, cfg.z_dim, variant, state.rng)
    with frozen(D), frozen_stats(D):
        fake = forward_g(G, z)
        score_g, _, f_g = forward_d(D, fake)
        loss_g = g_total_loss(score_g, f_g, lfm, cfg.saturating)
        state.opt_g.zero_grad()
        ag.backward(loss_g)
    _check_grads(G, "generator")
    state.opt_g.step()

    lfm_value = None
    if cfg.lfm_mode is not LfmMode.OFF:
        with ag.no_grad():
            lfm_value = lfm_base(f_g.detach()).item()

    state.iteration += 1
    wall_ms = (time.perf_counter() - started) * 1000.0 if cfg.record_wall_ms else 0.0
    return StepMetrics(
        iteration=state.iteration,
        loss_d=loss_d.item(),
        loss_g=loss_g.item(),
        lfm_value=lfm_value,
        d_real_mean=float(score_real.data.mean()),
        d_fake_mean=float(score_fake.data.mean()),
        wall_ms=wall_ms,
    )


def sample_generator(state: TrainState, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Generate from plain Gaussian latents.

    Batchnorm uses batch statistics unless ``eval.bn_train_mode`` is off;
    running statistics are never updated here.
    """
    cfg = state.config
    z = sample_gaussian(n, cfg.z_dim, rng)
    G = state.generator
    with ag.default_dtype(cfg.dtype), ag.no_grad(), frozen_stats(G), \
            eval_mode(G, enabled=not cfg.bn_train_mode):
        return forward_g(G, z).data.copy()


def generate_eval_samples(state: TrainState, n: int, stream: int = 1) -> np.ndarray:
    """Evaluation samples; latents are seeded by (seed, iteration, stream)."""
    rng = np.random.default_rng([state.config.seed, state.iteration, stream])
    return sample_generator(state, n, rng)


def reference_samples(dataset: Dataset, seed: int) -> np.ndarray:
    """Every loaded image, or ``ring_n`` fresh ring draws seeded by (seed, 3)."""
    if isinstance(dataset, ImageDataset):
        return dataset.images
    if isinstance(dataset, RingDataset):
        return dataset.sample(dataset.n, np.random.default_rng([seed, 3]))
    return dataset.epoch(0, seed)


def reference_stats(cfg: TrainConfig, dataset: Dataset, extractor) -> GaussianStats:
    """
    Statistics of the real data under ``extractor``.

    Image datasets use every loaded image. The ring uses ``ring_n`` fresh
    draws. A configured ``eval.ref_stats`` file is read when it exists and
    written otherwise.
    """
    cache = Path(cfg.ref_stats) if cfg.ref_stats else None
    if cache is not None and cache.exists():
        stats, tag = load_stats(cache)
        if tag != extractor.tag:
            raise EvaluationError(f"{cache} holds {tag!r} statistics, run uses {extractor.tag!r}")
        logger.info(f"Using cached reference statistics from {cache}")
        return stats
    stats = feature_stats(reference_samples(dataset, cfg.seed), extractor)
    if cache is not None:
        save_stats(cache, stats, extractor.tag)
    return stats


def build_evaluator(cfg: TrainConfig, dataset: Dataset) -> Evaluator:
    extractor = build_extractor(cfg.extractor, cfg.extractor_seed, cfg.extractor_checkpoint)
    modes = None
    if isinstance(dataset, RingDataset):
        modes = ModeSpec(dataset.centers, dataset.sigma, cfg.coverage_threshold)
    return Evaluator(extractor, reference_stats(cfg, dataset, extractor), modes)


@dataclass
class TrainRun:
    """Outcome of ``train``: final state and every file written."""
    state: TrainState
    output_dir: Path
    metrics_path: Path
    checkpoints: List[Path] = field(default_factory=list)
    coverage: Optional[Coverage] = None
    reference: Optional[GaussianStats] = None

    @property
    def outputs(self) -> List[Path]:
        return [self.metrics_path, *self.checkpoints]

    @property
    def fids(self) -> List[float]:
        return [m.fid for m in self.state.history if m.fid is not None]


def _open_metrics(path: Path, resume_from: Optional[int]):
    """Open the CSV for appending; on resume drop rows past the checkpoint."""
    if resume_from is not None and path.exists():
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        kept = [r for r in rows[1:] if r and int(r[0]) <= resume_from]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRIC_COLUMNS)
            writer.writerows(kept)
        return open(path, "a", newline="")
    handle = open(path, "w", newline="")
    csv.writer(handle).writerow(METRIC_COLUMNS)
    return handle


def _nan_dump(state: TrainState, directory: Path, error: Exception,
              last: Optional[StepMetrics]) -> Path:
    finite = {}
    for prefix, net in (("g", state.generator), ("d", state.discriminator)):
        for name, p in net.named_parameters().items():
            finite[f"{prefix}.{name}"] = bool(np.all(np.isfinite(p.data)))
    path = directory / NAN_DUMP_FILE
    save_metadata({
        "iteration": state.iteration + 1,
        "error": str(error),
        "last_metrics": dict(zip(METRIC_COLUMNS, last.as_row())) if last else None,
        "parameters_finite": finite,
    }, path)
    return path


def train(cfg: TrainConfig, resume: Optional[Union[str, Path]] = None,
          dataset: Optional[Dataset] = None) -> TrainRun:
    """
    Run training to ``cfg.iterations``.

    Writes ``metrics.csv`` (one row per iteration, fid on evaluation rows)
    and checkpoints under ``cfg.output_dir``. On resume, the checkpoint's
    configuration is used with this run's ``iterations`` and
    ``output_dir``, and the CSV continues after the checkpoint's iteration.

    Raises:
        NumericalError: After writing ``nan_dump.json`` beside the last
            good checkpoint
    """
    cfg.validate()
    if resume is not None:
        resumed = load_checkpoint(resume)
        resumed.config.iterations = cfg.iterations
        resumed.config.output_dir = cfg.output_dir
        cfg = resumed.config
    output_dir = Path(cfg.output_dir)
    ckpt_dir = output_dir / CHECKPOINT_DIR
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    with ag.default_dtype(cfg.dtype):
        state = resumed if resume is not None else build_state(cfg)
        if dataset is None:
            dataset = build_dataset(
                cfg.data_kind, cfg.seed, path=cfg.data_path, image_size=cfg.image_size,
                subset_n=cfg.subset_n, ring_modes=cfg.ring_modes, ring_radius=cfg.ring_radius,
                ring_sigma=cfg.ring_sigma, ring_n=cfg.ring_n,
            )
        evaluator = build_evaluator(cfg, dataset)
        run = TrainRun(state, output_dir, output_dir / METRICS_FILE, reference=evaluator.reference)
        last_good: Optional[Path] = None
        last: Optional[StepMetrics] = state.history[-1] if state.history else None

        logger.info(f"Training {cfg.model_kind} ({cfg.lfm_mode.value}) from iteration "
                    f"{state.iteration} to {cfg.iterations}, output in {output_dir}")
        with BatchStream(dataset, cfg.batch_size, cfg.seed, state.cursor, cfg.prefetch,
                         dtype=state.dtype) as stream, \
                _open_metrics(run.metrics_path, state.iteration if resume else None) as handle:
            writer = csv.writer(handle)
            while state.iteration < cfg.iterations:
                try:
                    metrics = train_step(state, stream.next_batch())
                except NumericalError as e:
                    dump = _nan_dump(state, last_good.parent if last_good else ckpt_dir, e, last)
                    logger.error(f"Aborting at iteration {state.iteration + 1}: {e}; details in {dump}")
                    raise
                state.cursor = stream.cursor
                if cfg.eval_every and state.iteration % cfg.eval_every == 0:
                    metrics.fid = evaluator.fid(generate_eval_samples(state, cfg.eval_n))
                    logger.info(f"Evaluation at {state.iteration}: fid={metrics.fid:.5f} (n={cfg.eval_n})")
                state.history.append(metrics)
                writer.writerow(metrics.as_row())
                last = metrics
                if cfg.log_every and state.iteration % cfg.log_every == 0:
                    lfm_text = "-" if metrics.lfm_value is None else f"{metrics.lfm_value:.5f}"
                    logger.info(f"Iteration {state.iteration}: loss_d={metrics.loss_d:.5f} "
                                f"loss_g={metrics.loss_g:.5f} lfm={lfm_text}")
                if cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
                    handle.flush()
                    last_good = save_checkpoint(state, ckpt_dir / f"iter_{state.iteration:07d}.lfmt")
                    run.checkpoints.append(last_good)

        run.checkpoints.append(save_checkpoint(state, ckpt_dir / "final.lfmt"))
        if evaluator.modes is not None:
            samples = generate_eval_samples(state, cfg.coverage_samples, stream=2)
            run.coverage = evaluator.coverage(samples)
            logger.info(f"Final coverage: {run.coverage.modes_covered}/{len(evaluator.modes.centers)} "
                        f"modes, high-quality fraction {run.coverage.high_quality_fraction:.4f}")
    return run


__all__ = [
    "CHECKPOINT_DIR",
    "METRICS_FILE",
    "METRIC_COLUMNS",
    "NAN_DUMP_FILE",
    "StepMetrics",
    "TrainRun",
    "TrainState",
    "build_evaluator",
    "build_state",
    "generate_eval_samples",
    "load_checkpoint",
    "reference_samples",
    "reference_stats",
    "sample_generator",
    "save_checkpoint",
    "train",
    "train_step",
]
