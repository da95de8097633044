"""
Checkpoint files.

A checkpoint is a tensor-record file. Its header is JSON holding the run
configuration, the iteration, the latent generator state, both optimizers'
step counts and hyperparameters, and the data cursor. Tensors follow in
name order: ``g.*`` and ``d.*`` parameters and buffers, ``adam_g.m.*``,
``adam_g.v.*`` (and the same for ``adam_d``), then ``history``.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

from .. import autograd as ag
from ..autograd import Adam
from ..config import TrainConfig
from ..core import CheckpointError
from ..formats import RecordFile, read_records, write_records
from .state import METRIC_COLUMNS, StepMetrics, TrainState, build_networks

logger = logging.getLogger(__name__)

FORMAT_TAG = "lfmgan-checkpoint"


def _optimizer_arrays(prefix: str, opt: Adam) -> Dict[str, np.ndarray]:
    arrays = {}
    for name in opt.names():
        arrays[f"{prefix}.m.{name}"] = opt.state.m[name]
        arrays[f"{prefix}.v.{name}"] = opt.state.v[name]
    return arrays


def state_tensors(state: TrainState) -> Dict[str, np.ndarray]:
    """Every array of the state under its checkpoint name, sorted by name."""
    arrays: Dict[str, np.ndarray] = {}
    arrays.update({f"g.{k}": v for k, v in state.generator.state_arrays().items()})
    arrays.update({f"d.{k}": v for k, v in state.discriminator.state_arrays().items()})
    arrays.update(_optimizer_arrays("adam_g", state.opt_g))
    arrays.update(_optimizer_arrays("adam_d", state.opt_d))
    history = np.stack([m.as_array() for m in state.history]) if state.history \
        else np.zeros((0, len(METRIC_COLUMNS)))
    arrays["history"] = history
    return dict(sorted(arrays.items()))


def _header(state: TrainState) -> str:
    return json.dumps({
        "format": FORMAT_TAG,
        "config": state.config.as_dict(),
        "iteration": state.iteration,
        "rng": state.rng.bit_generator.state,
        "adam_g": {"t": state.opt_g.state.t, **state.opt_g.state.hyperparameters()},
        "adam_d": {"t": state.opt_d.state.t, **state.opt_d.state.hyperparameters()},
        "cursor": list(state.cursor),
    }, sort_keys=True)


def save_checkpoint(state: TrainState, path: Union[str, Path]) -> Path:
    """Write the state atomically; returns the path written."""
    path = Path(path)
    write_records(path, RecordFile(_header(state), state_tensors(state)))
    logger.info(f"Saved checkpoint at iteration {state.iteration} to {path}")
    return path


def _restore_optimizer(opt: Adam, prefix: str, meta: Dict, tensors: Dict[str, np.ndarray]) -> None:
    opt.state.t = int(meta["t"])
    opt.state.lr, opt.state.beta1 = meta["lr"], meta["beta1"]
    opt.state.beta2, opt.state.eps = meta["beta2"], meta["eps"]
    for name in opt.names():
        for moment in ("m", "v"):
            source = tensors[f"{prefix}.{moment}.{name}"]
            target = getattr(opt.state, moment)[name]
            if source.shape != target.shape:
                raise CheckpointError(f"Optimizer moment {prefix}.{moment}.{name} has the wrong shape")
            target[...] = source


def load_checkpoint(path: Union[str, Path]) -> TrainState:
    """
    Rebuild a TrainState from a checkpoint.

    Networks are constructed in the checkpoint's dtype and overwritten with
    the stored arrays.

    Raises:
        CheckpointError: On a corrupt file, a version mismatch or missing tensors
    """
    record = read_records(path)
    try:
        header = json.loads(record.header)
    except ValueError as e:
        raise CheckpointError(f"Checkpoint header is not valid JSON: {e}")
    if header.get("format") != FORMAT_TAG:
        raise CheckpointError(f"{path} is not a training checkpoint")

    tensors = record.tensors
    cfg = TrainConfig(**header["config"])
    try:
        with ag.default_dtype(cfg.dtype):
            generator, discriminator = build_networks(cfg)
            generator.load_arrays({k[2:]: v for k, v in tensors.items() if k.startswith("g.")})
            discriminator.load_arrays({k[2:]: v for k, v in tensors.items() if k.startswith("d.")})
            opt_g = Adam(generator.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            opt_d = Adam(discriminator.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        _restore_optimizer(opt_g, "adam_g", header["adam_g"], tensors)
        _restore_optimizer(opt_d, "adam_d", header["adam_d"], tensors)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"Checkpoint {path} does not match its configuration: {e}")

    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    history = [StepMetrics.from_array(row) for row in tensors.get("history", [])]
    logger.info(f"Loaded checkpoint at iteration {header['iteration']} from {path}")
    return TrainState(
        config=cfg,
        generator=generator,
        discriminator=discriminator,
        opt_g=opt_g,
        opt_d=opt_d,
        rng=rng,
        iteration=int(header["iteration"]),
        cursor=tuple(header["cursor"]),
        history=history,
    )


__all__ = ["FORMAT_TAG", "load_checkpoint", "save_checkpoint", "state_tensors"]
