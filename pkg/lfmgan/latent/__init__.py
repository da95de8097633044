"""
Latent sampling for the generator.

Plain Gaussian batches are used for evaluation. Training batches under LFM
are built from orthogonal pairs: both vectors are drawn from N(0, I), then
the last coordinate of the second vector is solved so that the pair has a
zero dot product, and the candidate is kept only when that coordinate
passes the variant's acceptance test. Pair j occupies rows j and j + B/2.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..core import PairVariant, ShapeError

logger = logging.getLogger(__name__)

# Candidates are drawn in blocks; one block covers most requests outright.
_MIN_BLOCK = 256


@dataclass
class LatentBatch:
    """B x z_dim latent codes; row i pairs with row i + B/2 unless plain_random."""
    values: np.ndarray
    variant: PairVariant = PairVariant.PLAIN_RANDOM

    @property
    def batch(self) -> int:
        return self.values.shape[0]

    @property
    def z_dim(self) -> int:
        return self.values.shape[1]

    @property
    def paired(self) -> bool:
        return self.variant is not PairVariant.PLAIN_RANDOM

    def halves(self):
        """Return (first members, second members) of every pair."""
        if not self.paired:
            raise ValueError("plain_random batches have no pairing")
        hb = self.batch // 2
        return self.values[:hb], self.values[hb:]

    def astype(self, dtype) -> np.ndarray:
        return self.values.astype(dtype)


def sample_gaussian(batch: int, z_dim: int, rng: np.random.Generator) -> LatentBatch:
    """
    Draw i.i.d. N(0, 1) latent codes.

    Args:
        batch: Number of rows
        z_dim: Latent width
        rng: Random generator, advanced in place
    """
    if batch < 1 or z_dim < 1:
        raise ValueError(f"batch and z_dim must be positive, got {batch} and {z_dim}")
    return LatentBatch(rng.standard_normal((batch, z_dim)), PairVariant.PLAIN_RANDOM)


def _candidates(count: int, z_dim: int, rng: np.random.Generator):
    n1 = rng.standard_normal((count, z_dim))
    n2 = rng.standard_normal((count, z_dim))
    last1 = n1[:, -1]
    usable = last1 != 0.0
    dr = np.einsum("ij,ij->i", n1[:, :-1], n2[:, :-1])
    solved = np.zeros(count)
    np.divide(-dr, last1, out=solved, where=usable)
    n2[:, -1] = solved
    return n1, n2, usable


def orthogonal_pairs(batch: int, z_dim: int, variant: Union[PairVariant, str],
                     rng: np.random.Generator) -> LatentBatch:
    """
    Build a batch of orthogonal latent pairs.

    Candidates whose first vector has a zero last coordinate are redrawn.
    Accepted pairs keep their draw order.

    Args:
        batch: Even number of rows
        z_dim: Latent width, at least 2
        variant: abs keeps |last| <= 1, no_abs keeps last <= 1
        rng: Random generator, advanced in place

    Returns:
        LatentBatch in float64 with pair j at rows j and j + batch/2
    """
    variant = PairVariant(variant)
    if variant is PairVariant.PLAIN_RANDOM:
        raise ValueError("orthogonal_pairs needs the abs or no_abs variant")
    if batch < 2 or batch % 2:
        raise ShapeError(f"Pair batches must be even, got {batch}")
    if z_dim < 2:
        raise ValueError(f"Orthogonal pairs need z_dim >= 2, got {z_dim}")

    half = batch // 2
    firsts, seconds = [], []
    found = 0
    block = max(_MIN_BLOCK, 2 * half)
    while found < half:
        n1, n2, usable = _candidates(block, z_dim, rng)
        keep = usable & variant.accepts(n2[:, -1])
        firsts.append(n1[keep])
        seconds.append(n2[keep])
        found += int(keep.sum())
    values = np.concatenate(
        [np.concatenate(firsts)[:half], np.concatenate(seconds)[:half]], axis=0
    )
    return LatentBatch(values, variant)


@dataclass
class RejectionEstimate:
    """Monte-Carlo estimate of the candidate rejection probability."""
    variant: PairVariant
    z_dim: int
    trials: int
    rejected: int
    rate: float
    ci95: float

    @property
    def low(self) -> float:
        return max(0.0, self.rate - self.ci95)

    @property
    def high(self) -> float:
        return min(1.0, self.rate + self.ci95)

    @property
    def width(self) -> float:
        return 2 * self.ci95


def rejection_rate(variant: Union[PairVariant, str], z_dim: int, trials: int,
                   rng: np.random.Generator, block: int = 100_000) -> RejectionEstimate:
    """
    Estimate how often a candidate pair is rejected.

    Every candidate counts as one trial; candidates with a zero last
    coordinate in the first vector count as rejected.

    Args:
        variant: Acceptance rule to sample
        z_dim: Latent width
        trials: Number of candidates, at least 10^4
        rng: Random generator
        block: Candidates drawn per vectorized block

    Returns:
        RejectionEstimate with a normal-approximation 95% half-width
    """
    variant = PairVariant(variant)
    if trials < 10_000:
        raise ValueError(f"rejection_rate needs at least 10^4 trials, got {trials}")
    rejected = 0
    remaining = trials
    while remaining:
        count = min(block, remaining)
        _, n2, usable = _candidates(count, z_dim, rng)
        rejected += int(count - (usable & variant.accepts(n2[:, -1])).sum())
        remaining -= count
    rate = rejected / trials
    ci95 = 1.96 * math.sqrt(rate * (1 - rate) / trials)
    logger.info(
        f"Rejection rate ({variant.value}, z_dim={z_dim}): {rate:.5f} +/- {ci95:.5f} over {trials} trials"
    )
    return RejectionEstimate(variant, z_dim, trials, rejected, rate, ci95)


def training_latents(batch: int, z_dim: int, variant: Optional[PairVariant],
                     rng: np.random.Generator) -> LatentBatch:
    """Orthogonal pairs when a variant is given, plain Gaussian noise otherwise."""
    if variant is None or variant is PairVariant.PLAIN_RANDOM:
        return sample_gaussian(batch, z_dim, rng)
    return orthogonal_pairs(batch, z_dim, variant, rng)


__all__ = [
    "LatentBatch",
    "RejectionEstimate",
    "orthogonal_pairs",
    "rejection_rate",
    "sample_gaussian",
    "training_latents",
]
