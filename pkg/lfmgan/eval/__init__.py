"""
Evaluation metrics: Fréchet distance between Gaussian fits of feature sets,
and mode coverage for the 2-D ring benchmark.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from ..core import EvaluationError
from ..formats import RecordFile, read_records, write_records
from .extractors import FeatureExtractor, FixedRandomCNN, Identity, TrainedDF, build_extractor

logger = logging.getLogger(__name__)

# Negative eigenvalues down to -EIG_TOL are rounding noise.
EIG_TOL = 1e-10


@dataclass
class GaussianStats:
    """Mean, unbiased covariance and sample count of a feature set."""
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        self.cov = (self.cov + self.cov.T) / 2
        if self.n < 2:
            raise EvaluationError(f"Gaussian statistics need at least 2 samples, got {self.n}")
        d = self.mean.shape[0]
        if d < 1 or self.cov.shape != (d, d):
            raise EvaluationError(f"Mean of width {d} does not match covariance {self.cov.shape}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_features(cls, features: np.ndarray) -> "GaussianStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise EvaluationError(f"Need at least 2 feature rows, got shape {features.shape}")
        cov = np.cov(features, rowvar=False, ddof=1)
        return cls(features.mean(axis=0), cov, features.shape[0])


def feature_stats(samples: np.ndarray, extractor: FeatureExtractor) -> GaussianStats:
    """
    Fit a Gaussian to the extracted features of ``samples``.

    Raises:
        EvaluationError: With fewer than 2 samples
    """
    if len(samples) < 2:
        raise EvaluationError(f"feature_stats needs at least 2 samples, got {len(samples)}")
    return GaussianStats.from_features(extractor(samples))


def _clip_eigenvalues(values: np.ndarray, what: str) -> np.ndarray:
    lowest = float(values.min(initial=0.0))
    if lowest < -EIG_TOL:
        raise EvaluationError(f"{what} has eigenvalue {lowest:.3e}, below -{EIG_TOL:g}")
    if lowest < -1e-12:
        logger.warning(f"Clipping negative eigenvalue {lowest:.3e} of {what} to zero")
    return np.clip(values, 0.0, None)


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """
    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The trace of the matrix square root is taken from the eigenvalues of
    S_a^(1/2) S_b S_a^(1/2), which is symmetric and shares its spectrum
    with S_a S_b.

    Raises:
        EvaluationError: On a dimension mismatch, a significantly negative
            eigenvalue, or eigen-solver failure
    """
    if a.dim != b.dim:
        raise EvaluationError(f"Feature dimensions differ: {a.dim} vs {b.dim}")
    try:
        vals, vecs = np.linalg.eigh(a.cov)
        root_a = (vecs * np.sqrt(_clip_eigenvalues(vals, "first covariance"))) @ vecs.T
        middle = root_a @ b.cov @ root_a
        middle = (middle + middle.T) / 2
        trace_root = np.sqrt(_clip_eigenvalues(np.linalg.eigvalsh(middle), "covariance product")).sum()
    except np.linalg.LinAlgError as e:
        raise EvaluationError(f"Eigen-decomposition failed: {e}")
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_root)
    return max(value, 0.0)


@dataclass
class ModeSpec:
    """Mixture centers, component std and the per-mode sample threshold."""
    centers: np.ndarray
    sigma: float
    count_threshold: int = 1

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if self.centers.shape[0] < 1:
            raise ValueError("ModeSpec needs at least one center")
        if self.sigma <= 0:
            raise ValueError(f"ModeSpec sigma must be positive, got {self.sigma}")


@dataclass
class Coverage:
    modes_covered: int
    high_quality_fraction: float


def mode_coverage(samples: np.ndarray, spec: ModeSpec) -> Coverage:
    """
    Count covered modes and the fraction of high-quality samples.

    A sample is high quality when it lies within 3 sigma of its nearest
    center; a mode is covered when it is the nearest center of at least
    ``count_threshold`` high-quality samples.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, spec.centers.shape[1])
    if samples.shape[0] == 0:
        return Coverage(0, 0.0)
    dists = np.linalg.norm(samples[:, None, :] - spec.centers[None, :, :], axis=2)
    nearest = dists.argmin(axis=1)
    good = dists[np.arange(len(samples)), nearest] <= 3 * spec.sigma
    counts = np.bincount(nearest[good], minlength=spec.centers.shape[0])
    return Coverage(int((counts >= spec.count_threshold).sum()), float(good.mean()))


def save_stats(path: Union[str, Path], stats: GaussianStats, extractor_tag: str) -> None:
    """Cache reference statistics as a tensor-record file."""
    header = json.dumps({"kind": "gaussian_stats", "extractor": extractor_tag, "n": stats.n})
    write_records(path, RecordFile(header, {"mean": stats.mean, "cov": stats.cov,
                                            "n": np.array([stats.n], dtype=np.int64)}))
    logger.info(f"Saved reference statistics ({extractor_tag}, n={stats.n}) to {path}")


def load_stats(path: Union[str, Path]) -> Tuple[GaussianStats, str]:
    """
    Read cached statistics.

    Returns:
        (stats, extractor tag)
    """
    record = read_records(path)
    try:
        header = json.loads(record.header)
        stats = GaussianStats(record.tensors["mean"], record.tensors["cov"],
                              int(record.tensors["n"][0]))
    except (KeyError, ValueError) as e:
        raise EvaluationError(f"{path} is not a statistics file: {e}")
    return stats, header.get("extractor", "")


class Evaluator:
    """Reference statistics plus an extractor, optionally with ring modes."""

    def __init__(self, extractor: FeatureExtractor, reference: GaussianStats,
                 modes: Optional[ModeSpec] = None):
        self.extractor = extractor
        self.reference = reference
        self.modes = modes

    def fid(self, samples: np.ndarray) -> float:
        return frechet_distance(feature_stats(samples, self.extractor), self.reference)

    def coverage(self, samples: np.ndarray) -> Optional[Coverage]:
        """Ring coverage of ``samples``, or None when no modes are known."""
        if self.modes is None:
            return None
        return mode_coverage(samples, self.modes)


__all__ = [
    "Coverage",
    "EIG_TOL",
    "Evaluator",
    "FeatureExtractor",
    "FixedRandomCNN",
    "GaussianStats",
    "Identity",
    "ModeSpec",
    "TrainedDF",
    "build_extractor",
    "feature_stats",
    "frechet_distance",
    "load_stats",
    "mode_coverage",
    "save_stats",
]
