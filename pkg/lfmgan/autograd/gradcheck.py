"""
Central finite-difference gradient checking.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from .tensor import Tensor, default_dtype

logger = logging.getLogger(__name__)


def numerical_grad(fn: Callable[..., Tensor], inputs: Sequence[Tensor], index: int,
                   h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``fn(*inputs)`` w.r.t. one input."""
    target = inputs[index].data
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn(*inputs).item()
        flat[i] = original - h
        minus = fn(*inputs).item()
        flat[i] = original
        out[i] = (plus - minus) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise difference relative to the gradient's magnitude."""
    scale = max(float(np.max(np.abs(numeric), initial=0.0)),
                float(np.max(np.abs(analytic), initial=0.0)), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
              tol: float = 1e-4) -> Dict[int, float]:
    """
    Compare tape gradients with central differences in 64-bit.

    Args:
        fn: Function of the inputs returning a scalar tensor
        inputs: float64 tensors; those with requires_grad are checked
        h: Finite-difference step
        tol: Allowed max relative error

    Returns:
        Input index to max relative error

    Raises:
        AssertionError: If any error exceeds tol
    """
    errors: Dict[int, float] = {}
    with default_dtype(np.float64):
        for t in inputs:
            t.zero_grad()
        fn(*inputs).backward()
        for i, t in enumerate(inputs):
            if not t.requires_grad:
                continue
            analytic = t.grad.copy()
            numeric = numerical_grad(fn, inputs, i, h)
            errors[i] = max_relative_error(analytic, numeric)
            logger.debug(f"gradcheck input {i}: max relative error {errors[i]:.3e}")
    bad = {i: e for i, e in errors.items() if e > tol}
    if bad:
        raise AssertionError(f"Gradient check failed for inputs {bad}")
    return errors
