"""
Adam optimizer with bias correction.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping

import numpy as np

from ..core import ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)

DEFAULT_LR = 2e-4
DEFAULT_BETA1 = 0.5
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    """Moments and step count for a set of named parameters."""
    lr: float = DEFAULT_LR
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPS
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparameters(self) -> Dict[str, float]:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState) -> None:
    """
    Apply one Adam update in place.

    m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g*g, then
    p <- p - lr * m_hat / (sqrt(v_hat) + eps).

    Args:
        params: Name to parameter array, updated in place
        grads: Name to gradient array, same shapes as params
        state: Optimizer state, updated in place

    Raises:
        ShapeError: If a gradient does not match its parameter
    """
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ShapeError(f"Gradient for {name} has shape {grads[name].shape}, expected {p.shape}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t

    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Adam:
    """Adam over a fixed, named set of parameter tensors."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = DEFAULT_LR,
                 beta1: float = DEFAULT_BETA1, beta2: float = DEFAULT_BETA2,
                 eps: float = DEFAULT_EPS):
        self.params = dict(params)
        for name, p in self.params.items():
            if not p.requires_grad:
                raise ValueError(f"Parameter {name} does not require grad")
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in self.params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        adam_step(
            {name: p.data for name, p in self.params.items()},
            {name: p.grad for name, p in self.params.items()},
            self.state,
        )

    def names(self) -> List[str]:
        return sorted(self.params)

