"""
Layer building blocks for the generator and discriminator networks.

Modules hold named parameter tensors, named buffers (batchnorm running
statistics) and named child modules. Names compose with dots, e.g.
``backbone.2.weight``.
"""

import contextlib
import hashlib
import logging
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .. import autograd as ag
from ..autograd import BatchNormState, Tensor

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class Module:
    """Base class for everything with parameters."""

    def __init__(self):
        self.training = True
        self._params: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}

    def register_parameter(self, name: str, shape: Tuple[int, ...], fill: float = 0.0) -> Tensor:
        param = Tensor(np.full(shape, fill, dtype=ag.get_default_dtype()),
                       requires_grad=True, name=name)
        self._params[name] = param
        return param

    def register_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        return iter(self._modules.items())

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        params = {f"{prefix}{name}": p for name, p in self._params.items()}
        for name, child in self.children():
            params.update(child.named_parameters(f"{prefix}{name}."))
        return params

    def named_buffers(self, prefix: str = "") -> Dict[str, np.ndarray]:
        buffers = {f"{prefix}{name}": b for name, b in self._buffers().items()}
        for name, child in self.children():
            buffers.update(child.named_buffers(f"{prefix}{name}."))
        return buffers

    def _buffers(self) -> Dict[str, np.ndarray]:
        return {}

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def requires_grad_(self, flag: bool) -> "Module":
        """Switch gradient tracking for every parameter (freezing a network)."""
        for p in self.named_parameters().values():
            p.requires_grad = flag
            if flag and p.grad is None:
                p.grad = np.zeros_like(p.data)
        return self

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Parameters and buffers by name, for checkpoints."""
        arrays = {name: p.data for name, p in self.named_parameters().items()}
        arrays.update(self.named_buffers())
        return arrays

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Copy arrays into parameters and buffers of identical names and shapes."""
        own = self.state_arrays()
        missing = sorted(set(own) - set(arrays))
        if missing:
            raise KeyError(f"Missing arrays for {missing}")
        for name, target in own.items():
            source = arrays[name]
            if source.shape != target.shape:
                raise ValueError(f"Shape mismatch for {name}: {source.shape} vs {target.shape}")
            target[...] = source


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, stride: int = 1, pad: int = 0,
                 bias: bool = True):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = self.register_parameter("weight", (cout, cin, kernel, kernel))
        self.bias = self.register_parameter("bias", (cout,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class ConvTranspose2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, stride: int = 1, pad: int = 0,
                 bias: bool = True):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = self.register_parameter("weight", (cin, cout, kernel, kernel))
        self.bias = self.register_parameter("bias", (cout,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ag.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)


class BatchNorm2d(Module):
    def __init__(self, channels: int):
        super().__init__()
        self.gamma = self.register_parameter("gamma", (channels,), 1.0)
        self.beta = self.register_parameter("beta", (channels,), 0.0)
        self.state = BatchNormState.create(channels, ag.get_default_dtype())

    def _buffers(self) -> Dict[str, np.ndarray]:
        return {"running_mean": self.state.running_mean, "running_var": self.state.running_var}

    def forward(self, x: Tensor) -> Tensor:
        return ag.batchnorm2d(x, self.gamma, self.beta, self.training, self.state)


class Linear(Module):
    """Affine map; weight is stored (in_features, out_features)."""

    def __init__(self, fan_in: int, fan_out: int, bias: bool = True):
        super().__init__()
        self.weight = self.register_parameter("weight", (fan_in, fan_out))
        self.bias = self.register_parameter("bias", (fan_out,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = ag.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class Activation(Module):
    def __init__(self, kind: str, alpha: float = 0.2):
        super().__init__()
        self.kind, self.alpha = kind, alpha

    def forward(self, x: Tensor) -> Tensor:
        return ag.activation(x, self.kind, self.alpha)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            self.register_module(str(i), layer)

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return self._modules[str(index)]

    def forward(self, x: Tensor) -> Tensor:
        for _, layer in self.children():
            x = layer(x)
        return x


def init_weights(net: Module, rng: np.random.Generator) -> Module:
    """
    DCGAN initialization.

    Conv and transposed-conv weights ~ N(0, 0.02^2); batchnorm gamma ~
    N(1, 0.02^2) and beta = 0; conv biases = 0. Linear layers (the 2-D
    toy networks) use U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
    Modules are visited in registration order so a seed fixes every value.
    """
    for module in net.modules():
        if isinstance(module, (Conv2d, ConvTranspose2d)):
            w = module.weight
            w.data[...] = rng.normal(0.0, INIT_STD, w.shape)
            if module.bias is not None:
                module.bias.data[...] = 0.0
        elif isinstance(module, BatchNorm2d):
            module.gamma.data[...] = rng.normal(1.0, INIT_STD, module.gamma.shape)
            module.beta.data[...] = 0.0
        elif isinstance(module, Linear):
            bound = 1.0 / math.sqrt(module.weight.shape[0])
            module.weight.data[...] = rng.uniform(-bound, bound, module.weight.shape)
            if module.bias is not None:
                module.bias.data[...] = rng.uniform(-bound, bound, module.bias.shape)
    return net


@contextlib.contextmanager
def frozen_stats(*nets: Module) -> Iterator[None]:
    """Keep batchnorm running statistics fixed inside the block."""
    states: List[BatchNormState] = [
        m.state for net in nets for m in net.modules() if isinstance(m, BatchNorm2d)
    ]
    previous = [s.update for s in states]
    for s in states:
        s.update = False
    try:
        yield
    finally:
        for s, flag in zip(states, previous):
            s.update = flag


@contextlib.contextmanager
def frozen(net: Module) -> Iterator[None]:
    """Parameters stop collecting gradients inside the block."""
    net.requires_grad_(False)
    try:
        yield
    finally:
        net.requires_grad_(True)


@contextlib.contextmanager
def eval_mode(net: Module, enabled: bool = True) -> Iterator[None]:
    previous = [m.training for m in net.modules()]
    if enabled:
        net.eval()
    try:
        yield
    finally:
        for m, flag in zip(net.modules(), previous):
            m.training = flag


def parameter_fingerprint(net: Module) -> str:
    """sha256 over parameter bytes in name order, for change detection."""
    digest = hashlib.sha256()
    for name, p in sorted(net.named_parameters().items()):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(p.data).tobytes())
    return digest.hexdigest()
