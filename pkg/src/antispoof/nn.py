"""Small module system on top of the autograd tensors.

Modules hold Parameters, registered buffers (non-trainable state such as
running statistics), and child modules; names are dotted paths derived
from attribute names, so checkpoints address every array unambiguously.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import CheckpointError, ConfigError
from .tensor import Parameter, Tensor, layernorm, linear, swish

_dropout_rng: np.random.Generator = np.random.default_rng(0)


def set_dropout_rng(rng: np.random.Generator):
    """Install the generator used by every Dropout instance."""
    global _dropout_rng
    _dropout_rng = rng


class Module:
    def __init__(self):
        self.training = True
        self._buffers: dict[str, np.ndarray] = {}

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = np.asarray(value, dtype=np.float32)

    # -- traversal -------------------------------------------------------------

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, self._buffers[name]
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    # -- mode switching ----------------------------------------------------------

    def train(self):
        for m in self.modules():
            m.training = True
        return self

    def eval(self):
        for m in self.modules():
            m.training = False
        return self

    # -- state I/O ---------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            state[name] = buf
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, p in self.named_parameters():
            arr = np.asarray(state[name], dtype=np.float32)
            if arr.shape != p.data.shape:
                raise CheckpointError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
        self._load_buffers(state, "")

    def _load_buffers(self, state: dict[str, np.ndarray], prefix: str):
        for name in self._buffers:
            arr = np.asarray(state[prefix + name], dtype=np.float32)
            if arr.shape != self._buffers[name].shape:
                raise CheckpointError(
                    f"shape mismatch for {prefix + name}: {arr.shape} vs {self._buffers[name].shape}"
                )
            self._buffers[name] = arr.copy()
        for name, child in self._children():
            child._load_buffers(state, prefix + name + ".")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    """Ordered container; children are named by their index."""

    def __init__(self, mods=()):
        super().__init__()
        self._items: list[Module] = []
        for m in mods:
            self.append(m)

    def append(self, m: Module):
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i: int) -> Module:
        return self._items[i]


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear(Module):
    """y = x @ W + b with W stored (d_in, d_out)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(uniform_init(rng, (d_in, d_out), d_in))
        self.bias = Parameter(np.zeros(d_out, dtype=np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(d, dtype=np.float32))
        self.bias = Parameter(np.zeros(d, dtype=np.float32))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layernorm(x, self.gain, self.bias, self.eps)


class BatchNorm1d(Module):
    """Channel-wise batch norm for (B, L, d) activations.

    Training uses biased batch statistics over (B, L) and folds them into
    the running buffers with the given momentum; evaluation normalizes by
    the running statistics only.
    """

    def __init__(self, d: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.gain = Parameter(np.ones(d, dtype=np.float32))
        self.bias = Parameter(np.zeros(d, dtype=np.float32))
        self.eps = eps
        self.momentum = momentum
        self.register_buffer("running_mean", np.zeros(d, dtype=np.float32))
        self.register_buffer("running_var", np.ones(d, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        axes = tuple(range(x.ndim - 1))
        if self.training:
            mu = x.mean(axis=axes, keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=axes, keepdims=True)
            m = self.momentum
            self._buffers["running_mean"] = (
                (1.0 - m) * self._buffers["running_mean"] + m * mu.data.reshape(-1)
            ).astype(np.float32)
            self._buffers["running_var"] = (
                (1.0 - m) * self._buffers["running_var"] + m * var.data.reshape(-1)
            ).astype(np.float32)
            normed = centered / (var + Tensor(np.float32(self.eps))) ** 0.5
        else:
            mu = Tensor(self._buffers["running_mean"])
            sd = Tensor(np.sqrt(self._buffers["running_var"] + self.eps))
            normed = (x - mu) / sd
        return normed * self.gain + self.bias


class Dropout(Module):
    """Inverted dropout; identity when evaluating or p == 0."""

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        keep = 1.0 - self.p
        mask = (_dropout_rng.random(x.shape) < keep).astype(np.float32) / np.float32(keep)
        return x * Tensor(mask)


def glu(x: Tensor, axis: int = -1) -> Tensor:
    """Gated linear unit: split in half along ``axis``, a * sigmoid(b)."""
    from .tensor import sigmoid

    d = x.shape[axis]
    if d % 2:
        raise ConfigError(f"glu needs an even extent, got {d} on axis {axis}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(0, d // 2)
    a = x[tuple(index)]
    index[axis] = slice(d // 2, d)
    b = x[tuple(index)]
    return a * sigmoid(b)


__all__ = [
    "Module",
    "ModuleList",
    "Linear",
    "LayerNorm",
    "BatchNorm1d",
    "Dropout",
    "set_dropout_rng",
    "uniform_init",
    "glu",
    "swish",
]
