"""Layer modules over the autodiff engine: parameter registration, train/eval
state, named state export for checkpoints, and an optional shape tape that
records per-layer output sizes for complexity reports and table audits."""
from __future__ import annotations

import contextlib
import math

import numpy as np

from . import functional as F
from .tensor import Tensor, default_dtype

_INIT_RNG = np.random.default_rng(0)


def seed_init(seed: int):
    """Reseed the generator used for weight initialization."""
    global _INIT_RNG
    _INIT_RNG = np.random.default_rng(seed)


def kaiming_uniform(shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return _INIT_RNG.uniform(-bound, bound, size=shape).astype(default_dtype())


# shape tape: modules append (module, out_shape) while tracing is on
_SHAPE_TAPE: list | None = None


@contextlib.contextmanager
def shape_tape():
    global _SHAPE_TAPE
    _SHAPE_TAPE = []
    try:
        yield _SHAPE_TAPE
    finally:
        _SHAPE_TAPE = None


def _tape(module, out: Tensor):
    if _SHAPE_TAPE is not None:
        _SHAPE_TAPE.append((module, out.data.shape))


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._modules: dict[str, "Module"] = {}
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self.__dict__.setdefault("_params", {})[name] = value
        elif isinstance(value, Module):
            self.__dict__.setdefault("_modules", {})[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module"):
        self._modules[name] = module
        object.__setattr__(self, name, module)

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, mod in self._modules.items():
            sub = f"{prefix}.{name}" if prefix else name
            yield from mod.named_modules(sub)

    def named_parameters(self, prefix: str = ""):
        for name, mod in self.named_modules(prefix):
            for pname, p in mod._params.items():
                yield (f"{name}.{pname}" if name else pname), p

    def named_buffers(self, prefix: str = ""):
        for name, mod in self.named_modules(prefix):
            for bname, b in mod._buffers.items():
                yield (f"{name}.{bname}" if name else bname), b

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True):
        for _, m in self.named_modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters and buffers as a flat name -> array dict."""
        out = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            out[name] = b
        return out

    def load_state(self, arrays: dict[str, np.ndarray]):
        own = self.state_arrays()
        missing = set(own) - set(arrays)
        extra = set(arrays) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)[:4]} extra={sorted(extra)[:4]}")
        for name, p in self.named_parameters():
            src = np.asarray(arrays[name], dtype=p.data.dtype)
            if src.shape != p.data.shape:
                raise ValueError(f"{name}: shape {src.shape} != {p.data.shape}")
            p.data[...] = src
        for name, b in self.named_buffers():
            b[...] = np.asarray(arrays[name], dtype=b.dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover
        raise NotImplementedError


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, groups: int = 1, bias: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.groups = groups
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        self.weight = Tensor(
            kaiming_uniform((out_channels, in_channels // groups, kernel_size, kernel_size), fan_in),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=default_dtype()),
                           requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)
        _tape(self, out)
        return out


class ConvTranspose2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 2, padding: int = 1, bias: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            kaiming_uniform((in_channels, out_channels, kernel_size, kernel_size), fan_in),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=default_dtype()),
                           requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = F.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)
        _tape(self, out)
        return out


class BatchNorm2d(Module):
    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.weight = Tensor(np.ones(num_features, dtype=default_dtype()), requires_grad=True)
        self.bias = Tensor(np.zeros(num_features, dtype=default_dtype()), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(num_features, dtype=default_dtype()))
        self.register_buffer("running_var", np.ones(num_features, dtype=default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.weight, self.bias, self.running_mean,
                            self.running_var, self.training, self.momentum, self.eps)


class MaxPool2d(Module):
    def __init__(self, kernel_size: int = 2, stride: int = 2):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        out = F.max_pool2d(x, self.kernel_size, self.stride)
        _tape(self, out)
        return out


class Sequential(Module):
    def __init__(self, *mods: Module):
        super().__init__()
        self._seq = list(mods)
        for i, m in enumerate(mods):
            self.add_module(str(i), m)

    def __iter__(self):
        return iter(self._seq)

    def __getitem__(self, i):
        return self._seq[i]

    def __len__(self):
        return len(self._seq)

    def forward(self, x: Tensor) -> Tensor:
        for m in self._seq:
            x = m(x)
        return x
