"""Parameterized layers built on the tensor ops."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor, parameter


class Module:
    """Base class: children registered via attribute assignment."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(f"{name}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
                    elif isinstance(item, Tensor):
                        out[f"{name}.{i}"] = item
        return out

    def named_modules(self, prefix: str = "") -> dict[str, "Module"]:
        out: dict[str, Module] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Module):
                out[name] = val
                out.update(val.named_modules(f"{name}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out[f"{name}.{i}"] = item
                        out.update(item.named_modules(f"{name}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in params.items():
            arr = state[k]
            if arr.shape != p.shape:
                if arr.size != p.size:
                    raise ValueError(f"{k}: got {arr.size} values, expected {p.size}")
                arr = arr.reshape(p.shape)  # checkpoints store flat blobs
            p.data = arr.astype(p.dtype).copy()


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        std = np.sqrt(2.0 / n_in)
        self.w = parameter(rng.normal(0.0, std, (n_in, n_out)).astype(np.float32))
        self.b = parameter(np.zeros(n_out, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.w)
        if self.b is not None:
            out = T.add(out, self.b)
        return out


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: str = "same", bias: bool = True):
        std = np.sqrt(2.0 / (c_in * k * k))
        self.w = parameter(rng.normal(0.0, std, (c_out, c_in, k, k)).astype(np.float32))
        self.b = parameter(np.zeros(c_out, dtype=np.float32)) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        out = T.conv2d(x, self.w, stride=self.stride, padding=self.padding)
        if self.b is not None:
            out = T.add(out, T.reshape(self.b, (1, -1, 1, 1)))
        return out


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 stride: int = 2, padding: int = 1, bias: bool = True):
        std = np.sqrt(2.0 / (c_in * k * k))
        self.w = parameter(rng.normal(0.0, std, (c_in, c_out, k, k)).astype(np.float32))
        self.b = parameter(np.zeros(c_out, dtype=np.float32)) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        out = T.conv_transpose2d(x, self.w, stride=self.stride, padding=self.padding)
        if self.b is not None:
            out = T.add(out, T.reshape(self.b, (1, -1, 1, 1)))
        return out


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int = 8, eps: float = 1e-5):
        # fall back to per-channel groups when the layer is narrower than 8
        self.groups = min(groups, channels)
        while channels % self.groups:
            self.groups -= 1
        self.eps = eps
        self.gamma = parameter(np.ones(channels, dtype=np.float32))
        self.beta = parameter(np.zeros(channels, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return T.group_norm(x, self.gamma, self.beta, self.groups, self.eps)


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator, std: float = 0.02):
        self.table = parameter(rng.normal(0.0, std, (n, dim)).astype(np.float32))

    def __call__(self, idx) -> Tensor:
        return T.embedding(self.table, idx)


def sinusoidal_embedding(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Continuous sinusoidal features for (possibly fractional) timesteps."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float32))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half, dtype=np.float32) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(np.float32)
