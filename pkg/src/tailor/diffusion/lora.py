"""Low-rank adapters: freeze base weights, train small A/B factor pairs.

Adapted weight is W + scale * (B @ A) reshaped to W's shape. B starts at
zero, so a freshly attached adapter leaves the layer's output unchanged.
"""

from __future__ import annotations

import numpy as np

import tailor.nn as nn
from tailor.nn import Tensor


class LoraError(RuntimeError):
    pass


class LoraLayer(nn.Module):
    """Wraps a Conv2d / ConvTranspose2d / Dense layer with a rank-r update."""

    def __init__(self, base, rank: int, scale: float, rng: np.random.Generator):
        if rank < 1:
            raise LoraError(f"rank must be >= 1, got {rank}")
        if not isinstance(base, (nn.Dense, nn.Conv2d, nn.ConvTranspose2d)):
            raise LoraError(f"cannot adapt layer of type {type(base).__name__}")
        self.base = base
        self.rank = rank
        self.scale = scale
        w = base.w
        if isinstance(base, nn.Dense):
            in_dim, out_dim = w.shape           # dense weights are (in, out)
        elif isinstance(base, nn.Conv2d):
            out_dim = w.shape[0]                # (O, C, kh, kw)
            in_dim = w.size // out_dim
        else:
            out_dim = w.shape[1]                # (Cin, Cout, kh, kw)
            in_dim = w.size // out_dim
        self.a = nn.parameter(rng.normal(0, 1.0 / rank, (rank, in_dim)).astype(np.float32))
        self.b = nn.parameter(np.zeros((out_dim, rank), dtype=np.float32))

    def effective_weight(self) -> Tensor:
        delta = nn.scale(nn.matmul(self.b, self.a), self.scale)  # (out, in)
        w = self.base.w
        if isinstance(self.base, nn.Dense):
            return nn.add(w, _transpose(delta))
        if isinstance(self.base, nn.Conv2d):
            return nn.add(w, nn.reshape(delta, w.shape))
        cin, cout, kh, kw = w.shape
        delta4 = nn.reshape(delta, (cout, cin, kh, kw))
        return nn.add(w, _axes_swap01(delta4))

    def __call__(self, x):
        w = self.effective_weight()
        base = self.base
        if isinstance(base, nn.Dense):
            out = nn.matmul(x, w)
            return nn.add(out, base.b) if base.b is not None else out
        if isinstance(base, nn.Conv2d):
            out = nn.conv2d(x, w, stride=base.stride, padding=base.padding)
        else:
            out = nn.conv_transpose2d(x, w, stride=base.stride, padding=base.padding)
        if base.b is not None:
            out = nn.add(out, nn.reshape(base.b, (1, -1, 1, 1)))
        return out

    def merged_weight(self) -> np.ndarray:
        with nn.no_grad():
            return self.effective_weight().data.copy()


def _transpose(t: Tensor) -> Tensor:
    from tailor.nn.tensor import _make

    def rule(g):
        t._accumulate(np.ascontiguousarray(g.T))

    return _make(np.ascontiguousarray(t.data.T), "transpose", (t,), rule)


def _axes_swap01(t: Tensor) -> Tensor:
    from tailor.nn.tensor import _make

    def rule(g):
        t._accumulate(np.ascontiguousarray(np.swapaxes(g, 0, 1)))

    return _make(np.ascontiguousarray(np.swapaxes(t.data, 0, 1)), "swap01", (t,), rule)


DEFAULT_TARGETS = ("stem", "down1", "down2", "up1", "up2",
                   "block1.conv1", "block1.conv2", "block2.conv1", "block2.conv2",
                   "mid.conv1", "mid.conv2", "dec1.conv1", "dec1.conv2",
                   "dec2.conv1", "dec2.conv2", "out_conv")


def attach_lora(model: nn.Module, rank: int = 4, target_layers=DEFAULT_TARGETS,
                scale: float = 1.0, seed: int = 0) -> list[str]:
    """Freeze the model and wrap target layers with trainable adapters."""
    rng = np.random.default_rng(seed)
    modules = model.named_modules()
    missing = [t for t in target_layers if t not in modules]
    if missing:
        raise LoraError(f"target layers not found: {missing}")
    for name in target_layers:
        if isinstance(modules[name], LoraLayer):
            raise LoraError(f"layer {name} already has an adapter")
    model.freeze()
    for name in target_layers:
        parent, attr = _resolve(model, name)
        wrapped = LoraLayer(getattr(parent, attr), rank=rank, scale=scale, rng=rng)
        setattr(parent, attr, wrapped)
    return list(target_layers)


def merge_lora(model: nn.Module) -> int:
    """Fold adapters into base weights and unwrap; returns layers merged."""
    merged = 0
    for name, module in list(model.named_modules().items()):
        if isinstance(module, LoraLayer):
            module.base.w.data = module.merged_weight()
            parent, attr = _resolve(model, name)
            setattr(parent, attr, module.base)
            merged += 1
    if merged == 0:
        raise LoraError("no adapters attached")
    return merged


def lora_parameters(model: nn.Module) -> list[Tensor]:
    params = []
    for module in model.named_modules().values():
        if isinstance(module, LoraLayer):
            params.extend([module.a, module.b])
    return params


def _resolve(model: nn.Module, dotted: str):
    parts = dotted.split(".")
    obj = model
    for p in parts[:-1]:
        obj = obj[int(p)] if isinstance(obj, (list, tuple)) else getattr(obj, p)
    return obj, parts[-1]
