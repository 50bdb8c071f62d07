"""Central finite-difference oracle for gradient verification.

Independent of the autodiff engine: perturbs raw f64 input arrays and
re-runs the forward function, never touching recorded backward rules.
"""

from __future__ import annotations

import numpy as np

from tailor.nn import Tensor, backprop


def finite_difference(fn, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """d fn / d arrays via central differences; fn maps ndarrays -> scalar."""
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base, dtype=np.float64)
        flat = base.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(arrays)
            flat[i] = orig - h
            fm = fn(arrays)
            flat[i] = orig
            gf[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(build_scalar, arrays: list[np.ndarray], rtol: float = 1e-5,
                    h: float = 1e-5) -> float:
    """Compare autodiff gradients of build_scalar against finite differences.

    build_scalar takes a list of Tensors and returns a scalar Tensor.
    Returns the max relative error observed (a value below rtol passes).
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_scalar(tensors)
    backprop(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def eval_fn(arrs):
        ts = [Tensor(a.copy()) for a in arrs]
        return float(build_scalar(ts).data)

    numeric = finite_difference(eval_fn, arrays, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), 1.0)  # relative where large, absolute near zero
        err = np.max(np.abs(a - n) / denom)
        worst = max(worst, float(err))
    return worst
