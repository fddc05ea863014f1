"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad_data


class NonFiniteProbeError(FloatingPointError):
    """The function returned a non-finite value at a perturbed probe."""


def _evaluate(f, arrays: Sequence[np.ndarray]) -> float:
    out = f(*[Tensor(a) for a in arrays])
    return float(no_grad_data(out).reshape(-1)[0])


def analytic_gradients(
    f: Callable[..., Tensor], inputs: Sequence
) -> list[np.ndarray]:
    leaves = [Tensor(np.array(no_grad_data(x)), requires_grad=True) for x in inputs]
    out = f(*leaves)
    if not isinstance(out, Tensor):
        return [np.zeros_like(t.data) for t in leaves]
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves]


def numeric_gradients(
    f: Callable[..., Tensor], inputs: Sequence, h: float = 1e-5
) -> list[np.ndarray]:
    arrays = [np.array(no_grad_data(x), dtype=np.float64) for x in inputs]
    result = []
    for which, arr in enumerate(arrays):
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            plus = _evaluate(f, arrays)
            flat[k] = orig - h
            minus = _evaluate(f, arrays)
            flat[k] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NonFiniteProbeError(
                    f"non-finite value probing input {which}, element {k}"
                )
            grad.reshape(-1)[k] = (plus - minus) / (2.0 * h)
        result.append(grad)
    return result


def check_gradients(
    f: Callable[..., Tensor],
    inputs: Sequence,
    h: float = 1e-5,
    floor: float = 1e-8,
) -> float:
    """Max over all input elements of ``|analytic - fd| / max(|fd|, floor)``."""
    for i, x in enumerate(inputs):
        if not np.all(np.isfinite(no_grad_data(x))):
            raise NonFiniteProbeError(f"input {i} contains non-finite values")
    analytic = analytic_gradients(f, inputs)
    numeric = numeric_gradients(f, inputs, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if a.size == 0:
            continue
        err = np.abs(a - n) / np.maximum(np.abs(n), floor)
        worst = max(worst, float(err.max()))
    return worst
