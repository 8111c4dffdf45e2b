"""Central finite differences for verifying hand-written backward passes."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        up = f()
        x[i] = orig - step
        down = f()
        x[i] = orig
        grad[i] = (up - down) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """``||a - n|| / max(||a|| + ||n||, floor)``, zero when both vanish."""
    num = float(np.linalg.norm(np.asarray(analytic) - np.asarray(numeric)))
    den = float(np.linalg.norm(analytic) + np.linalg.norm(numeric))
    if den < floor:
        return num
    return num / den


def check_gradients(f: Callable[[], float], tensors: dict[str, np.ndarray],
                    grads: dict[str, np.ndarray], step: float = 1e-5) -> dict[str, float]:
    """Relative error per tensor between ``grads`` and finite differences of ``f``."""
    return {
        name: relative_error(grads[name], numerical_gradient(f, tensors[name], step))
        for name in tensors
    }
