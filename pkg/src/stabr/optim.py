"""Adagrad and the minibatch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import model as model_mod
from .errors import DimensionError
from .numerics import Rng

log = logging.getLogger(__name__)


@dataclass
class AdagradState:
    accumulators: dict[str, np.ndarray]
    learning_rate: float = 0.05
    epsilon: float = 1e-8

    @classmethod
    def zeros_for(cls, tensors: dict[str, np.ndarray], learning_rate: float = 0.05,
                  epsilon: float = 1e-8) -> "AdagradState":
        return cls({k: np.zeros_like(v) for k, v in tensors.items()}, learning_rate, epsilon)


def adagrad_step(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                 state: AdagradState) -> None:
    """In-place update: ``acc += g**2; theta -= lr * g / (sqrt(acc) + eps)``.

    Entries with zero gradient keep both their value and accumulator, which
    is what keeps unreferenced embedding columns untouched.
    """
    for name, g in grads.items():
        theta = tensors[name]
        acc = state.accumulators[name]
        if g.shape != theta.shape or acc.shape != theta.shape:
            raise DimensionError(
                f"{name}: param {theta.shape}, grad {g.shape}, accumulator {acc.shape}"
            )
        acc += g * g
        theta -= state.learning_rate * g / (np.sqrt(acc) + state.epsilon)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.05
    epochs: int = 10
    seed: int = 0
    m: int = 10
    clip_norm: float | None = None
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")


# (params, examples, rng) -> (summed loss, summed grads)
GradFn = Callable[[object, Sequence, Rng], tuple[float, dict[str, np.ndarray]]]


def train(params, dataset: Sequence, cfg: TrainConfig, grad_fn: GradFn | None = None,
          state: AdagradState | None = None):
    """Minimise mean NLL with minibatch Adagrad.

    Each epoch shuffles ``dataset`` with a seeded generator, walks it in
    batches of ``cfg.batch_size`` (the last one may be short) and applies
    one Adagrad step on the mean example gradient per batch.  ``params`` is
    updated in place and returned together with the per-epoch mean training
    loss.  ``grad_fn`` defaults to the SABR/STABR gradient.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    grad_fn = grad_fn or model_mod.loss_and_grad
    tensors = params.tensors
    if state is None:
        state = AdagradState.zeros_for(tensors, cfg.learning_rate, cfg.epsilon)
    shuffle_rng, dropout_rng = Rng(cfg.seed).spawn(2)
    trace = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[i] for i in order[start:start + cfg.batch_size]]
            batch_loss, grads = grad_fn(params, batch, dropout_rng)
            total += batch_loss
            for g in grads.values():
                g /= len(batch)
            if cfg.clip_norm is not None:
                clip_global_norm(grads, cfg.clip_norm)
            adagrad_step(tensors, grads, state)
        trace.append(total / n)
        log.debug("epoch %d mean loss %.6f", epoch + 1, trace[-1])
    return params, trace
