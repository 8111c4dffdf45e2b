"""Differentiable building blocks with hand-written backward passes.

Every forward function returns its output together with a cache; the
matching ``*_backward`` takes that cache and the upstream gradient and
returns the gradient w.r.t. the input plus a dict of parameter gradients
for this call only (callers accumulate).

Batched inputs carry the batch on the leading axis, sequences are
time-major ``(T, B, n)``.  A 1-D vector is treated as a batch of one and
the result is squeezed back, so the same functions serve single examples.
Sequence layers accept an optional ``(T, B)`` mask; masked steps leave the
recurrent state untouched and receive zero attention, which lets
variable-length prefixes share one left-padded batch without changing the
result for any member.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import DimensionError, VocabularyError
from .numerics import DTYPE, Rng, glorot_uniform, sigmoid, softmax


@dataclass
class GruParams:
    """Update (z), reset (r) and candidate (h) gate weights."""

    Wz: np.ndarray
    Wr: np.ndarray
    Wh: np.ndarray
    Uz: np.ndarray
    Ur: np.ndarray
    Uh: np.ndarray
    bz: np.ndarray
    br: np.ndarray
    bh: np.ndarray

    def __post_init__(self):
        hidden, inp = self.Wz.shape
        for name in ("Wz", "Wr", "Wh"):
            _expect(getattr(self, name), (hidden, inp), name)
        for name in ("Uz", "Ur", "Uh"):
            _expect(getattr(self, name), (hidden, hidden), name)
        for name in ("bz", "br", "bh"):
            _expect(getattr(self, name), (hidden,), name)

    @property
    def input_dim(self) -> int:
        return self.Wz.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.Wz.shape[0]

    @classmethod
    def init(cls, rng: Rng, input_dim: int, hidden_dim: int) -> "GruParams":
        w = {n: glorot_uniform(rng, hidden_dim, input_dim) for n in ("Wz", "Wr", "Wh")}
        u = {n: glorot_uniform(rng, hidden_dim, hidden_dim) for n in ("Uz", "Ur", "Uh")}
        b = {n: np.zeros(hidden_dim, dtype=DTYPE) for n in ("bz", "br", "bh")}
        return cls(**w, **u, **b)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GruParams":
        return cls(
            **{n: np.zeros((hidden_dim, input_dim)) for n in ("Wz", "Wr", "Wh")},
            **{n: np.zeros((hidden_dim, hidden_dim)) for n in ("Uz", "Ur", "Uh")},
            **{n: np.zeros(hidden_dim) for n in ("bz", "br", "bh")},
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class AttentionParams:
    """Additive scorer: ``score_j = u . tanh(Wa @ state_j + ba)``."""

    Wa: np.ndarray
    ba: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        att = self.Wa.shape[0]
        _expect(self.ba, (att,), "ba")
        _expect(self.u, (att,), "u")

    @property
    def state_dim(self) -> int:
        return self.Wa.shape[1]

    @classmethod
    def init(cls, rng: Rng, state_dim: int, att_dim: int) -> "AttentionParams":
        return cls(
            Wa=glorot_uniform(rng, att_dim, state_dim),
            ba=np.zeros(att_dim, dtype=DTYPE),
            u=glorot_uniform(rng, 1, att_dim)[0],
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"Wa": self.Wa, "ba": self.ba, "u": self.u}


def _expect(a: np.ndarray, shape: tuple, name: str) -> None:
    if a.shape != shape:
        raise DimensionError(f"{name} has shape {a.shape}, expected {shape}")


# --------------------------------------------------------------------------
# embeddings


def embed_song(song_index: int, e1: np.ndarray) -> np.ndarray:
    """Column ``song_index`` of the song embedding matrix (d x |I|)."""
    if not 0 <= song_index < e1.shape[1]:
        raise VocabularyError(f"song index {song_index} outside vocabulary of {e1.shape[1]}")
    return e1[:, song_index].copy()


def embed_tags_avg(tag_indices, e2: np.ndarray) -> np.ndarray:
    """Mean of the tag embedding columns; the zero vector for no tags."""
    tag_indices = list(tag_indices)
    n_tags = e2.shape[1]
    for t in tag_indices:
        if not 0 <= t < n_tags:
            raise VocabularyError(f"tag index {t} outside vocabulary of {n_tags}")
    if not tag_indices:
        return np.zeros(e2.shape[0], dtype=DTYPE)
    return e2[:, tag_indices].mean(axis=1)


def embed_tags_avg_backward(tag_indices, grad_out: np.ndarray, e2_shape) -> np.ndarray:
    grad = np.zeros(e2_shape, dtype=DTYPE)
    tag_indices = list(tag_indices)
    if tag_indices:
        np.add.at(grad, (slice(None), tag_indices), grad_out[:, None] / len(tag_indices))
    return grad


# --------------------------------------------------------------------------
# GRU


def gru_cell_forward(x, h_prev, p: GruParams):
    """One GRU step.

    z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
    c = tanh(Wh x + Uh (r * h) + bh), h' = (1 - z) * h + z * c.
    """
    x = np.asarray(x, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    squeeze = x.ndim == 1
    x2, h2 = np.atleast_2d(x), np.atleast_2d(h_prev)
    if x2.shape[1] != p.input_dim or h2.shape[1] != p.hidden_dim or x2.shape[0] != h2.shape[0]:
        raise DimensionError(
            f"gru cell got x {x.shape}, h {h_prev.shape} for input_dim={p.input_dim}, "
            f"hidden_dim={p.hidden_dim}"
        )
    z = sigmoid(x2 @ p.Wz.T + h2 @ p.Uz.T + p.bz)
    r = sigmoid(x2 @ p.Wr.T + h2 @ p.Ur.T + p.br)
    c = np.tanh(x2 @ p.Wh.T + (r * h2) @ p.Uh.T + p.bh)
    h = (1.0 - z) * h2 + z * c
    cache = (x2, h2, z, r, c, squeeze)
    return (h[0] if squeeze else h), cache


def gru_cell_backward(cache, grad_h, p: GruParams):
    """Returns ``(grad_x, grad_h_prev, grads)``."""
    x, h, z, r, c, squeeze = cache
    gh = np.atleast_2d(grad_h)
    dz = gh * (c - h)
    dc = gh * z
    dh = gh * (1.0 - z)

    da_c = dc * (1.0 - c * c)
    drh = da_c @ p.Uh
    dr = drh * h
    dh += drh * r
    da_r = dr * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)

    dx = da_c @ p.Wh + da_r @ p.Wr + da_z @ p.Wz
    dh += da_r @ p.Ur + da_z @ p.Uz
    grads = {
        "Wz": da_z.T @ x,
        "Wr": da_r.T @ x,
        "Wh": da_c.T @ x,
        "Uz": da_z.T @ h,
        "Ur": da_r.T @ h,
        "Uh": da_c.T @ (r * h),
        "bz": da_z.sum(axis=0),
        "br": da_r.sum(axis=0),
        "bh": da_c.sum(axis=0),
    }
    if squeeze:
        return dx[0], dh[0], grads
    return dx, dh, grads


def _as_sequence(xs):
    xs = np.asarray(xs, dtype=DTYPE)
    squeeze = xs.ndim == 2
    if squeeze:
        xs = xs[:, None, :]
    if xs.ndim != 3:
        raise DimensionError(f"sequence input must be (T, n) or (T, B, n), got {xs.shape}")
    return xs, squeeze


def _as_mask(mask, T: int, B: int) -> np.ndarray:
    if mask is None:
        return np.ones((T, B), dtype=DTYPE)
    mask = np.asarray(mask, dtype=DTYPE).reshape(T, B)
    return mask


def gru_forward(xs, p: GruParams, mask=None, reverse: bool = False):
    """Run a GRU over a ``(T, B, n)`` sequence from a zero initial state."""
    xs, _ = _as_sequence(xs)
    T, B, _ = xs.shape
    mask = _as_mask(mask, T, B)
    hs = np.zeros((T, B, p.hidden_dim), dtype=DTYPE)
    h = np.zeros((B, p.hidden_dim), dtype=DTYPE)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    caches = {}
    for t in steps:
        h_new, caches[t] = gru_cell_forward(xs[t], h, p)
        m = mask[t][:, None]
        h = m * h_new + (1.0 - m) * h
        hs[t] = h
    return hs, (caches, mask, reverse, xs.shape)


def gru_backward(cache, grad_hs, p: GruParams):
    """Backward through :func:`gru_forward`; ``grad_hs`` is ``(T, B, H)``."""
    caches, mask, reverse, shape = cache
    T, B, _ = shape
    dxs = np.zeros(shape, dtype=DTYPE)
    grads = {k: np.zeros_like(v) for k, v in p.as_dict().items()}
    dh = np.zeros((B, p.hidden_dim), dtype=DTYPE)
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        dh = dh + grad_hs[t]
        m = mask[t][:, None]
        dx, dh_prev, g = gru_cell_backward(caches[t], dh * m, p)
        dxs[t] = dx
        for k in grads:
            grads[k] += g[k]
        dh = dh_prev + (1.0 - m) * dh
    return dxs, grads


def bigru_forward(xs, p_fwd: GruParams, p_bwd: GruParams, mask=None):
    """Bidirectional GRU; state j is ``[h_fwd_j ; h_bwd_j]``.

    With a mask, sequences must be left-padded so the backward direction
    starts on each sequence's real last element.
    """
    xs, squeeze = _as_sequence(xs)
    if xs.shape[0] == 0:
        raise ValueError("bigru_forward needs a non-empty sequence")
    if p_fwd.hidden_dim != p_bwd.hidden_dim:
        raise DimensionError(
            f"forward hidden {p_fwd.hidden_dim} != backward hidden {p_bwd.hidden_dim}"
        )
    hf, cf = gru_forward(xs, p_fwd, mask)
    hb, cb = gru_forward(xs, p_bwd, mask, reverse=True)
    states = np.concatenate([hf, hb], axis=-1)
    cache = (cf, cb, p_fwd.hidden_dim, squeeze)
    return (states[:, 0, :] if squeeze else states), cache


def bigru_backward(cache, grad_states, p_fwd: GruParams, p_bwd: GruParams):
    """Returns ``(grad_xs, grads_fwd, grads_bwd)``."""
    cf, cb, H, squeeze = cache
    gs = np.asarray(grad_states, dtype=DTYPE)
    if squeeze:
        gs = gs[:, None, :]
    dx_f, g_f = gru_backward(cf, gs[..., :H], p_fwd)
    dx_b, g_b = gru_backward(cb, gs[..., H:], p_bwd)
    dxs = dx_f + dx_b
    return (dxs[:, 0, :] if squeeze else dxs), g_f, g_b


# --------------------------------------------------------------------------
# attention


def attention_forward(states, p: AttentionParams, mask=None):
    """Additive attention pooling over a ``(T, B, D)`` state sequence.

    Returns ``(context, weights, cache)`` with ``weights`` shaped ``(T, B)``.
    """
    S, squeeze = _as_sequence(states)
    T, B, D = S.shape
    if T == 0:
        raise ValueError("attention over an empty sequence")
    if D != p.state_dim:
        raise DimensionError(f"states have width {D}, attention expects {p.state_dim}")
    mask = _as_mask(mask, T, B)
    A = np.tanh(S @ p.Wa.T + p.ba)
    scores = A @ p.u
    scores = np.where(mask > 0, scores, -np.inf)
    weights = softmax(scores, axis=0)
    context = np.einsum("tb,tbd->bd", weights, S)
    cache = (S, A, weights, squeeze)
    if squeeze:
        return context[0], weights[:, 0], cache
    return context, weights, cache


def attention_backward(cache, grad_context, p: AttentionParams):
    S, A, w, squeeze = cache
    gc = np.atleast_2d(grad_context)
    dS = w[..., None] * gc[None, :, :]
    dw = np.einsum("tbd,bd->tb", S, gc)
    de = w * (dw - np.sum(w * dw, axis=0, keepdims=True))
    grads = {"u": np.einsum("tb,tba->a", de, A)}
    dpre = de[..., None] * p.u * (1.0 - A * A)
    grads["Wa"] = np.einsum("tba,tbd->ad", dpre, S)
    grads["ba"] = dpre.sum(axis=(0, 1))
    dS += dpre @ p.Wa
    return (dS[:, 0, :] if squeeze else dS), grads


# --------------------------------------------------------------------------
# dense and dropout


def dense_forward(x, w: np.ndarray, b: np.ndarray, activation: str = "none"):
    """``act(W x + b)`` for a vector or a batch of row vectors."""
    if activation not in ("relu", "none"):
        raise ValueError(f"unknown activation {activation!r}")
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise DimensionError(f"dense layer W {w.shape}, b {b.shape} cannot take x {x.shape}")
    pre = x @ w.T + b
    y = np.maximum(pre, 0.0) if activation == "relu" else pre
    return y, (x, pre, activation)


def dense_backward(cache, grad_y, w: np.ndarray):
    x, pre, activation = cache
    g = np.asarray(grad_y, dtype=DTYPE)
    if activation == "relu":
        g = g * (pre > 0)
    x2, g2 = np.atleast_2d(x), np.atleast_2d(g)
    grads = {"W": g2.T @ x2, "b": g2.sum(axis=0)}
    return g @ w, grads


def dropout_forward(x, p_discard: float, mode: str, rng: Rng | None):
    """Inverted dropout: survivors are scaled by ``1 / (1 - p_discard)``."""
    if not 0.0 <= p_discard < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p_discard}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=DTYPE)
    if mode == "eval" or p_discard == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p_discard
    mask = keep / (1.0 - p_discard)
    return x * mask, mask


def dropout_backward(mask, grad_y):
    return grad_y if mask is None else grad_y * mask
