"""Recurrent sequence encoder with attention pooling, forward and backward.

For a sequence of word vectors ``w_1..w_N`` the encoder runs a single-layer
LSTM from a zero state, scores every hidden state with ``(W_att h_i + b_att) . u``,
softmaxes the scores over the non-padding positions and returns the
attention-weighted sum of hidden states.

Gate blocks in the stacked weight matrices are ordered input, forget,
output, candidate.  Padding positions carry the previous state forward
unchanged, so they have no influence on the output and receive no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Union

import numpy as np

from .errors import InstrSearchError


class EncoderError(InstrSearchError):
    pass


class EmptySequence(EncoderError):
    pass


class CacheMismatch(EncoderError):
    pass


@dataclass
class EncoderParams:
    w_x: np.ndarray     # (m, 4h)
    w_h: np.ndarray     # (h, 4h)
    b: np.ndarray       # (4h,)
    w_att: np.ndarray   # (h, h)
    b_att: np.ndarray   # (h,)
    u: np.ndarray       # (h,)

    @classmethod
    def init(cls, m: int, h: int, rng: np.random.Generator, dtype=np.float32) -> "EncoderParams":
        bound = 1.0 / np.sqrt(h)

        def uni(*shape):
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        return cls(uni(m, 4 * h), uni(h, 4 * h), uni(4 * h), uni(h, h), uni(h), uni(h))

    @classmethod
    def zeros_like(cls, other: "EncoderParams") -> "EncoderParams":
        return cls(**{k: np.zeros_like(v) for k, v in other.items()})

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[0]

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams(**{k: v.astype(dtype) for k, v in self.items()})

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{k: v.copy() for k, v in self.items()})


@dataclass
class EncodeCache:
    params_id: int
    ids: np.ndarray
    mask: np.ndarray
    x: np.ndarray
    drop: Optional[np.ndarray]
    gates: list
    hidden: np.ndarray
    proj: np.ndarray
    attn: np.ndarray


@dataclass
class EncodeResult:
    embedding: np.ndarray        # (B, h) or (h,)
    hidden_states: np.ndarray    # (B, T, h) or (T, h)
    attn_weights: np.ndarray     # (B, T) or (T,)
    cache: EncodeCache
    batched: bool = True


@dataclass
class EncoderGrads:
    params: EncoderParams
    d_inputs: np.ndarray   # gradient w.r.t. looked-up word vectors, (B, T, m)
    ids: np.ndarray        # (B, T), the rows those vectors came from

    def embedding_grad(self, n_rows: int) -> np.ndarray:
        out = np.zeros((n_rows, self.d_inputs.shape[-1]), dtype=self.d_inputs.dtype)
        np.add.at(out, self.ids.reshape(-1), self.d_inputs.reshape(-1, self.d_inputs.shape[-1]))
        return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped entries, ``1/(1-rate)`` otherwise."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype(1.0 - rate)


def dropout_apply(
    vecs: np.ndarray,
    rate: float,
    seed: Union[int, np.random.Generator, None],
    train: bool,
) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return vecs
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return vecs * dropout_mask(vecs.shape, rate, rng, vecs.dtype.type)


def encode(
    p: EncoderParams,
    embedding: np.ndarray,
    ids: np.ndarray,
    pad_mask: Optional[np.ndarray] = None,
    *,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    train: bool = False,
) -> EncodeResult:
    """Encode a batch ``(B, T)`` (or a single ``(T,)``) of word ids.

    ``pad_mask`` is True at real tokens.  Dropout, when training, is applied
    to the looked-up word vectors.
    """
    ids = np.asarray(ids)
    batched = ids.ndim == 2
    if not batched:
        ids = ids[None, :]
    mask = np.ones(ids.shape, dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    if not batched and mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != ids.shape:
        raise ValueError(f"pad_mask shape {mask.shape} does not match ids {ids.shape}")
    if ids.shape[1] == 0 or not mask.any(axis=1).all():
        raise EmptySequence("every sequence needs at least one non-padding token")

    dtype = p.w_x.dtype
    B, T = ids.shape
    h = p.hidden_dim

    x = embedding[ids].astype(dtype, copy=False)
    drop = None
    if train and dropout > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        drop = dropout_mask(x.shape, dropout, rng, dtype.type)
        x = x * drop

    xw = x @ p.w_x + p.b
    h_t = np.zeros((B, h), dtype=dtype)
    c_t = np.zeros((B, h), dtype=dtype)
    hidden = np.empty((B, T, h), dtype=dtype)
    gates = []
    for t in range(T):
        z = xw[:, t] + h_t @ p.w_h
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h:2 * h])
        o = _sigmoid(z[:, 2 * h:3 * h])
        g = np.tanh(z[:, 3 * h:])
        c_new = f * c_t + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        gates.append((i, f, o, g, tc, c_t, h_t))
        c_t = np.where(m, c_new, c_t)
        h_t = np.where(m, h_new, h_t)
        hidden[:, t] = h_t

    proj = hidden @ p.w_att + p.b_att
    logits = proj @ p.u
    logits = np.where(mask, logits, -np.inf)
    logits = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    attn = weights / weights.sum(axis=1, keepdims=True)
    e = np.einsum("bt,bth->bh", attn, hidden)

    cache = EncodeCache(id(p), ids, mask, x, drop, gates, hidden, proj, attn)
    if batched:
        return EncodeResult(e, hidden, attn, cache, True)
    return EncodeResult(e[0], hidden[0], attn[0], cache, False)


def encode_backward(p: EncoderParams, cache: Union[EncodeCache, EncodeResult], d_e: np.ndarray) -> EncoderGrads:
    """Exact gradients of ``sum(d_e * e)`` with respect to every parameter and input vector."""
    if isinstance(cache, EncodeResult):
        cache = cache.cache
    if cache.params_id != id(p):
        raise CacheMismatch("forward cache was produced with different parameters")
    d_e = np.asarray(d_e, dtype=p.w_x.dtype)
    if d_e.ndim == 1:
        d_e = d_e[None, :]
    B, T, h = cache.hidden.shape
    if d_e.shape != (B, h):
        raise CacheMismatch(f"upstream gradient shape {d_e.shape} does not match cache ({B}, {h})")

    hidden, attn, proj, mask = cache.hidden, cache.attn, cache.proj, cache.mask

    # attention pooling
    d_hidden = attn[:, :, None] * d_e[:, None, :]
    d_attn = np.einsum("bth,bh->bt", hidden, d_e)
    d_logits = attn * (d_attn - (attn * d_attn).sum(axis=1, keepdims=True))
    d_u = np.einsum("bt,bth->h", d_logits, proj)
    d_proj = d_logits[:, :, None] * p.u
    d_w_att = np.einsum("bth,btk->hk", hidden, d_proj)
    d_b_att = d_proj.sum(axis=(0, 1))
    d_hidden += d_proj @ p.w_att.T

    # recurrence, back through time
    d_w_h = np.zeros_like(p.w_h)
    d_xw = np.zeros((B, T, 4 * h), dtype=d_e.dtype)
    dh_next = np.zeros((B, h), dtype=d_e.dtype)
    dc_next = np.zeros((B, h), dtype=d_e.dtype)
    for t in range(T - 1, -1, -1):
        i, f, o, g, tc, c_prev, h_prev = cache.gates[t]
        m = mask[:, t, None]
        dh = d_hidden[:, t] + dh_next
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc_next, 0.0)
        dc_new = dc_new + dh_new * o * (1.0 - tc * tc)
        d_o = dh_new * tc
        d_i = dc_new * g
        d_g = dc_new * i
        d_f = dc_new * c_prev
        dz = np.concatenate(
            [d_i * i * (1.0 - i), d_f * f * (1.0 - f), d_o * o * (1.0 - o), d_g * (1.0 - g * g)],
            axis=1,
        )
        d_xw[:, t] = dz
        d_w_h += h_prev.T @ dz
        dh_next = dz @ p.w_h.T + np.where(m, 0.0, dh)
        dc_next = dc_new * f + np.where(m, 0.0, dc_next)

    d_w_x = np.einsum("btm,btk->mk", cache.x, d_xw)
    d_b = d_xw.sum(axis=(0, 1))
    d_x = d_xw @ p.w_x.T
    if cache.drop is not None:
        d_x = d_x * cache.drop

    grads = EncoderParams(d_w_x, d_w_h, d_b, d_w_att, d_b_att, d_u)
    return EncoderGrads(grads, d_x, cache.ids)
