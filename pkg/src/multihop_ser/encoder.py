"""Bidirectional recurrent encoder with per-step residual inputs.

Each direction runs an LSTM whose output at step t is the cell output plus
the (projected) input frame.  Forward and backward states are concatenated
per step, and an optional utterance-level prosody vector is appended to
every step.  Gate order inside the packed weights is (input, forget,
candidate, output).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass
class LSTMParams:
    W_x: Tensor
    W_h: Tensor
    bias: Tensor

    @property
    def hidden_size(self):
        return self.W_h.shape[0]


@dataclass
class BreLayer:
    forward: LSTMParams
    backward: LSTMParams
    proj_W: Tensor | None = None
    proj_b: Tensor | None = None


@dataclass
class BreParams:
    layers: list = field(default_factory=list)

    @property
    def d_in(self):
        first = self.layers[0]
        return first.proj_W.shape[0] if first.proj_W is not None else first.forward.hidden_size

    @property
    def d_h(self):
        return self.layers[0].forward.hidden_size

    def named_tensors(self, prefix=""):
        out = {}
        for i, layer in enumerate(self.layers):
            base = f"{prefix}layer{i}."
            if layer.proj_W is not None:
                out[base + "proj.W"] = layer.proj_W
                out[base + "proj.b"] = layer.proj_b
            for tag, lstm in (("fwd", layer.forward), ("bwd", layer.backward)):
                out[f"{base}{tag}.W_x"] = lstm.W_x
                out[f"{base}{tag}.W_h"] = lstm.W_h
                out[f"{base}{tag}.bias"] = lstm.bias
        return out


@dataclass
class EncodedSequence:
    outputs: Tensor  # [..., T, d_out], zero rows where mask is False
    mask: np.ndarray  # [..., T]
    last_state: Tensor  # [..., d_out]

    @property
    def dim(self):
        return self.outputs.shape[-1]


def _uniform(rng, shape, k):
    return Tensor(rng.uniform(-k, k, size=shape), requires_grad=True)


def _init_lstm(d_h, rng):
    k = 1.0 / np.sqrt(d_h)
    bias = rng.uniform(-k, k, size=4 * d_h)
    bias[d_h : 2 * d_h] = 1.0
    return LSTMParams(
        W_x=_uniform(rng, (d_h, 4 * d_h), k),
        W_h=_uniform(rng, (d_h, 4 * d_h), k),
        bias=Tensor(bias, requires_grad=True),
    )


def init_params(d_in, d_h, rng, layers=1):
    """Uniform init in [-1/sqrt(d_h), 1/sqrt(d_h)], forget-gate bias 1.

    A linear input projection is created whenever the layer input width
    differs from ``d_h``; its output doubles as the residual term.
    """
    if d_in < 1 or d_h < 1 or layers < 1:
        raise ValueError("encoder dimensions and layer count must be positive")
    k = 1.0 / np.sqrt(d_h)
    out = []
    width = d_in
    for _ in range(layers):
        proj_W = proj_b = None
        if width != d_h:
            proj_W = _uniform(rng, (width, d_h), k)
            proj_b = _uniform(rng, (d_h,), k)
        out.append(BreLayer(_init_lstm(d_h, rng), _init_lstm(d_h, rng), proj_W, proj_b))
        width = 2 * d_h
    return BreParams(out)


def _cell(gx, h_prev, c_prev, W_h):
    d = W_h.shape[0]
    z = gx + ad.matmul(h_prev, W_h)
    i = ad.sigmoid(z[..., 0:d])
    f = ad.sigmoid(z[..., d : 2 * d])
    g = ad.tanh(z[..., 2 * d : 3 * d])
    o = ad.sigmoid(z[..., 3 * d : 4 * d])
    c = f * c_prev + i * g
    h = o * ad.tanh(c)
    return h, c


def lstm_step(x, h_prev, c_prev, p):
    """Plain LSTM cell (no residual) returning ``(h, c)``."""
    d = p.hidden_size
    for name, t in (("x", x), ("h_prev", h_prev), ("c_prev", c_prev)):
        if t.shape[-1] != d:
            raise ShapeError(f"lstm_step: {name} has width {t.shape[-1]}, expected {d}")
    gx = ad.matmul(x, p.W_x) + p.bias
    return _cell(gx, h_prev, c_prev, p.W_h)


def _run_direction(xs, mask, p, reverse):
    """Residual LSTM over a batch of sequences ``xs`` [B, T, d_h]."""
    B, T, d = xs.shape
    gx = ad.matmul(xs, p.W_x) + p.bias
    zeros = Tensor(np.zeros((B, d)))
    h, c = zeros, zeros
    outs = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        h_new, c_new = _cell(gx[:, t], h, c, p.W_h)
        h_new = h_new + xs[:, t]
        valid = mask[:, t : t + 1]
        # padded steps keep the carried state: zeros for the backward pass,
        # which therefore starts fresh at the last valid frame
        h = ad.where(valid, h_new, h)
        c = ad.where(valid, c_new, c)
        outs[t] = h
    return ad.stack(outs, axis=1)


def encode(
    x,
    mask,
    params,
    prosody=None,
    dropout_rate=0.0,
    training=False,
    rng=None,
    d_p=None,
):
    """Encode ``x`` [B, T, d_in] (or [T, d_in]) into an EncodedSequence.

    ``mask`` must be a true prefix per sequence.  Output rows at padded steps
    are zero.  ``last_state`` is the forward state at the last valid step
    joined with the backward state at step 0, plus prosody when given.
    """
    x = ad.as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
        mask = mask[None]
        if prosody is not None:
            prosody = ad.as_tensor(prosody).reshape(1, -1)
    if mask.shape != x.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} does not match input {x.shape[:2]}")
    if not np.all(mask.any(axis=1)):
        raise ad.InvalidMaskError("every sequence needs at least one valid step")
    if not np.all(mask[:, :-1] >= mask[:, 1:]):
        raise ValueError("mask must be a true prefix (valid steps before padding)")
    if prosody is not None:
        prosody = ad.as_tensor(prosody)
        if d_p is not None and prosody.shape[-1] != d_p:
            raise ShapeError(f"prosody has dim {prosody.shape[-1]}, configured d_p={d_p}")
    if x.shape[-1] != params.d_in:
        raise ShapeError(f"input has width {x.shape[-1]}, encoder expects {params.d_in}")

    B, T = mask.shape
    m3 = mask[..., None].astype(np.float64)
    h = x
    for layer in params.layers:
        if layer.proj_W is not None:
            h = ad.matmul(h, layer.proj_W) + layer.proj_b
        fwd = _run_direction(h, mask, layer.forward, reverse=False)
        bwd = _run_direction(h, mask, layer.backward, reverse=True)
        h = ad.concat([fwd, bwd], axis=-1) * m3
    if training and dropout_rate > 0:
        h = ad.dropout(h, dropout_rate, True, rng)
    outputs = h
    if prosody is not None and prosody.shape[-1] > 0:
        tiled = prosody.reshape(B, 1, -1) * np.ones((1, T, 1))
        outputs = ad.concat([outputs, tiled * m3], axis=-1)

    d_h = params.d_h
    last_idx = mask.sum(axis=1) - 1
    onehot = np.zeros((B, T, 1))
    onehot[np.arange(B), last_idx, 0] = 1.0
    fwd_last = (h[..., :d_h] * onehot).sum(axis=1)
    bwd_first = h[:, 0, d_h:]
    parts = [fwd_last, bwd_first]
    if prosody is not None and prosody.shape[-1] > 0:
        parts.append(prosody)
    last_state = ad.concat(parts, axis=-1)

    if single:
        return EncodedSequence(outputs[0], mask[0], last_state[0])
    return EncodedSequence(outputs, mask, last_state)
