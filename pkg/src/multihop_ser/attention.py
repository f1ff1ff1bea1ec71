"""Cross-modal multi-hop dot-product attention.

Hop 1 attends over the text outputs with the audio summary as query, hop 2
attends over the audio outputs with the hop-1 context, hop 3 attends over the
text again with the hop-2 context.  Scores are raw dot products; keys and
values are the same encoder rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .autodiff import Tensor

DIM_CONSTRAINT = "2*d_h_text = 2*d_h_audio + d_p"


class AttentionConfigError(ValueError):
    """Query and key widths disagree in strict attention mode."""


@dataclass
class AttentionResult:
    weights: Tensor  # [..., T]
    context: Tensor  # [..., d]


@dataclass
class FusedRepresentation:
    H: Tensor
    hop_trace: list = field(default_factory=list)


def dot_attention(query, keys_values, mask, projection=None):
    """Masked softmax over ``query . kv_i``; context is the weighted row sum.

    ``projection``, when given, maps the query into the key space first.
    """
    query = ad.as_tensor(query)
    kv = ad.as_tensor(keys_values)
    if projection is not None:
        query = ad.matmul(query, projection)
    if query.shape[-1] != kv.shape[-1]:
        raise AttentionConfigError(
            f"query width {query.shape[-1]} != sequence width {kv.shape[-1]}; "
            f"strict attention requires {DIM_CONSTRAINT} (or use projected mode)"
        )
    q = query.reshape(*query.shape[:-1], 1, query.shape[-1])
    logits = (kv * q).sum(axis=-1)
    weights = ad.softmax(logits, mask=mask, axis=-1)
    w = weights.reshape(*weights.shape, 1)
    context = (kv * w).sum(axis=-2)
    return AttentionResult(weights, context)


def multi_hop(audio, text, hops, projections=None):
    """Run ``hops`` (1, 2 or 3) chained attention hops.

    Fused outputs: hop 1 -> [H1; audio last], hop 2 -> [H1; H2],
    hop 3 -> [H3; H2].
    """
    if hops not in (1, 2, 3):
        raise ValueError(f"hops must be 1, 2 or 3, got {hops}")
    proj = list(projections) if projections is not None else [None] * hops
    first = dot_attention(audio.last_state, text.outputs, text.mask, proj[0])
    trace = [first]
    if hops == 1:
        return FusedRepresentation(ad.concat([first.context, audio.last_state]), trace)
    second = dot_attention(first.context, audio.outputs, audio.mask, proj[1])
    trace.append(second)
    if hops == 2:
        return FusedRepresentation(ad.concat([first.context, second.context]), trace)
    third = dot_attention(second.context, text.outputs, text.mask, proj[2])
    trace.append(third)
    return FusedRepresentation(ad.concat([third.context, second.context]), trace)


def mha1(audio, text, projections=None):
    return multi_hop(audio, text, 1, projections)


def mha2(audio, text, projections=None):
    return multi_hop(audio, text, 2, projections)


def mha3(audio, text, projections=None):
    return multi_hop(audio, text, 3, projections)


def projection_shapes(hops, d_audio, d_text):
    """Query-to-key projection shapes for each hop in projected mode."""
    shapes = [(d_audio, d_text), (d_text, d_audio), (d_audio, d_text)]
    return shapes[:hops]


def fused_dim(d_audio, d_text):
    """Width of H; every hop count joins one text-width and one audio-width part."""
    return d_text + d_audio


def check_strict_dims(d_audio, d_text):
    if d_audio != d_text:
        raise AttentionConfigError(
            f"audio output width {d_audio} != text output width {d_text}; "
            f"strict attention requires {DIM_CONSTRAINT}"
        )
