"""The five model variants wired from encoder, attention and classifier parts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import check_strict_dims, fused_dim, multi_hop, projection_shapes
from .autodiff import Tensor
from .classifier import init_classifier, logits as classifier_logits
from .config import MODELS
from .data import PAD, embed
from .encoder import encode, init_params
from .optim import derive_rng

HOPS = {"mha-1": 1, "mha-2": 2, "mha-3": 3}


@dataclass
class ForwardResult:
    logits: Tensor
    H: Tensor
    hop_trace: list = field(default_factory=list)


class Network:
    """Parameters plus forward pass for one model variant.

    ``params`` is an ordered name -> Tensor mapping covering every learned
    tensor; encoders a variant does not use are never created.
    """

    def __init__(
        self,
        model,
        d_audio_in,
        vocab_size,
        d_h_audio=64,
        d_h_text=80,
        d_e=100,
        d_p=32,
        layers=1,
        attention_mode="strict",
        seed=0,
        n_classes=4,
    ):
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}")
        self.model = model
        self.d_p = d_p
        self.attention_mode = attention_mode
        self.uses_audio = model != "text-bre"
        self.uses_text = model != "audio-bre"
        self.audio = self.text = self.embedding = None
        self.projections = None
        d_audio_out = 2 * d_h_audio + d_p
        d_text_out = 2 * d_h_text

        if self.uses_audio:
            self.audio = init_params(d_audio_in, d_h_audio, derive_rng(seed, "init", "audio"), layers)
        if self.uses_text:
            table = derive_rng(seed, "init", "embedding").uniform(-0.5, 0.5, size=(vocab_size, d_e))
            table[PAD] = 0.0
            self.embedding = Tensor(table, requires_grad=True)
            self.text = init_params(d_e, d_h_text, derive_rng(seed, "init", "text"), layers)

        if model in HOPS:
            hops = HOPS[model]
            if attention_mode == "strict":
                check_strict_dims(d_audio_out, d_text_out)
            else:
                rng = derive_rng(seed, "init", "attention")
                self.projections = [
                    Tensor(rng.uniform(-1, 1, size=s) / np.sqrt(s[0]), requires_grad=True)
                    for s in projection_shapes(hops, d_audio_out, d_text_out)
                ]
            d_H = fused_dim(d_audio_out, d_text_out)
        elif model == "audio-bre":
            d_H = d_audio_out
        else:
            d_H = d_text_out
        self.classifier = init_classifier(d_H, n_classes, derive_rng(seed, "init", "classifier"))

    @property
    def params(self):
        out = {}
        if self.audio is not None:
            out.update(self.audio.named_tensors("audio."))
        if self.embedding is not None:
            out["text.embedding"] = self.embedding
        if self.text is not None:
            out.update(self.text.named_tensors("text."))
        if self.projections is not None:
            for i, p in enumerate(self.projections):
                out[f"attention.hop{i + 1}.W"] = p
        out.update(self.classifier.named_tensors("classifier."))
        return out

    def encode_audio(self, batch, training=False, dropout_rate=0.0, rng=None):
        prosody = batch.prosody if self.d_p > 0 else None
        return encode(
            batch.audio, batch.audio_mask, self.audio, prosody=prosody,
            dropout_rate=dropout_rate, training=training, rng=rng, d_p=self.d_p,
        )

    def encode_text(self, batch, training=False, dropout_rate=0.0, rng=None):
        emb = embed(batch.tokens, self.embedding)
        return encode(
            emb, batch.text_mask, self.text,
            dropout_rate=dropout_rate, training=training, rng=rng,
        )

    def forward(self, batch, training=False, dropout_rate=0.0, seed=0, step=0):
        """Logits for a collated batch.  Dropout masks depend only on
        ``(seed, site, step)``."""

        def site(name):
            return derive_rng(seed, "dropout", name, step) if training else None

        audio = text = None
        if self.uses_audio:
            audio = self.encode_audio(batch, training, dropout_rate, site("audio"))
        if self.uses_text:
            text = self.encode_text(batch, training, dropout_rate, site("text"))
        trace = []
        if self.model == "audio-bre":
            H = audio.last_state
        elif self.model == "text-bre":
            H = text.last_state
        else:
            fused = multi_hop(audio, text, HOPS[self.model], self.projections)
            H, trace = fused.H, fused.hop_trace
        H = ad.dropout(H, dropout_rate, training, site("fused"))
        return ForwardResult(classifier_logits(H, self.classifier), H, trace)

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        params = self.params
        missing = set(params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data[...] = arr
