"""Analytic vs central finite-difference gradients for every parameter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .classifier import cross_entropy, one_hot
from .config import MODELS
from .data import EMOTIONS, Utterance, Vocabulary, collate
from .network import Network
from .optim import derive_rng

STEP = 1e-5
TOLERANCE = 1e-4
# below this magnitude an element's error is judged on an absolute scale
SCALE_FLOOR = 1e-6


@dataclass
class TensorCheck:
    name: str
    shape: tuple
    max_rel_error: float
    max_abs_error: float

    @property
    def passed(self):
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < TOLERANCE)


@dataclass
class VariantCheck:
    model: str
    tensors: list = field(default_factory=list)

    @property
    def passed(self):
        return all(t.passed for t in self.tensors)

    @property
    def max_rel_error(self):
        return max(t.max_rel_error for t in self.tensors)


def relative_error(analytic, numeric, floor=SCALE_FLOOR):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(f, x, step=STEP):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        g[i] = (up - down) / (2.0 * step)
    return grad


def tiny_problem(seed=0, d_audio=5, d_p=2):
    """Two utterances of different lengths so padding paths are exercised."""
    rng = derive_rng(seed, "gradcheck", "data")
    utts = [
        Utterance("g0", rng.standard_normal((5, d_audio)), rng.standard_normal(d_p), "oh no , fine", "sad"),
        Utterance("g1", rng.standard_normal((3, d_audio)), rng.standard_normal(d_p), "great !", "happy"),
    ]
    vocab = Vocabulary.build(u.transcript for u in utts)
    return utts, vocab


def check_variant(model, seed=0, zero_weights=False, attention_mode="strict", step=STEP):
    utts, vocab = tiny_problem(seed)
    net = Network(
        model, utts[0].audio.shape[1], len(vocab),
        d_h_audio=3, d_h_text=4, d_e=3, d_p=2,
        attention_mode=attention_mode, seed=seed,
    )
    if zero_weights:
        for p in net.params.values():
            p.data[...] = 0.0
    batch = collate(utts, vocab)
    targets = one_hot([EMOTIONS.index(u.label) for u in utts], len(EMOTIONS))

    def loss():
        out = net.forward(batch)
        return cross_entropy(ad.softmax(out.logits, axis=-1), targets)

    params = net.params
    for p in params.values():
        p.zero_grad()
    loss().backward()
    result = VariantCheck(model)
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(lambda: float(loss().data), p.data, step)
        rel = relative_error(analytic, numeric)
        result.tensors.append(
            TensorCheck(name, p.shape, float(rel.max()), float(np.abs(analytic - numeric).max()))
        )
    return result


def run_gradcheck(models=MODELS, seed=0, zero_weights=False, attention_mode="strict"):
    return [check_variant(m, seed, zero_weights, attention_mode) for m in models]


def format_report(results):
    lines = []
    for r in results:
        lines.append(f"{r.model}: {'PASS' if r.passed else 'FAIL'} (max rel error {r.max_rel_error:.3e})")
        for t in r.tensors:
            shape = "x".join(str(s) for s in t.shape)
            lines.append(f"  {t.name:<28} {shape:<8} rel {t.max_rel_error:.3e}  abs {t.max_abs_error:.3e}")
    return "\n".join(lines)
