"""Synthetic multimodal datasets for smoke tests and sanity checks."""

from __future__ import annotations

import numpy as np

from .data import EMOTIONS, Utterance
from .optim import derive_rng

_FILLER = ["the", "a", "and", "so", "well", "then", "it", "was", "you", "we"]


def _class_words(tag, n_groups, per_group=4):
    return [[f"{tag}{g}w{i}" for i in range(per_group)] for g in range(n_groups)]


def _audio(rng, center, d_audio, min_len, max_len, noise):
    T = int(rng.integers(min_len, max_len + 1))
    return center[None, :] + noise * rng.standard_normal((T, d_audio))


def _text(rng, words, min_len, max_len, n_signal):
    T = int(rng.integers(min_len, max_len + 1))
    toks = [str(rng.choice(_FILLER)) for _ in range(T)]
    for pos in rng.choice(T, size=min(n_signal, T), replace=False):
        toks[pos] = str(rng.choice(words))
    return " ".join(toks)


def make_separable(
    n=40,
    seed=0,
    d_audio=6,
    d_p=2,
    audio_len=(3, 8),
    text_len=(2, 6),
    noise=0.3,
):
    """Every class is identifiable from either modality on its own."""
    rng = derive_rng(seed, "toy", "separable")
    centers = rng.standard_normal((len(EMOTIONS), d_audio)) * 1.5
    pros = rng.standard_normal((len(EMOTIONS), d_p))
    words = _class_words("c", len(EMOTIONS))
    out = []
    for i in range(n):
        k = i % len(EMOTIONS)
        out.append(
            Utterance(
                id=f"sep{i:04d}",
                audio=_audio(rng, centers[k], d_audio, *audio_len, noise),
                prosody=pros[k] + noise * rng.standard_normal(d_p),
                transcript=_text(rng, words[k], *text_len, n_signal=1),
                label=EMOTIONS[k],
                session=f"s{i % 5}",
            )
        )
    return out


def make_fusion_task(
    n=200,
    seed=0,
    d_audio=6,
    d_p=2,
    audio_len=(3, 6),
    text_len=(2, 5),
    noise=0.3,
):
    """Label = 2*audio_bit + text_bit.

    The audio features carry one bit and the transcript the other, so a model
    seeing only one modality cannot beat 50% accuracy in expectation.
    """
    rng = derive_rng(seed, "toy", "fusion")
    centers = rng.standard_normal((2, d_audio)) * 1.5
    pros = rng.standard_normal((2, d_p))
    words = _class_words("t", 2)
    out = []
    for i in range(n):
        k = i % len(EMOTIONS)
        a_bit, t_bit = divmod(k, 2)
        out.append(
            Utterance(
                id=f"fus{i:04d}",
                audio=_audio(rng, centers[a_bit], d_audio, *audio_len, noise),
                prosody=pros[a_bit] + noise * rng.standard_normal(d_p),
                transcript=_text(rng, words[t_bit], *text_len, n_signal=1),
                label=EMOTIONS[k],
                session=f"s{i % 10}",
            )
        )
    return out


def single_modality_ceiling(utterances):
    """Best accuracy achievable from the audio bit alone or the text bit alone
    (majority label within each bit value)."""
    labels = np.array([EMOTIONS.index(u.label) for u in utterances])
    best = 0.0
    for bit in (labels // 2, labels % 2):
        correct = 0
        for v in (0, 1):
            sel = labels[bit == v]
            if sel.size:
                correct += np.bincount(sel).max()
        best = max(best, correct / labels.size)
    return best
