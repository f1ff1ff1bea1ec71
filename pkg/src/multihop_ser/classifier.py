"""Softmax output layer and the cross-entropy objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

LOG_FLOOR = 1e-12


@dataclass
class ClassifierParams:
    W: Tensor  # [d_H, C]
    b: Tensor  # [C]

    @property
    def n_classes(self):
        return self.b.shape[0]

    def named_tensors(self, prefix=""):
        return {prefix + "W": self.W, prefix + "b": self.b}


def init_classifier(d_H, n_classes, rng):
    k = 1.0 / np.sqrt(d_H)
    return ClassifierParams(
        W=Tensor(rng.uniform(-k, k, size=(d_H, n_classes)), requires_grad=True),
        b=Tensor(np.zeros(n_classes), requires_grad=True),
    )


def logits(H, params):
    H = ad.as_tensor(H)
    if H.shape[-1] != params.W.shape[0]:
        raise ShapeError(
            f"representation width {H.shape[-1]} does not match classifier input {params.W.shape[0]}"
        )
    return ad.matmul(H, params.W) + params.b


def predict(H, params):
    """Class probabilities softmax(H W + b)."""
    return ad.softmax(logits(H, params), axis=-1)


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(predicted, labels):
    """Summed negative log-likelihood of one-hot ``labels`` under ``predicted``.

    The log input is floored at 1e-12 so a saturated softmax stays finite.
    """
    predicted = ad.as_tensor(predicted)
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=np.float64)
    if y.shape != predicted.shape:
        raise ShapeError(f"labels shape {y.shape} != predictions shape {predicted.shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=-1) == 1)):
        raise ValueError("labels must be one-hot rows")
    return -(ad.log(predicted, floor=LOG_FLOOR) * y).sum()
