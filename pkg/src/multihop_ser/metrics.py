"""Weighted/unweighted accuracy and confusion matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import EMOTIONS


@dataclass
class EvalReport:
    wa: float
    ua: float
    confusion: np.ndarray  # rows = true, cols = predicted
    confusion_pct: np.ndarray
    labels: tuple = EMOTIONS
    zero_support: list = field(default_factory=list)

    @property
    def n(self):
        return int(self.confusion.sum())

    def to_dict(self):
        return {
            "wa": self.wa,
            "ua": self.ua,
            "n": self.n,
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "confusion_pct": self.confusion_pct.tolist(),
            "zero_support": list(self.zero_support),
        }

    def format(self):
        width = max(len(str(x)) for x in self.labels) + 2
        lines = [f"WA {self.wa:.4f}  UA {self.ua:.4f}  (n={self.n})"]
        lines.append(" " * width + "".join(f"{str(x):>{width}}" for x in self.labels))
        for name, row in zip(self.labels, self.confusion_pct):
            lines.append(f"{str(name):<{width}}" + "".join(f"{v:>{width}.2f}" for v in row))
        return "\n".join(lines)


def compute_metrics(true_labels, predicted_labels, labels=EMOTIONS):
    """WA = overall accuracy; UA = mean recall over classes that occur in
    ``true_labels`` (classes with no support are left out of the mean)."""
    labels = tuple(labels)
    t = list(true_labels)
    p = list(predicted_labels)
    if len(t) != len(p):
        raise ValueError(f"{len(t)} true labels but {len(p)} predictions")
    if not t:
        raise ValueError("cannot score an empty prediction set")
    index = {lab: i for i, lab in enumerate(labels)}
    try:
        ti = np.fromiter((index[x] for x in t), dtype=np.int64, count=len(t))
        pi = np.fromiter((index[x] for x in p), dtype=np.int64, count=len(p))
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} is not in {labels}") from None
    k = len(labels)
    confusion = np.bincount(ti * k + pi, minlength=k * k).reshape(k, k)
    support = confusion.sum(axis=1)
    present = support > 0
    recall = np.zeros(k)
    recall[present] = np.diag(confusion)[present] / support[present]
    pct = np.zeros((k, k))
    pct[present] = 100.0 * confusion[present] / support[present, None]
    return EvalReport(
        wa=float(np.trace(confusion) / confusion.sum()),
        ua=float(recall[present].mean()),
        confusion=confusion,
        confusion_pct=pct,
        labels=labels,
        zero_support=[labels[i] for i in np.flatnonzero(~present)],
    )
