"""scikit-learn style estimator around the multimodal network."""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .classifier import LOG_FLOOR, cross_entropy, one_hot
from .config import ConfigError, validate_model_params
from .data import EMOTIONS, LABEL_INDEX, Utterance, Vocabulary, collate, merge_excitement
from .metrics import compute_metrics
from .network import Network
from .optim import Adam, ClipConfig, clip_global_norm, derive_rng

log = logging.getLogger(__name__)


def _mean_nll(proba, y_idx):
    return float(-np.mean(np.log(np.maximum(proba[np.arange(len(y_idx)), y_idx], LOG_FLOOR))))


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def check_utterances(X, d_p=None):
    """Validate a sequence of Utterances and return it as a list."""
    if isinstance(X, Utterance):
        raise TypeError("expected a sequence of Utterance objects, got a single Utterance")
    X = list(X)
    if not X:
        raise ValueError("need at least one utterance")
    widths = set()
    for u in X:
        if not isinstance(u, Utterance):
            raise TypeError(f"expected Utterance, got {type(u).__name__}")
        widths.add(u.audio.shape[1])
        if d_p is not None and d_p > 0 and u.prosody.size != d_p:
            raise ValueError(f"{u.id}: prosody has {u.prosody.size} values, expected d_p={d_p}")
    if len(widths) != 1:
        raise ValueError(f"utterances disagree on audio feature width: {sorted(widths)}")
    return X


def check_labels(y, X):
    """Label strings (or taken from ``X``) -> class indices."""
    if y is None:
        y = [u.label for u in X]
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"{len(X)} utterances but {len(y)} labels")
    out = []
    for label in y:
        if isinstance(label, (int, np.integer)):
            if not 0 <= int(label) < len(EMOTIONS):
                raise ValueError(f"class index {label} out of range")
            out.append(int(label))
        elif label is None:
            raise ValueError("missing label")
        else:
            out.append(LABEL_INDEX[merge_excitement(str(label))])
    return np.asarray(out, dtype=np.int64)


class EmotionClassifier(ClassifierMixin, BaseEstimator):
    """Audio/text emotion classifier: BLSTM encoders with optional
    multi-hop cross-modal attention.

    ``model`` picks the variant: ``audio-bre`` and ``text-bre`` use a single
    modality, ``mha-1``/``mha-2``/``mha-3`` fuse both with 1-3 attention
    hops.  In ``strict`` attention mode the encoder widths must satisfy
    ``2*d_h_text == 2*d_h_audio + d_p``.

    ``fit`` trains with Adam on the batch-mean cross-entropy, clipping the
    global gradient norm.  When a development set is passed, the epoch with
    the best development WA (ties broken by lower development loss) is kept
    and training stops after ``patience`` epochs without improvement.
    """

    def __init__(
        self,
        model="mha-2",
        d_h_audio=64,
        d_h_text=80,
        d_e=100,
        d_p=32,
        layers=1,
        dropout_rate=0.3,
        learning_rate=1e-3,
        clip_norm=1.0,
        batch_size=32,
        max_epochs=50,
        patience=10,
        seed=0,
        max_audio_len=750,
        max_text_len=128,
        attention_mode="strict",
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        verbose=0,
    ):
        self.model = model
        self.d_h_audio = d_h_audio
        self.d_h_text = d_h_text
        self.d_e = d_e
        self.d_p = d_p
        self.layers = layers
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.max_audio_len = max_audio_len
        self.max_text_len = max_text_len
        self.attention_mode = attention_mode
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.verbose = verbose

    # -- setup --------------------------------------------------------------

    def _validate_params(self):
        validate_model_params(self.get_params())

    def _build(self, d_audio_in, vocabulary):
        self.vocabulary_ = vocabulary
        self.classes_ = np.array(EMOTIONS)
        self.d_audio_in_ = int(d_audio_in)
        self.network_ = Network(
            self.model,
            d_audio_in,
            len(vocabulary),
            d_h_audio=self.d_h_audio,
            d_h_text=self.d_h_text,
            d_e=self.d_e,
            d_p=self.d_p,
            layers=self.layers,
            attention_mode=self.attention_mode,
            seed=self.seed,
            n_classes=len(EMOTIONS),
        )
        return self.network_

    def _prosody_dim(self):
        return None if self.model == "text-bre" else self.d_p

    def _batch(self, utterances):
        return collate(utterances, self.vocabulary_, self.max_audio_len, self.max_text_len)

    # -- training -----------------------------------------------------------

    def fit(self, X, y=None, X_dev=None, y_dev=None, callback=None):
        """Train on utterances ``X`` with labels ``y`` (default: ``u.label``).

        ``callback(epoch_record)`` is called after every epoch; returning
        True stops training.
        """
        self._validate_params()
        X = check_utterances(X, self._prosody_dim())
        y_idx = check_labels(y, X)
        dev = None
        if X_dev is not None:
            X_dev = check_utterances(X_dev, self._prosody_dim())
            dev = (X_dev, check_labels(y_dev, X_dev))

        net = self._build(X[0].audio.shape[1], Vocabulary.build(u.transcript for u in X))
        params = net.params
        opt = Adam(params, self.learning_rate, self.beta1, self.beta2, self.epsilon)
        clip = ClipConfig(self.clip_norm)
        targets = one_hot(y_idx, len(EMOTIONS))

        self.history_ = []
        self.best_epoch_ = None
        best_wa, best_loss, best_state, stale = -1.0, math.inf, None, 0
        step = 0
        n = len(X)
        for epoch in range(self.max_epochs):
            order = derive_rng(self.seed, "shuffle", epoch).permutation(n)
            total, seen = 0.0, 0
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                step += 1
                batch = self._batch([X[i] for i in idx])
                out = net.forward(batch, training=True, dropout_rate=self.dropout_rate, seed=self.seed, step=step)
                loss_sum = cross_entropy(ad.softmax(out.logits, axis=-1), targets[idx])
                value = float(loss_sum.data)
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, step {step}",
                        {"epoch": epoch, "step": step, "loss": value},
                    )
                opt.zero_grad()
                (loss_sum * (1.0 / len(idx))).backward()
                grad_norm = clip_global_norm(params.values(), clip)
                if not math.isfinite(grad_norm):
                    raise TrainingDivergedError(
                        f"non-finite gradient at epoch {epoch}, step {step}",
                        {"epoch": epoch, "step": step, "grad_norm": grad_norm},
                    )
                opt.step()
                total += value
                seen += len(idx)
            record = {"epoch": epoch, "train_loss": total / seen, "train_loss_sum": total}
            if dev is not None:
                proba = self.predict_proba(dev[0])
                report = compute_metrics(dev[1], proba.argmax(axis=1), labels=range(len(EMOTIONS)))
                dev_loss = _mean_nll(proba, dev[1])
                record.update(dev_wa=report.wa, dev_ua=report.ua, dev_loss=dev_loss)
                # ties on dev WA go to the lower dev loss
                if (report.wa, -dev_loss) > (best_wa, -best_loss):
                    best_wa, best_loss, best_state, stale = report.wa, dev_loss, net.state_dict(), 0
                    self.best_epoch_ = epoch
                else:
                    stale += 1
            self.history_.append(record)
            if self.verbose:
                log.info("epoch %d %s", epoch, record)
            if callback is not None and callback(record):
                break
            if dev is not None and stale >= self.patience:
                break
        if best_state is not None:
            net.load_state_dict(best_state)
        else:
            self.best_epoch_ = len(self.history_) - 1
        self.n_epochs_ = len(self.history_)
        return self

    # -- inference ----------------------------------------------------------

    def _forward_batches(self, X):
        net = self.network_
        for start in range(0, len(X), self.batch_size):
            chunk = X[start : start + self.batch_size]
            batch = self._batch(chunk)
            yield chunk, batch, net.forward(batch)

    def decision_function(self, X):
        """Pre-softmax class scores, shape [n, 4]."""
        check_is_fitted(self, "network_")
        X = check_utterances(X, self._prosody_dim())
        return np.concatenate([out.logits.data for _, _, out in self._forward_batches(X)])

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def _predict_idx(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.classes_[self._predict_idx(X)]

    def predict_details(self, X):
        """Per-utterance label, probabilities and per-hop attention weights
        (trimmed to each sequence's valid length)."""
        check_is_fitted(self, "network_")
        X = check_utterances(X, self._prosody_dim())
        records = []
        for chunk, batch, out in self._forward_batches(X):
            z = out.logits.data - out.logits.data.max(axis=1, keepdims=True)
            probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
            for i, u in enumerate(chunk):
                hops = []
                for h, res in enumerate(out.hop_trace):
                    mask = batch.audio_mask[i] if h == 1 else batch.text_mask[i]
                    hops.append(res.weights.data[i][mask].tolist())
                records.append(
                    {
                        "id": u.id,
                        "label": EMOTIONS[int(np.argmax(probs[i]))],
                        "probabilities": dict(zip(EMOTIONS, probs[i].tolist())),
                        "attention": hops,
                    }
                )
        return records

    def loss(self, X, y=None):
        """Mean per-utterance cross-entropy in inference mode."""
        X = check_utterances(X, self._prosody_dim())
        y_idx = check_labels(y, X)
        return _mean_nll(self.predict_proba(X), y_idx)


__all__ = ["EmotionClassifier", "TrainingDivergedError", "check_utterances", "check_labels", "ConfigError"]
