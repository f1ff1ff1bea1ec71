"""Multimodal speech emotion recognition with bidirectional recurrent
encoders and multi-hop cross-modal attention."""

from .config import RunConfig
from .data import EMOTIONS, Utterance, Vocabulary
from .estimator import EmotionClassifier
from .evaluation import cross_validate
from .metrics import EvalReport, compute_metrics

__all__ = [
    "EMOTIONS",
    "EmotionClassifier",
    "EvalReport",
    "RunConfig",
    "Utterance",
    "Vocabulary",
    "compute_metrics",
    "cross_validate",
]

__version__ = "0.1.0"
