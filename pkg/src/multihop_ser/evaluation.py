"""K-fold cross-validation with dev-set model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone

from .data import EMOTIONS, make_folds
from .estimator import EmotionClassifier, TrainingDivergedError
from .metrics import EvalReport, compute_metrics

log = logging.getLogger(__name__)

MODALITY = {"audio-bre": "A", "text-bre": "T", "mha-1": "A+T", "mha-2": "A+T", "mha-3": "A+T"}


@dataclass
class FoldResult:
    fold: int
    report: EvalReport | None
    n_train: int
    n_dev: int
    n_test: int
    seed: int
    best_epoch: int | None = None
    error: dict | None = None

    @property
    def failed(self):
        return self.report is None


@dataclass
class CVResult:
    folds: list = field(default_factory=list)
    wa: float = float("nan")
    ua: float = float("nan")
    model: str = ""

    @property
    def reports(self):
        return [f.report for f in self.folds if f.report is not None]

    @property
    def excluded(self):
        return [f.fold for f in self.folds if f.failed]

    def to_dict(self):
        return {
            "model": self.model,
            "wa": self.wa,
            "ua": self.ua,
            "excluded_folds": self.excluded,
            "folds": [
                {
                    "fold": f.fold,
                    "seed": f.seed,
                    "n_train": f.n_train,
                    "n_dev": f.n_dev,
                    "n_test": f.n_test,
                    "best_epoch": f.best_epoch,
                    "report": f.report.to_dict() if f.report is not None else None,
                    "error": f.error,
                }
                for f in self.folds
            ],
        }

    def table_row(self):
        """One line in the Model / Modality / WA / UA layout."""
        return f"{self.model:<12}{MODALITY.get(self.model, '?'):<10}{self.wa:<8.3f}{self.ua:.3f}"


def fold_seed(master_seed, fold):
    return int(np.random.SeedSequence([int(master_seed), int(fold)]).generate_state(1)[0])


def _run_fold(estimator, split, by_id):
    seed = fold_seed(estimator.seed, split.fold_index)
    est = clone(estimator).set_params(seed=seed)
    train = [by_id[i] for i in split.train]
    dev = [by_id[i] for i in split.dev]
    test = [by_id[i] for i in split.test]
    base = dict(fold=split.fold_index, n_train=len(train), n_dev=len(dev), n_test=len(test), seed=seed)
    try:
        est.fit(train, X_dev=dev)
    except TrainingDivergedError as exc:
        log.warning("fold %d diverged: %s", split.fold_index, exc)
        return FoldResult(report=None, error={"message": str(exc), **exc.diagnostics}, **base), None
    report = compute_metrics([u.label for u in test], est.predict(test), labels=EMOTIONS)
    return FoldResult(report=report, best_epoch=est.best_epoch_, **base), est


def cross_validate(utterances, estimator=None, folds=None, n_folds=10, group_by_session=False, n_jobs=None, return_estimators=False):
    """Train/evaluate one model per fold; aggregate = mean of fold WA and UA.

    Fold seeds derive from ``estimator.seed``.  A fold whose training
    diverges is reported as failed and left out of the mean.
    """
    estimator = estimator if estimator is not None else EmotionClassifier()
    utterances = list(utterances)
    if folds is None:
        groups = [u.session for u in utterances] if group_by_session else None
        folds = make_folds(utterances, n_folds=n_folds, seed=estimator.seed, groups=groups)
    by_id = {u.id: u for u in utterances}
    outcomes = Parallel(n_jobs=n_jobs)(delayed(_run_fold)(estimator, s, by_id) for s in folds)
    result = CVResult(folds=[r for r, _ in outcomes], model=estimator.model)
    reports = result.reports
    if reports:
        result.wa = float(np.mean([r.wa for r in reports]))
        result.ua = float(np.mean([r.ua for r in reports]))
    if return_estimators:
        return result, [e for _, e in outcomes]
    return result
