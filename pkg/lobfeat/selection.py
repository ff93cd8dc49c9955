#!/usr/bin/env python3
"""
lobfeat - Greedy wrapper feature selection

At each step every remaining feature is stacked under the already selected
block and scored; the best candidate joins the block. Five criteria:

    entropy  sum of per-feature histogram entropies          maximize
    lms1     LMS classification rate                         maximize
    lms2     Frobenius distance of LMS outputs to one-hot    minimize
    lda1     LDA classification rate                         maximize
    lda2     projected within / between scatter trace        minimize

Supervised criteria fit on the first part of the samples (in time order)
and score on the rest.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .classify import lda_fit, one_hot, scatter_matrices, train_lms
from .config import ClassifierConfig, SelectionConfig
from .errors import CriterionError, FormatError, ValidationError

logger = logging.getLogger(__name__)

METHODS = ("entropy", "lms1", "lms2", "lda1", "lda2")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # D x N
    labels: np.ndarray  # N, -1 where undefined
    flags: np.ndarray  # N bool

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.labels) or len(self.labels) != len(self.flags):
            raise ValidationError(f"dataset shapes disagree: X {self.X.shape}, "
                                  f"labels {len(self.labels)}, flags {len(self.flags)}")
        usable = self.usable_mask()
        if not np.all(np.isfinite(self.X[:, usable])):
            raise ValidationError("non-finite feature values among unflagged samples")

    @property
    def n_features(self) -> int:
        return self.X.shape[0]

    def usable_mask(self) -> np.ndarray:
        return ~np.asarray(self.flags, dtype=bool) & (np.asarray(self.labels) >= 0)

    def usable(self):
        mask = self.usable_mask()
        return self.X[:, mask], np.asarray(self.labels)[mask].astype(np.int64)


# ---------------------------------------------------------------------------
# criteria


def feature_entropy(row: np.ndarray, bins: int = 100) -> float:
    """Entropy (nats) of the histogram of one feature over `bins` equal-width bins"""
    row = np.asarray(row, dtype=np.float64)
    if len(row) == 0 or row.max() == row.min():
        return 0.0
    counts, _ = np.histogram(row, bins=bins)
    p = counts[counts > 0] / len(row)
    return float(-(p * np.log(p)).sum())


def entropy_criterion(stacked_X: np.ndarray, bins: int = 100) -> float:
    return float(sum(feature_entropy(row, bins) for row in np.atleast_2d(stacked_X)))


def temporal_split(X: np.ndarray, labels: np.ndarray, fit_fraction: float = 0.8):
    n = X.shape[1]
    cut = int(round(n * fit_fraction))
    if cut < 1 or cut >= n:
        raise CriterionError(f"cannot split {n} samples at fraction {fit_fraction}")
    return X[:, :cut], labels[:cut], X[:, cut:], labels[cut:]


def lms1_criterion(stacked_X: np.ndarray, labels, fit_fraction: float = 0.8, bias: bool = True) -> float:
    X_fit, y_fit, X_score, y_score = temporal_split(stacked_X, np.asarray(labels), fit_fraction)
    model = train_lms(X_fit, y_fit, bias)
    return float(np.mean(model.predict(X_score) == y_score))


def lms2_criterion(stacked_X: np.ndarray, labels, fit_fraction: float = 0.8, bias: bool = True) -> float:
    X_fit, y_fit, X_score, y_score = temporal_split(stacked_X, np.asarray(labels), fit_fraction)
    model = train_lms(X_fit, y_fit, bias)
    return float(np.linalg.norm(model.outputs(X_score) - one_hot(y_score)))


def lda1_criterion(stacked_X: np.ndarray, labels, fit_fraction: float = 0.8, ridge: float = 1e-6) -> float:
    X_fit, y_fit, X_score, y_score = temporal_split(stacked_X, np.asarray(labels), fit_fraction)
    model = lda_fit(X_fit, y_fit, ridge)
    return float(np.mean(model.predict(X_score) == y_score))


def lda2_criterion(stacked_X: np.ndarray, labels, fit_fraction: float = 0.8, ridge: float = 1e-6) -> float:
    """trace(S_W) / trace(S_B) of the scoring samples in the fitted discriminant space"""
    X_fit, y_fit, X_score, y_score = temporal_split(stacked_X, np.asarray(labels), fit_fraction)
    model = lda_fit(X_fit, y_fit, ridge)
    s_w, s_b = scatter_matrices(model.transform(X_score), y_score)
    between = np.trace(s_b)
    return float(np.trace(s_w) / between) if between > 0 else np.inf


@dataclass(frozen=True)
class Criterion:
    name: str
    maximize: bool
    evaluate: Callable[[np.ndarray, np.ndarray], float]

    @property
    def worst(self) -> float:
        return -np.inf if self.maximize else np.inf

    def better(self, a: float, b: float) -> bool:
        return a > b if self.maximize else a < b


def make_criterion(method: str, selection: SelectionConfig = SelectionConfig(),
                   classifier: ClassifierConfig = ClassifierConfig()) -> Criterion:
    frac = selection.fit_fraction
    builders = {
        "entropy": lambda: Criterion("entropy", True, lambda X, y: entropy_criterion(X, selection.entropy_bins)),
        "lms1": lambda: Criterion("lms1", True, lambda X, y: lms1_criterion(X, y, frac, classifier.lms_bias)),
        "lms2": lambda: Criterion("lms2", False, lambda X, y: lms2_criterion(X, y, frac, classifier.lms_bias)),
        "lda1": lambda: Criterion("lda1", True, lambda X, y: lda1_criterion(X, y, frac, selection.ridge)),
        "lda2": lambda: Criterion("lda2", False, lambda X, y: lda2_criterion(X, y, frac, selection.ridge)),
    }
    if method not in builders:
        raise CriterionError(f"Unknown sorting method: {method}")
    return builders[method]()


# ---------------------------------------------------------------------------
# ranking


@dataclass(frozen=True)
class RankingList:
    method: str
    order: List[int]  # 0-based feature ids, best first
    criterion_trace: List[float]
    pool: str = "all"

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise ValidationError(f"{self.method} ranking repeats a feature")
        if len(self.criterion_trace) != len(self.order):
            raise ValidationError(f"{self.method} trace has {len(self.criterion_trace)} values for {len(self.order)} features")

    def top(self, d: int) -> np.ndarray:
        return np.asarray(self.order[:d], dtype=np.int64)

    def to_dict(self) -> dict:
        """JSON form; indices are written 1-based"""
        return {
            "method": self.method,
            "pool": self.pool,
            "order": [i + 1 for i in self.order],
            "criterion_trace": [float(v) if np.isfinite(v) else None for v in self.criterion_trace],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RankingList":
        try:
            trace = [np.nan if v is None else float(v) for v in payload["criterion_trace"]]
            return cls(method=payload["method"], order=[int(i) - 1 for i in payload["order"]],
                       criterion_trace=trace, pool=payload.get("pool", "all"))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Invalid ranking: {e}")


def _entropy_ranking(X: np.ndarray, bins: int) -> RankingList:
    scores = np.array([feature_entropy(row, bins) for row in X])
    order = np.argsort(-scores, kind="stable")
    return RankingList("entropy", order.tolist(), np.cumsum(scores[order]).tolist())


def _safe_score(criterion: Criterion, X: np.ndarray, labels: np.ndarray, rows: List[int]) -> float:
    try:
        value = criterion.evaluate(X[rows], labels)
    except (CriterionError, ValueError, np.linalg.LinAlgError) as e:
        logger.warning(f"{criterion.name} failed with candidate feature {rows[-1]}: {e}")
        return criterion.worst
    if np.isnan(value):
        logger.warning(f"{criterion.name} returned NaN on feature {rows[-1]}")
        return criterion.worst
    return value


def greedy_select(dataset: Dataset, criterion: Criterion, config: SelectionConfig = SelectionConfig()) -> RankingList:
    """Rank every feature of the dataset with the greedy wrapper loop"""
    X, labels = dataset.usable()
    d_total = dataset.n_features
    if d_total < 1:
        raise ValidationError("dataset has no features")
    if criterion.name == "entropy":
        return _entropy_ranking(X, config.entropy_bins)
    if X.shape[1] < 2:
        raise CriterionError(f"need at least two usable samples to rank, got {X.shape[1]}")

    selected: List[int] = []
    trace: List[float] = []
    remaining = list(range(d_total))
    steps = d_total if config.max_greedy_steps is None else min(d_total, config.max_greedy_steps)
    scores: List[float] = []

    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for step in range(steps):
            candidates = [selected + [c] for c in remaining]
            if executor is not None:
                scores = list(executor.map(lambda rows: _safe_score(criterion, X, labels, rows), candidates))
            else:
                scores = [_safe_score(criterion, X, labels, rows) for rows in candidates]

            best = 0
            for i in range(1, len(remaining)):
                if criterion.better(scores[i], scores[best]):
                    best = i
            selected.append(remaining.pop(best))
            trace.append(scores.pop(best))
            if (step + 1) % 10 == 0:
                logger.info(f"{criterion.name}: {step + 1}/{steps} features ranked")
    finally:
        if executor is not None:
            executor.shutdown()

    if remaining:
        if not scores:
            scores = [criterion.worst] * len(remaining)
        # past the step cap, the rest follow their last-step scores
        key = [(-s if criterion.maximize else s) for s in scores]
        tail = sorted(range(len(remaining)), key=lambda i: (key[i], remaining[i]))
        selected += [remaining[i] for i in tail]
        trace += [scores[i] for i in tail]

    return RankingList(criterion.name, selected, trace)


def rank(dataset: Dataset, method: str, selection: SelectionConfig = SelectionConfig(),
         classifier: ClassifierConfig = ClassifierConfig(), pool: str = "all",
         feature_ids: Optional[Sequence[int]] = None) -> RankingList:
    """Rank the dataset's features; with `feature_ids` the order holds those ids instead of row numbers"""
    logger.info(f"Ranking {dataset.n_features} features with {method}")
    ranking = greedy_select(dataset, make_criterion(method, selection, classifier), selection)
    order = ranking.order if feature_ids is None else [int(feature_ids[i]) for i in ranking.order]
    return RankingList(ranking.method, order, ranking.criterion_trace, pool)
