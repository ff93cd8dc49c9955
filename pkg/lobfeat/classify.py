#!/usr/bin/env python3
"""
lobfeat - Mid-price movement classifiers: LMS, LDA and RBF network

Matrices follow the feature-matrix convention: X is features x samples,
targets are classes x samples. Labels are `Movement` values 0..2.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Optional, Union

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist
from sklearn.cluster import KMeans
from sklearn.metrics import accuracy_score, multilabel_confusion_matrix, precision_recall_fscore_support

from .config import ClassifierConfig
from .errors import CriterionError, FormatError

logger = logging.getLogger(__name__)


class Movement(IntEnum):
    UP = 0
    DOWN = 1
    STATIONARY = 2


N_CLASSES = len(Movement)
CLASSIFIERS = ("lms", "lda", "rbfn")


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    targets = np.zeros((n_classes, len(labels)))
    targets[labels, np.arange(len(labels))] = 1.0
    return targets


def with_bias(X: np.ndarray) -> np.ndarray:
    return np.vstack([X, np.ones((1, X.shape[1]))])


# ---------------------------------------------------------------------------
# LMS


def lms_fit(X: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares W = (X^T)^+ T^T, so that X^T W ~ T^T"""
    design = np.asarray(X, dtype=np.float64).T
    rcond = max(design.shape) * np.finfo(np.float64).eps
    return np.linalg.pinv(design, rcond=rcond) @ np.asarray(T, dtype=np.float64).T


@dataclass(frozen=True)
class LmsModel:
    weights: np.ndarray  # (features [+1]) x classes
    bias: bool = True

    kind = "lms"

    def outputs(self, X: np.ndarray) -> np.ndarray:
        design = with_bias(X) if self.bias else X
        return self.weights.T @ design

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.outputs(X), axis=0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias}


def train_lms(X: np.ndarray, labels, bias: bool = True) -> LmsModel:
    design = with_bias(X) if bias else X
    return LmsModel(weights=lms_fit(design, one_hot(labels)), bias=bias)


# ---------------------------------------------------------------------------
# LDA


def scatter_matrices(X: np.ndarray, labels):
    """Within- and between-class scatter (sums, not averages) over the classes present"""
    labels = np.asarray(labels)
    mu = X.mean(axis=1, keepdims=True)
    p = X.shape[0]
    s_w = np.zeros((p, p))
    s_b = np.zeros((p, p))
    for c in np.unique(labels):
        members = X[:, labels == c]
        mu_c = members.mean(axis=1, keepdims=True)
        delta = members - mu_c
        s_w += delta @ delta.T
        s_b += members.shape[1] * (mu_c - mu) @ (mu_c - mu).T
    return s_w, s_b


def fisher_ratio(w: np.ndarray, s_w: np.ndarray, s_b: np.ndarray) -> float:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    within = w @ s_w @ w
    return float(w @ s_b @ w / within) if within > 0 else np.inf


@dataclass(frozen=True)
class LdaModel:
    projection: np.ndarray  # features x q
    class_means: np.ndarray  # q x classes present, in projected space
    classes: np.ndarray  # labels of the class_means columns

    kind = "lda"

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self.projection.T @ X

    def predict(self, X: np.ndarray) -> np.ndarray:
        distances = cdist(self.transform(X).T, self.class_means.T, metric="sqeuclidean")
        return self.classes[np.argmin(distances, axis=1)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "projection": self.projection.tolist(),
                "class_means": self.class_means.tolist(), "classes": self.classes.tolist()}


def lda_fit(X: np.ndarray, labels, ridge: float = 1e-6) -> LdaModel:
    """Fisher discriminant: top (classes - 1) generalized eigenvectors of (S_B, S_W + ridge I)"""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise CriterionError(f"LDA needs at least two classes, got {classes.tolist()}")
    s_w, s_b = scatter_matrices(X, labels)
    p = X.shape[0]
    _, vectors = scipy.linalg.eigh(s_b, s_w + ridge * np.eye(p))
    q = min(p, len(classes) - 1)
    projection = vectors[:, ::-1][:, :q]
    means = np.column_stack([projection.T @ X[:, labels == c].mean(axis=1) for c in classes])
    return LdaModel(projection=projection, class_means=means, classes=classes)


def train_lda(X: np.ndarray, labels, ridge: float = 1e-6) -> LdaModel:
    return lda_fit(X, labels, ridge)


# ---------------------------------------------------------------------------
# RBF network


@dataclass(frozen=True)
class RbfnModel:
    prototypes: np.ndarray  # features x K
    spread: float
    ridge: float
    weights: np.ndarray  # K x classes

    kind = "rbfn"

    def __post_init__(self):
        if self.prototypes.shape[1] < 1:
            raise ValueError("RBF network needs at least one prototype")
        if not self.spread > 0:
            raise ValueError(f"spread must be positive, got {self.spread}")
        if self.ridge < 0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")

    def hidden(self, X: np.ndarray) -> np.ndarray:
        """K x samples Gaussian activations exp(-|x - v|^2 / (2 sigma^2))"""
        sq = cdist(self.prototypes.T, np.asarray(X, dtype=np.float64).T, metric="sqeuclidean")
        return np.exp(-sq / (2.0 * self.spread ** 2))

    def outputs(self, X: np.ndarray) -> np.ndarray:
        return self.weights.T @ self.hidden(X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.outputs(X), axis=0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "prototypes": self.prototypes.tolist(), "spread": self.spread,
                "ridge": self.ridge, "weights": self.weights.tolist()}


def _median_spread(prototypes: np.ndarray, X: np.ndarray) -> float:
    if prototypes.shape[1] > 1:
        spread = float(np.median(pdist(prototypes.T)))
    else:
        spread = float(np.median(cdist(X.T, prototypes.T)))
    return spread if spread > 0 and np.isfinite(spread) else 1.0


def train_rbfn(X: np.ndarray, labels, n_prototypes: int = 60, spread: Optional[float] = None,
               ridge: float = 1e-3, seed: int = 42, max_iter: int = 100) -> RbfnModel:
    """k-means prototypes, Gaussian hidden layer, output weights from (H H^T + ridge I) W = H T^T"""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    if not 1 <= n_prototypes <= n:
        raise ValueError(f"need 1 <= prototypes <= samples, got {n_prototypes} for {n} samples")
    if spread is not None and spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")

    kmeans = KMeans(n_clusters=n_prototypes, init="k-means++", n_init=1, max_iter=max_iter,
                    random_state=seed).fit(X.T)
    prototypes = kmeans.cluster_centers_.T.copy()
    sigma = spread if spread is not None else _median_spread(prototypes, X)

    draft = RbfnModel(prototypes, sigma, ridge, np.zeros((n_prototypes, N_CLASSES)))
    H = draft.hidden(X)
    system = H @ H.T + ridge * np.eye(n_prototypes)
    weights = scipy.linalg.solve(system, H @ one_hot(labels).T, assume_a="sym")
    return RbfnModel(prototypes, sigma, ridge, weights)


# ---------------------------------------------------------------------------
# dispatch and scoring

Model = Union[LmsModel, LdaModel, RbfnModel]


def train_classifier(name: str, X: np.ndarray, labels, config: ClassifierConfig = ClassifierConfig(),
                     seed: int = 42) -> Model:
    if name == "lms":
        return train_lms(X, labels, config.lms_bias)
    if name == "lda":
        return train_lda(X, labels)
    if name == "rbfn":
        k = min(config.rbfn_prototypes, X.shape[1])
        return train_rbfn(X, labels, k, config.rbfn_spread, config.rbfn_ridge, seed, config.kmeans_max_iter)
    raise ValueError(f"Unknown classifier: {name}")


def model_from_dict(payload: dict) -> Model:
    try:
        kind = payload["kind"]
        if kind == "lms":
            return LmsModel(np.asarray(payload["weights"]), bool(payload["bias"]))
        if kind == "lda":
            return LdaModel(np.asarray(payload["projection"]), np.asarray(payload["class_means"]),
                            np.asarray(payload["classes"]))
        if kind == "rbfn":
            return RbfnModel(np.asarray(payload["prototypes"]), float(payload["spread"]),
                             float(payload["ridge"]), np.asarray(payload["weights"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Invalid model snapshot: {e}")
    raise FormatError(f"Unknown model kind: {kind}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def to_dict(self) -> Dict[str, list]:
        return {k: getattr(self, k).tolist() for k in ("tp", "fp", "fn", "tn")}


def confusion_counts(predictions, truth) -> ConfusionCounts:
    per_class = multilabel_confusion_matrix(truth, predictions, labels=list(range(N_CLASSES)))
    return ConfusionCounts(tp=per_class[:, 1, 1], fp=per_class[:, 0, 1],
                           fn=per_class[:, 1, 0], tn=per_class[:, 0, 0])


def score(predictions, truth) -> Dict[str, float]:
    """Accuracy and macro precision/recall/F1 over the three movement classes"""
    if len(truth) == 0:
        raise ValueError("cannot score an empty prediction set")
    precision, recall, f1, _ = precision_recall_fscore_support(
        truth, predictions, labels=list(range(N_CLASSES)), average="macro", zero_division=0
    )
    return {
        "accuracy": float(accuracy_score(truth, predictions)),
        "precision": float(precision),
        "recall": float(recall),
        "f1_macro": float(f1),
    }
