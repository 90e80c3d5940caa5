"""
From-scratch defect classifiers: Gaussian Naive Bayes, Logistic Regression
and an information-gain decision tree
"""
import json
import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from src.config import (
    LR_LEARNING_RATE,
    LR_MAX_ITER,
    LR_TOLERANCE,
    MIN_LEAF,
    MODEL_SCHEMA_VERSION,
    SCORE_THRESHOLD,
    VARIANCE_FLOOR,
)
from src.errors import (
    ConvergenceWarning,
    DegenerateModelWarning,
    ParameterError,
    ParseError,
    ShapeError,
)
from src.utils.dataset import Instance, Label, Release
from src.utils.simplify import SimplifiedTDS

logger = logging.getLogger(__name__)

TrainingData = Union[SimplifiedTDS, Release]


class ModelKind(str, Enum):
    NB = "NB"
    LR = "LR"
    DT = "DT"

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        aliases = {"nb": cls.NB, "lr": cls.LR, "dt": cls.DT, "j48": cls.DT}
        key = text.strip().casefold()
        if key not in aliases:
            raise ParameterError(f"unknown classifier '{text}'")
        return aliases[key]


@dataclass(frozen=True)
class Prediction:
    """Probability of the buggy class and the label at the 0.5 threshold"""

    score: float

    @property
    def label(self) -> Label:
        return Label.BUGGY if self.score >= SCORE_THRESHOLD else Label.NON_BUGGY


class TrainedModel(ABC):
    """Common scoring interface of every classifier"""

    kind: ModelKind
    arity: int
    provenance: Dict[str, object]

    @abstractmethod
    def scores(self, metrics: np.ndarray) -> np.ndarray:
        """Buggy-class probability for each row of an (m, arity) matrix"""

    @abstractmethod
    def parameters(self) -> Dict[str, object]:
        """JSON-ready parameters"""


def _training_arrays(tds: TrainingData) -> Tuple[np.ndarray, np.ndarray]:
    if len(tds) == 0:
        raise ParameterError("training set is empty")
    return np.asarray(tds.metrics, dtype=float), np.asarray(tds.labels, dtype=np.int64)


def _single_class(y: np.ndarray) -> Optional[int]:
    classes = np.unique(y)
    return int(classes[0]) if classes.size == 1 else None


def _warn_degenerate(kind: ModelKind, cls: int) -> None:
    message = f"{kind.value} trained on a single class ({Label(cls).name}); predicting it constantly"
    logger.warning(message)
    warnings.warn(message, DegenerateModelWarning, stacklevel=3)


# --- Naive Bayes ----------------------------------------------------------


@dataclass(eq=False)
class NaiveBayesModel(TrainedModel):
    """Gaussian likelihood per feature; priors and moments indexed by class (0, 1)"""

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    constant_class: Optional[int] = None
    provenance: Dict[str, object] = field(default_factory=dict)
    kind: ModelKind = ModelKind.NB

    @property
    def arity(self) -> int:
        return self.means.shape[1]

    def log_joint(self, metrics: np.ndarray) -> np.ndarray:
        """log P(Y=c) + sum_i log P(X_i | Y=c), one column per class"""
        out = np.empty((metrics.shape[0], 2))
        for c in (0, 1):
            var = self.variances[c]
            ll = -0.5 * np.log(2 * np.pi * var) - (metrics - self.means[c]) ** 2 / (2 * var)
            out[:, c] = np.log(self.priors[c]) + ll.sum(axis=1)
        return out

    def scores(self, metrics: np.ndarray) -> np.ndarray:
        if self.constant_class is not None:
            return np.full(metrics.shape[0], float(self.constant_class))
        joint = self.log_joint(metrics)
        return expit(joint[:, 1] - joint[:, 0])

    def parameters(self) -> Dict[str, object]:
        return {
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "constant_class": self.constant_class,
        }


def train_nb(tds: TrainingData, variance_floor: float = VARIANCE_FLOOR) -> NaiveBayesModel:
    """
    Fit class priors and per-feature Gaussian moments

    Args:
        tds: Training set
        variance_floor: Lower bound on every variance

    Returns:
        NaiveBayesModel
    """
    X, y = _training_arrays(tds)
    n = X.shape[1]
    provenance: Dict[str, object] = {"variance_floor": variance_floor, "n_train": int(X.shape[0])}
    single = _single_class(y)
    if single is not None:
        _warn_degenerate(ModelKind.NB, single)
        priors = np.array([1.0 - single, float(single)])
        provenance["degenerate"] = True
        return NaiveBayesModel(priors, np.zeros((2, n)), np.ones((2, n)), single, provenance)

    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    means = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.vstack([np.maximum(X[y == c].var(axis=0), variance_floor) for c in (0, 1)])
    provenance["degenerate"] = False
    return NaiveBayesModel(priors, means, variances, None, provenance)


# --- Logistic Regression --------------------------------------------------


def log_likelihood(weights: np.ndarray, design: np.ndarray, y: np.ndarray) -> float:
    """Binomial log-likelihood; design carries a leading column of ones"""
    z = design @ weights
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def log_likelihood_gradient(weights: np.ndarray, design: np.ndarray, y: np.ndarray) -> np.ndarray:
    return design.T @ (y - expit(design @ weights))


@dataclass(eq=False)
class LogisticRegressionModel(TrainedModel):
    """P(Y=1|X) = 1 / (1 + exp(-(w_0 + sum w_i X_i))) on raw feature scale"""

    weights: np.ndarray
    constant_class: Optional[int] = None
    provenance: Dict[str, object] = field(default_factory=dict)
    kind: ModelKind = ModelKind.LR

    @property
    def arity(self) -> int:
        return self.weights.shape[0] - 1

    def decision(self, metrics: np.ndarray) -> np.ndarray:
        return self.weights[0] + metrics @ self.weights[1:]

    def class_probabilities(self, metrics: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(P(Y=0|X), P(Y=1|X))"""
        z = self.decision(metrics)
        return expit(-z), expit(z)

    def scores(self, metrics: np.ndarray) -> np.ndarray:
        if self.constant_class is not None:
            return np.full(metrics.shape[0], float(self.constant_class))
        return self.class_probabilities(metrics)[1]

    def parameters(self) -> Dict[str, object]:
        return {"weights": self.weights.tolist(), "constant_class": self.constant_class}


def train_lr(tds: TrainingData,
             learning_rate: float = LR_LEARNING_RATE,
             max_iter: int = LR_MAX_ITER,
             tolerance: float = LR_TOLERANCE) -> LogisticRegressionModel:
    """
    Batch gradient ascent on the mean log-likelihood over standardized features

    Stops when the largest weight update falls below the tolerance or at the
    iteration cap; weights are mapped back to the raw feature scale.

    Args:
        tds: Training set
        learning_rate: Step size
        max_iter: Iteration cap
        tolerance: Threshold on max |delta w|

    Returns:
        LogisticRegressionModel
    """
    X, y = _training_arrays(tds)
    m, n = X.shape
    provenance: Dict[str, object] = {
        "learning_rate": learning_rate,
        "max_iter": max_iter,
        "tolerance": tolerance,
        "n_train": int(m),
    }
    single = _single_class(y)
    if single is not None:
        _warn_degenerate(ModelKind.LR, single)
        provenance.update(degenerate=True, iterations=0, converged=True)
        return LogisticRegressionModel(np.zeros(n + 1), single, provenance)

    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    design = np.hstack([np.ones((m, 1)), (X - center) / scale])

    w = np.zeros(n + 1)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        step = learning_rate * log_likelihood_gradient(w, design, y) / m
        w = w + step
        if np.max(np.abs(step)) < tolerance:
            converged = True
            break

    if not converged:
        message = f"logistic regression did not converge in {max_iter} iterations"
        logger.warning(message)
        warnings.warn(message, ConvergenceWarning, stacklevel=2)

    raw = np.empty(n + 1)
    raw[1:] = w[1:] / scale
    raw[0] = w[0] - np.sum(w[1:] * center / scale)
    provenance.update(degenerate=False, iterations=iterations, converged=converged)
    return LogisticRegressionModel(raw, None, provenance)


# --- Decision tree --------------------------------------------------------


def entropy(labels: np.ndarray) -> float:
    """Shannon entropy of a label set, in bits"""
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(-np.sum(p * np.log2(p)))


def conditional_entropy(labels: np.ndarray, mask: np.ndarray) -> float:
    """Entropy of the labels given a binary split"""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    n = labels.size
    return sum(part.size / n * entropy(part) for part in (labels[mask], labels[~mask]) if part.size)


def information_gain(labels: np.ndarray, mask: np.ndarray) -> float:
    return entropy(labels) - conditional_entropy(labels, mask)


def _binary_entropy(positive: np.ndarray, total: np.ndarray) -> np.ndarray:
    p = positive / total
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h


@dataclass
class TreeNode:
    n_total: int
    n_buggy: int
    feature: int = -1
    threshold: float = float("nan")
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.left < 0

    @property
    def score(self) -> float:
        # Laplace-smoothed buggy fraction
        return (self.n_buggy + 1) / (self.n_total + 2)


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[Tuple[int, float, float]]:
    """
    Highest-gain (feature, threshold, gain) over midpoints of distinct sorted values

    Ties go to the lower feature index, then the lower threshold. None when no
    split with positive gain respects the minimum leaf size.
    """
    n = y.size
    parent = entropy(y)
    best: Optional[Tuple[int, float, float]] = None
    sizes = np.arange(1, n)
    for feature in range(X.shape[1]):
        order = np.argsort(X[:, feature], kind="stable")
        xs, ys = X[order, feature], y[order]
        left_buggy = np.cumsum(ys)[:-1]
        valid = (xs[:-1] < xs[1:]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        children = (sizes * _binary_entropy(left_buggy, sizes)
                    + (n - sizes) * _binary_entropy(y.sum() - left_buggy, n - sizes)) / n
        gain = np.where(valid, parent - children, -np.inf)
        pos = int(np.argmax(gain))
        if best is None or gain[pos] > best[2]:
            threshold = (xs[pos] + xs[pos + 1]) / 2
            if threshold >= xs[pos + 1]:
                threshold = xs[pos]
            best = (feature, float(threshold), float(gain[pos]))
    if best is None or best[2] <= 1e-12:
        return None
    return best


@dataclass(eq=False)
class DecisionTreeModel(TrainedModel):
    """Binary tree stored as a node list; node 0 is the root, x <= threshold goes left"""

    nodes: List[TreeNode]
    n_features: int
    provenance: Dict[str, object] = field(default_factory=dict)
    kind: ModelKind = ModelKind.DT

    @property
    def arity(self) -> int:
        return self.n_features

    def leaf_for(self, row: np.ndarray) -> TreeNode:
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if row[node.feature] <= node.threshold else node.right]
        return node

    def scores(self, metrics: np.ndarray) -> np.ndarray:
        return np.array([self.leaf_for(row).score for row in metrics], dtype=float)

    @property
    def leaves(self) -> List[TreeNode]:
        return [node for node in self.nodes if node.is_leaf]

    def parameters(self) -> Dict[str, object]:
        return {"nodes": [[nd.n_total, nd.n_buggy, nd.feature,
                           None if nd.is_leaf else nd.threshold, nd.left, nd.right]
                          for nd in self.nodes],
                "n_features": self.n_features}


def train_dt(tds: TrainingData, min_leaf: int = MIN_LEAF) -> DecisionTreeModel:
    """
    Grow a tree by greedy information-gain splits, without pruning

    Recursion stops at pure nodes, nodes too small to split into two leaves
    of min_leaf, and nodes with no positive gain.

    Args:
        tds: Training set with at least min_leaf instances
        min_leaf: Minimum instances per leaf

    Returns:
        DecisionTreeModel
    """
    X, y = _training_arrays(tds)
    if X.shape[0] < min_leaf:
        raise ParameterError(f"decision tree needs at least {min_leaf} instances, got {X.shape[0]}")

    nodes: List[TreeNode] = [TreeNode(int(y.size), int(y.sum()))]
    stack = [(0, np.arange(y.size))]
    while stack:
        node_id, idx = stack.pop()
        node = nodes[node_id]
        if node.n_buggy in (0, node.n_total) or node.n_total < 2 * min_leaf:
            continue
        split = best_split(X[idx], y[idx], min_leaf)
        if split is None:
            continue
        feature, threshold, _ = split
        goes_left = X[idx, feature] <= threshold
        for child_idx in (idx[goes_left], idx[~goes_left]):
            nodes.append(TreeNode(int(child_idx.size), int(y[child_idx].sum())))
            stack.append((len(nodes) - 1, child_idx))
        node.feature, node.threshold = feature, threshold
        node.left, node.right = len(nodes) - 2, len(nodes) - 1

    provenance = {"min_leaf": min_leaf, "n_train": int(y.size), "n_nodes": len(nodes),
                  "pruning": None}
    return DecisionTreeModel(nodes, X.shape[1], provenance)


# --- Dispatch, prediction and persistence ---------------------------------

CLASSIFIERS: Dict[ModelKind, Callable[[TrainingData], TrainedModel]] = {
    ModelKind.NB: train_nb,
    ModelKind.LR: train_lr,
    ModelKind.DT: train_dt,
}


def train(kind: ModelKind, tds: TrainingData) -> TrainedModel:
    return CLASSIFIERS[ModelKind(kind)](tds)


def predict_scores(model: TrainedModel, metrics: np.ndarray) -> np.ndarray:
    metrics = np.atleast_2d(np.asarray(metrics, dtype=float))
    if metrics.shape[1] != model.arity:
        raise ShapeError(f"model expects {model.arity} metrics, got {metrics.shape[1]}")
    return np.clip(model.scores(metrics), 0.0, 1.0)


def predict(model: TrainedModel, instance: Instance) -> Prediction:
    """Score one instance"""
    return Prediction(float(predict_scores(model, np.asarray(instance.metrics))[0]))


def model_to_json(model: TrainedModel) -> str:
    """Versioned JSON document with kind, parameters and training provenance"""
    document = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind.value,
        "arity": model.arity,
        "parameters": model.parameters(),
        "provenance": model.provenance,
    }
    return json.dumps(document, indent=2, sort_keys=True)


def model_from_json(text: str) -> TrainedModel:
    document = json.loads(text)
    if document.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ParseError(f"unsupported model document version {document.get('schema_version')}")
    kind = ModelKind(document["kind"])
    params = document["parameters"]
    provenance = document.get("provenance", {})
    if kind is ModelKind.NB:
        return NaiveBayesModel(np.array(params["priors"]), np.array(params["means"]),
                               np.array(params["variances"]), params["constant_class"], provenance)
    if kind is ModelKind.LR:
        return LogisticRegressionModel(np.array(params["weights"]), params["constant_class"], provenance)
    nodes = [TreeNode(int(t), int(b), int(f), float("nan") if th is None else float(th), int(lt), int(rt))
             for t, b, f, th, lt, rt in params["nodes"]]
    return DecisionTreeModel(nodes, int(params["n_features"]), provenance)
