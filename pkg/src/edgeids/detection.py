"""Classical classifiers, anomaly scoring, and multi-model aggregation.

Decision tree, random forest, and k-nearest-neighbor are implemented
directly so that tie-breaking is fully deterministic: ties are always
resolved toward the lowest class enum index, distance ties toward the
lowest exemplar index, and split ties toward the lowest feature index
and threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateData,
    EmptyExemplars,
    EmptyList,
    UntrainedModel,
)
from .features import N_FEATURES, FeatureVector


class ClassLabel(Enum):
    Benign = 0
    DoS = 1
    DDoS = 2
    BruteForce = 3
    PortScan = 4
    Other = 5

    @property
    def display(self) -> str:
        return _DISPLAY[self]


_DISPLAY = {
    ClassLabel.Benign: "benign",
    ClassLabel.DoS: "DoS",
    ClassLabel.DDoS: "DDoS",
    ClassLabel.BruteForce: "brute force",
    ClassLabel.PortScan: "port scan",
    ClassLabel.Other: "other",
}

_FROM_DISPLAY = {v.lower(): k for k, v in _DISPLAY.items()}


def label_from_text(text: str) -> Optional[ClassLabel]:
    """Parse a display-style label ('brute force', 'DoS', ...); None if unknown."""
    return _FROM_DISPLAY.get(text.strip().lower())


class ModelKind(Enum):
    DecisionTree = "DecisionTree"
    RandomForest = "RandomForest"
    KNearest = "KNearest"
    External = "External"


@dataclass(frozen=True)
class Prediction:
    label: ClassLabel
    posteriors: Dict[ClassLabel, float]
    anomaly_score: float  # 1 - P(Benign)
    max_attack_posterior: float  # max over non-benign classes

    def __post_init__(self):
        total = sum(self.posteriors.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"posteriors sum to {total}, expected 1")
        expected = 1.0 - self.posteriors.get(ClassLabel.Benign, 0.0)
        if abs(self.anomaly_score - expected) > 1e-12:
            raise ValueError("anomaly_score must equal 1 - P(Benign)")


def _prediction_from_posteriors(post: Dict[ClassLabel, float]) -> Prediction:
    # argmax with lowest-enum-index tie break
    best = max(post.items(), key=lambda kv: (kv[1], -kv[0].value))[0]
    s_max = max(
        (p for lbl, p in post.items() if lbl is not ClassLabel.Benign), default=0.0
    )
    return Prediction(
        label=best,
        posteriors=post,
        anomaly_score=1.0 - post.get(ClassLabel.Benign, 0.0),
        max_attack_posterior=s_max,
    )


# ---------------------------------------------------------------------------
# Decision tree
# ---------------------------------------------------------------------------


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_TreeNode"] = None
    right: Optional["_TreeNode"] = None
    posteriors: Optional[Dict[ClassLabel, float]] = None  # leaves only

    @property
    def is_leaf(self) -> bool:
        return self.posteriors is not None


def _leaf_posteriors(y: np.ndarray) -> Dict[ClassLabel, float]:
    post = {}
    n = len(y)
    for lbl in ClassLabel:
        c = int(np.sum(y == lbl.value))
        if c:
            post[lbl] = c / n
    return post


def _gini(y: np.ndarray) -> float:
    _, counts = np.unique(y, return_counts=True)
    p = counts / len(y)
    return 1.0 - float(np.sum(p * p))


def best_split(X: np.ndarray, y: np.ndarray) -> Optional[Tuple[int, float, float]]:
    """Exhaustive Gini-minimizing split: (feature, threshold, impurity).

    Candidate thresholds are midpoints between consecutive distinct values.
    Returns None when no split separates the data.
    """
    n = len(y)
    best = None
    for j in range(X.shape[1]):
        values = np.unique(X[:, j])
        if len(values) < 2:
            continue
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2.0
            mask = X[:, j] <= thr
            n_l = int(mask.sum())
            impurity = (n_l / n) * _gini(y[mask]) + ((n - n_l) / n) * _gini(y[~mask])
            key = (impurity, j, thr)
            if best is None or key < (best[2], best[0], best[1]):
                best = (j, thr, impurity)
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    depth: int,
    max_depth: int,
    min_leaf: int,
    feature_rng: Optional[np.random.Generator],
) -> _TreeNode:
    if depth >= max_depth or len(np.unique(y)) == 1 or len(y) < 2 * min_leaf:
        return _TreeNode(posteriors=_leaf_posteriors(y))
    if feature_rng is not None:
        m = max(1, int(round(math.sqrt(X.shape[1]))))
        cols = np.sort(feature_rng.choice(X.shape[1], size=m, replace=False))
        sub = best_split(X[:, cols], y)
        split = (int(cols[sub[0]]), sub[1], sub[2]) if sub else None
    else:
        split = best_split(X, y)
    if split is None:
        return _TreeNode(posteriors=_leaf_posteriors(y))
    j, thr, _ = split
    mask = X[:, j] <= thr
    if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
        return _TreeNode(posteriors=_leaf_posteriors(y))
    return _TreeNode(
        feature=j,
        threshold=thr,
        left=_grow_tree(X[mask], y[mask], depth + 1, max_depth, min_leaf, feature_rng),
        right=_grow_tree(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, feature_rng),
    )


def _tree_posteriors(node: _TreeNode, x: np.ndarray) -> Dict[ClassLabel, float]:
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return dict(node.posteriors)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass
class ClassifierModel:
    """Trained, immutable classifier.

    External models carry only a name; their posteriors are injected per
    prediction call via ``posterior_source`` (used by the replay bench for
    CNN/LSTM-style score streams).
    """

    kind: ModelKind
    name: str
    dimension: int = N_FEATURES
    tree: Optional[_TreeNode] = None
    trees: Optional[List[_TreeNode]] = None
    exemplars: Optional[np.ndarray] = None
    exemplar_labels: Optional[np.ndarray] = None
    k: int = 1
    posterior_source: Optional[Callable[[], Dict[ClassLabel, float]]] = None


def _as_matrix(data: Sequence[Tuple[FeatureVector, ClassLabel]]):
    X = np.stack([v.array for v, _ in data])
    y = np.array([lbl.value for _, lbl in data])
    return X, y


def train_decision_tree(
    data: Sequence[Tuple[FeatureVector, ClassLabel]],
    max_depth: int = 8,
    min_leaf: int = 1,
    name: str = "DT",
) -> ClassifierModel:
    """CART-style binary tree with Gini impurity splits."""
    X, y = _as_matrix(data)
    if len(np.unique(y)) < 2:
        raise DegenerateData("training data contains a single class")
    tree = _grow_tree(X, y, 0, max_depth, min_leaf, None)
    return ClassifierModel(
        kind=ModelKind.DecisionTree, name=name, dimension=X.shape[1], tree=tree
    )


def train_random_forest(
    data: Sequence[Tuple[FeatureVector, ClassLabel]],
    tree_count: int = 10,
    max_depth: int = 8,
    min_leaf: int = 1,
    seed: int = 0,
    bootstrap: bool = True,
    feature_subsample: bool = True,
    name: str = "RF",
) -> ClassifierModel:
    """Bootstrap ensemble with sqrt-feature subsampling per split."""
    X, y = _as_matrix(data)
    if len(np.unique(y)) < 2:
        raise DegenerateData("training data contains a single class")
    if tree_count < 1:
        raise ValueError("tree_count must be >= 1")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(tree_count):
        if bootstrap:
            idx = rng.integers(0, len(y), size=len(y))
            Xb, yb = X[idx], y[idx]
        else:
            Xb, yb = X, y
        trees.append(
            _grow_tree(Xb, yb, 0, max_depth, min_leaf, rng if feature_subsample else None)
        )
    return ClassifierModel(
        kind=ModelKind.RandomForest, name=name, dimension=X.shape[1], trees=trees
    )


def make_knn(
    data: Sequence[Tuple[FeatureVector, ClassLabel]], k: int = 5, name: str = "KNN"
) -> ClassifierModel:
    """Store exemplars for lazy k-nearest-neighbor classification."""
    if not data:
        raise EmptyExemplars("no exemplars")
    if not 1 <= k <= len(data):
        raise ValueError("k must satisfy 1 <= k <= exemplar count")
    X, y = _as_matrix(data)
    return ClassifierModel(
        kind=ModelKind.KNearest,
        name=name,
        dimension=X.shape[1],
        exemplars=X,
        exemplar_labels=y,
        k=k,
    )


def make_external(name: str, posterior_source=None) -> ClassifierModel:
    """External score source (e.g. replayed CNN/LSTM posteriors)."""
    return ClassifierModel(
        kind=ModelKind.External, name=name, posterior_source=posterior_source
    )


def _knn_posteriors(model: ClassifierModel, x: np.ndarray) -> Dict[ClassLabel, float]:
    d = np.linalg.norm(model.exemplars - x, axis=1)
    # stable sort keeps lower exemplar index first on distance ties
    order = np.argsort(d, kind="stable")[: model.k]
    votes = model.exemplar_labels[order]
    post = {}
    for lbl in ClassLabel:
        c = int(np.sum(votes == lbl.value))
        if c:
            post[lbl] = c / model.k
    return post


def predict_knn(
    exemplars: Sequence[Tuple[FeatureVector, ClassLabel]], k: int, x: FeatureVector
) -> Prediction:
    """One-shot KNN prediction over an exemplar list."""
    return predict(make_knn(exemplars, k=k), x)


def predict(model: ClassifierModel, x: FeatureVector) -> Prediction:
    """Run one model on a normalized feature vector."""
    if model.kind is ModelKind.DecisionTree:
        if model.tree is None:
            raise UntrainedModel(model.name)
        post = _tree_posteriors(model.tree, x.array)
    elif model.kind is ModelKind.RandomForest:
        if not model.trees:
            raise UntrainedModel(model.name)
        post = {}
        for tree in model.trees:
            for lbl, p in _tree_posteriors(tree, x.array).items():
                post[lbl] = post.get(lbl, 0.0) + p / len(model.trees)
    elif model.kind is ModelKind.KNearest:
        if model.exemplars is None:
            raise UntrainedModel(model.name)
        post = _knn_posteriors(model, x.array)
    elif model.kind is ModelKind.External:
        if model.posterior_source is None:
            raise UntrainedModel(model.name)
        post = dict(model.posterior_source())
    else:  # pragma: no cover
        raise UntrainedModel(model.name)
    return _prediction_from_posteriors(post)


# ---------------------------------------------------------------------------
# Calibration, alerting, aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarginModel:
    """Optional sigmoid calibration over a linear margin."""

    weights: tuple
    bias: float

    def __post_init__(self):
        if not all(math.isfinite(w) for w in self.weights) or not math.isfinite(self.bias):
            raise ValueError("weights and bias must be finite")


def score_margin(m: MarginModel, x: FeatureVector) -> float:
    z = float(np.dot(np.asarray(m.weights), x.array)) + m.bias
    return 1.0 / (1.0 + math.exp(-z))


def likelihood_ratio_alert(posteriors: Dict[ClassLabel, float], eta: float) -> bool:
    """Posterior odds against Benign; alert when the ratio reaches eta."""
    p_benign = max(posteriors.get(ClassLabel.Benign, 0.0), 1e-12)
    ratio = (1.0 - posteriors.get(ClassLabel.Benign, 0.0)) / p_benign
    return ratio >= eta


def aggregate_scores(scores: Sequence[float]) -> float:
    """Unweighted mean of per-model anomaly scores (unrounded)."""
    if not scores:
        raise EmptyList("no scores to aggregate")
    return float(sum(scores)) / len(scores)


def consensus_count(labels: Sequence[ClassLabel]) -> Tuple[int, ClassLabel]:
    """(count, label) of the modal prediction; enum-order tie break."""
    counts = {}
    for lbl in labels:
        counts[lbl] = counts.get(lbl, 0) + 1
    modal = max(counts.items(), key=lambda kv: (kv[1], -kv[0].value))[0]
    return counts[modal], modal


# ---------------------------------------------------------------------------
# Serialization: versioned self-describing JSON document
# ---------------------------------------------------------------------------

FORMAT_NAME = "edgeids-model"
FORMAT_VERSION = 1


def _node_to_obj(node: _TreeNode):
    if node.is_leaf:
        return {"leaf": {lbl.name: p for lbl, p in node.posteriors.items()}}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_obj(node.left),
        "right": _node_to_obj(node.right),
    }


def _node_from_obj(obj) -> _TreeNode:
    if "leaf" in obj:
        return _TreeNode(posteriors={ClassLabel[k]: v for k, v in obj["leaf"].items()})
    return _TreeNode(
        feature=obj["feature"],
        threshold=obj["threshold"],
        left=_node_from_obj(obj["left"]),
        right=_node_from_obj(obj["right"]),
    )


def save_model(model: ClassifierModel, path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": model.kind.value,
        "name": model.name,
        "dimension": model.dimension,
    }
    if model.kind is ModelKind.DecisionTree:
        doc["tree"] = _node_to_obj(model.tree)
    elif model.kind is ModelKind.RandomForest:
        doc["trees"] = [_node_to_obj(t) for t in model.trees]
    elif model.kind is ModelKind.KNearest:
        doc["k"] = model.k
        doc["exemplars"] = model.exemplars.tolist()
        doc["exemplar_labels"] = model.exemplar_labels.tolist()
    elif model.kind is ModelKind.External:
        pass  # identifier only
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> ClassifierModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model file: {path}")
    kind = ModelKind(doc["kind"])
    model = ClassifierModel(kind=kind, name=doc["name"], dimension=doc["dimension"])
    if kind is ModelKind.DecisionTree:
        model.tree = _node_from_obj(doc["tree"])
    elif kind is ModelKind.RandomForest:
        model.trees = [_node_from_obj(t) for t in doc["trees"]]
    elif kind is ModelKind.KNearest:
        model.k = doc["k"]
        model.exemplars = np.asarray(doc["exemplars"], dtype=float)
        model.exemplar_labels = np.asarray(doc["exemplar_labels"], dtype=int)
    return model
