"""Gradient-boosted decision trees with a logistic link, from scratch.

Binary classifier over the 35-feature forensic vector. Each boosting
round fits a depth-limited regression tree to the gradient/hessian of the
logistic loss; split quality is the squared-gradient (Newton) gain
GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2), found by exact greedy search
over every distinct feature value. Leaf values are -G/(H+l2) with the
learning rate already baked in, so prediction is simply
sigmoid(base_score + sum of leaf values).

Deterministic: ties in split gain break toward the lowest feature index,
then the lowest threshold, and all subsampling randomness flows from the
seed. The same data, hyperparameters, and seed reproduce the same model
file byte for byte.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES, FeatureVector, feature_schema_hash

MODEL_FORMAT = "becs-gbdt/1"
N_FEATURES = len(FEATURE_NAMES)


class ModelError(Exception):
    """Model file is unreadable, malformed, or violates an invariant."""


class SchemaMismatchError(ModelError):
    """Feature vector schema does not match the model's schema hash."""


class SchemaMismatchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    iterations: int = 545
    depth: int = 8
    learning_rate: float = 0.0780
    l2_leaf_reg: float = 1.29
    subsample: float = 1.0
    seed: int = 0

    def validate(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_leaf_reg < 0:
            raise ValueError("l2_leaf_reg must be >= 0")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")


class Tree:
    """One regression tree as parallel node arrays (node 0 is the root).

    feature[i] == -1 marks a leaf whose additive log-odds contribution
    (learning rate included) is value[i]; internal nodes route x to
    left on x[feature] <= threshold, right otherwise.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "_np")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self._np = None

    def predict_one(self, x) -> float:
        feature = self.feature
        i = 0
        f = feature[0]
        while f >= 0:
            i = self.left[i] if x[f] <= self.threshold[i] else self.right[i]
            f = feature[i]
        return self.value[i]

    def _arrays(self):
        if self._np is None:
            self._np = (
                np.asarray(self.feature, dtype=np.intp),
                np.asarray(self.threshold, dtype=np.float64),
                np.asarray(self.left, dtype=np.intp),
                np.asarray(self.right, dtype=np.intp),
                np.asarray(self.value, dtype=np.float64),
            )
        return self._np

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        f, t, l, r, v = self._arrays()
        n = X.shape[0]
        idx = np.zeros(n, dtype=np.intp)
        rows = np.arange(n)
        while True:
            nf = f[idx]
            internal = nf >= 0
            if not internal.any():
                break
            xi = X[rows, np.where(internal, nf, 0)]
            nxt = np.where(xi <= t[idx], l[idx], r[idx])
            idx = np.where(internal, nxt, idx)
        return v[idx]

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class TreeEnsembleModel:
    base_score: float
    trees: list[Tree]
    hyperparameters: Hyperparameters
    schema_hash: str
    loss_history: list[float] = field(default_factory=list, repr=False)


def _sigmoid_vec(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def _logloss(y: np.ndarray, p: np.ndarray) -> float:
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _best_split(Xn: np.ndarray, g: np.ndarray, h: np.ndarray, l2: float):
    """Exact greedy split over every distinct value of every feature.

    Returns (feature, threshold) with the highest gain, or None when no
    split is strictly positive. The gain matrix is laid out feature-major
    before the argmax so equal gains resolve to the lowest feature index,
    then the lowest threshold.
    """
    m = Xn.shape[0]
    if m < 2:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    gs = np.cumsum(g[order], axis=0)
    hs = np.cumsum(h[order], axis=0)
    gtot = gs[-1]
    htot = hs[-1]
    parent = gtot * gtot / (htot + l2)

    valid = xs[:-1] != xs[1:]
    if not valid.any():
        return None
    GL = gs[:-1]
    HL = hs[:-1]
    GR = gtot - GL
    HR = htot - HL
    gains = GL * GL / (HL + l2) + GR * GR / (HR + l2) - parent
    gains[~valid] = -np.inf

    flat = np.argmax(gains.T)          # feature-major: deterministic tie-break
    best = gains.T.flat[flat]
    if not best > 0.0:
        return None
    f, pos = divmod(int(flat), m - 1)
    return f, float(xs[pos, f])


def _grow_tree(X, g, h, depth_limit, l2, lr) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def add_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        nid = add_node()
        split = None
        if depth < depth_limit and rows.size >= 2:
            split = _best_split(X[rows], g[rows], h[rows], l2)
        if split is None:
            gsum = float(g[rows].sum())
            hsum = float(h[rows].sum())
            value[nid] = -gsum / (hsum + l2) * lr
            return nid
        f, thr = split
        feature[nid] = f
        threshold[nid] = thr
        mask = X[rows, f] <= thr
        left[nid] = grow(rows[mask], depth + 1)
        right[nid] = grow(rows[~mask], depth + 1)
        return nid

    grow(np.arange(X.shape[0]), 0)
    return Tree(feature, threshold, left, right, value)


def _to_matrix(data) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([fv.as_tuple() for fv, _ in data], dtype=np.float64)
    y = np.array([label for _, label in data], dtype=np.float64)
    return X, y


def train(data, hp: Hyperparameters = Hyperparameters()) -> TreeEnsembleModel:
    """Fit the boosted ensemble on (FeatureVector, label in {0,1}) pairs.

    base_score is the log-odds of the positive prevalence; each round
    fits one tree to the current gradients and appends the mean training
    logistic loss to loss_history. Raises ValueError on empty or
    single-class data.
    """
    hp.validate()
    if not data:
        raise ValueError("training data is empty")
    X, y = _to_matrix(data)
    n = X.shape[0]
    pos = float(y.sum())
    if pos == 0 or pos == n:
        raise ValueError("training data must contain both classes")

    pbar = pos / n
    base = math.log(pbar / (1.0 - pbar))
    z = np.full(n, base, dtype=np.float64)
    rng = np.random.default_rng(hp.seed)
    trees: list[Tree] = []
    losses: list[float] = []

    for _ in range(hp.iterations):
        p = _sigmoid_vec(z)
        g = p - y
        h = p * (1.0 - p)
        if hp.subsample < 1.0:
            m = max(2, int(hp.subsample * n))
            rows = np.sort(rng.choice(n, size=m, replace=False))
            tree = _grow_tree(X[rows], g[rows], h[rows],
                              hp.depth, hp.l2_leaf_reg, hp.learning_rate)
        else:
            tree = _grow_tree(X, g, h, hp.depth, hp.l2_leaf_reg, hp.learning_rate)
        z += tree.predict_batch(X)
        trees.append(tree)
        losses.append(_logloss(y, _sigmoid_vec(z)))

    return TreeEnsembleModel(
        base_score=base,
        trees=trees,
        hyperparameters=hp,
        schema_hash=feature_schema_hash(),
        loss_history=losses,
    )


def _check_schema(model: TreeEnsembleModel):
    if model.schema_hash != feature_schema_hash():
        raise SchemaMismatchError(
            f"model schema hash {model.schema_hash} does not match the "
            f"current feature schema {feature_schema_hash()}"
        )


def predict_proba(model: TreeEnsembleModel, fv: FeatureVector) -> float:
    """Fraud probability, strictly inside (0, 1)."""
    _check_schema(model)
    x = fv.as_tuple()
    z = model.base_score
    for tree in model.trees:
        z += tree.predict_one(x)
    if z > 35.0:
        z = 35.0
    elif z < -35.0:
        z = -35.0
    return 1.0 / (1.0 + math.exp(-z))


def predict_proba_batch(model: TreeEnsembleModel, X) -> np.ndarray:
    """Vectorized predict_proba over a matrix or list of FeatureVectors."""
    _check_schema(model)
    if not isinstance(X, np.ndarray):
        X = np.array([fv.as_tuple() for fv in X], dtype=np.float64)
    z = np.full(X.shape[0], model.base_score, dtype=np.float64)
    for tree in model.trees:
        z += tree.predict_batch(X)
    return _sigmoid_vec(z)


def save_model(model: TreeEnsembleModel, path: str | Path):
    """Write the versioned JSON model file (bit-exact round trip)."""
    doc = {
        "format": MODEL_FORMAT,
        "schema_hash": model.schema_hash,
        "hyperparameters": asdict(model.hyperparameters),
        "base_score": model.base_score,
        "trees": [
            {
                "feature": t.feature,
                "threshold": t.threshold,
                "left": t.left,
                "right": t.right,
                "value": t.value,
            }
            for t in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def _validate_tree(doc: dict, depth_limit: int, index: int) -> Tree:
    keys = ("feature", "threshold", "left", "right", "value")
    if not all(k in doc for k in keys):
        raise ModelError(f"tree {index}: missing node arrays")
    feature = [int(v) for v in doc["feature"]]
    threshold = [float(v) for v in doc["threshold"]]
    left = [int(v) for v in doc["left"]]
    right = [int(v) for v in doc["right"]]
    value = [float(v) for v in doc["value"]]
    n = len(feature)
    if not (len(threshold) == len(left) == len(right) == len(value) == n) or n == 0:
        raise ModelError(f"tree {index}: inconsistent node arrays")
    for i, f in enumerate(feature):
        if f >= N_FEATURES:
            raise ModelError(
                f"tree {index}: node {i} feature index {f} out of range "
                f"(schema has {N_FEATURES} features)")
        if f >= 0 and not (0 <= left[i] < n and 0 <= right[i] < n):
            raise ModelError(f"tree {index}: node {i} child index out of range")
    tree = Tree(feature, threshold, left, right, value)
    if tree.depth() > depth_limit:
        raise ModelError(f"tree {index}: depth {tree.depth()} exceeds "
                         f"hyperparameter depth {depth_limit}")
    return tree


def load_model(path: str | Path) -> TreeEnsembleModel:
    """Load and validate a model file.

    A schema-hash mismatch is surfaced as a SchemaMismatchWarning here
    (the model may legitimately target another vector layout); calling
    predict on it then raises.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelError(f"{path}: not a {MODEL_FORMAT} model file")
    try:
        hp = Hyperparameters(**doc["hyperparameters"])
        hp.validate()
        base = float(doc["base_score"])
        schema = str(doc["schema_hash"])
        trees = [_validate_tree(t, hp.depth, i)
                 for i, t in enumerate(doc["trees"])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: malformed model file: {exc}") from exc
    if schema != feature_schema_hash():
        warnings.warn(
            f"{path}: model schema hash {schema} differs from the current "
            f"feature schema; predictions will be refused",
            SchemaMismatchWarning,
        )
    return TreeEnsembleModel(base_score=base, trees=trees,
                             hyperparameters=hp, schema_hash=schema)


def permutation_importance(model: TreeEnsembleModel, data, k: int = 5,
                           seed: int = 0, threshold: float = 0.5):
    """Mean decrease in accuracy when one feature column is permuted.

    Returns [(feature_name, importance), ...] sorted by importance,
    descending; k permutations per feature, seeded.
    """
    if not data:
        raise ValueError("importance data is empty")
    X, y = _to_matrix(data)
    rng = np.random.default_rng(seed)

    def accuracy(mat):
        return float(np.mean((predict_proba_batch(model, mat) > threshold) == y))

    baseline = accuracy(X)
    results = []
    for j, name in enumerate(FEATURE_NAMES):
        accs = []
        for _ in range(k):
            perm = X.copy()
            perm[:, j] = perm[rng.permutation(X.shape[0]), j]
            accs.append(accuracy(perm))
        results.append((name, baseline - float(np.mean(accs))))
    results.sort(key=lambda item: -item[1])
    return results
