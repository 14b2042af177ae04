"""Department routing classifiers: decision tree, random forest, gradient
tree boosting, and a linear one-vs-rest SVM, all over count feature vectors.

Determinism contracts: tree split ties resolve to the lowest feature index
then the lowest threshold (compared exactly, so training is independent of
row order), forests derive one seed per tree, and prediction tie-breaks go
to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import NumericError


@dataclass
class TreeNode:
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None   # leaf class counts (classification)
    value: float | None = None          # leaf value (regression)

    def is_leaf(self) -> bool:
        return self.feature is None


def _exact_gt(num_a: int, den_a: int, num_b: int, den_b: int) -> bool:
    """a/b > c/d for non-negative integer fractions with positive denominators."""
    return num_a * den_b > num_b * den_a


def _best_split_gini(X, onehot, idx, min_leaf, features):
    """Best Gini split over `features` for the rows in `idx`.

    Maximizes sum(left_class_counts^2)/n_left + (same for right), which
    orders splits identically to minimizing weighted child Gini impurity.
    Near-ties are re-compared with exact integer arithmetic so the winner
    matches an exhaustive search bit for bit.
    """
    n = idx.size
    parent_counts = onehot[idx].sum(axis=0)
    parent_num = int((parent_counts.astype(object) ** 2).sum())
    best = None  # (num, den, feature, threshold)
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        cum = np.cumsum(onehot[idx][order], axis=0)
        nl = np.arange(1, n)
        boundary = sv[:-1] < sv[1:]
        sized = (nl >= min_leaf) & ((n - nl) >= min_leaf)
        valid = boundary & sized
        if not valid.any():
            continue
        left_sq = (cum[:-1].astype(np.float64) ** 2).sum(axis=1)
        right_counts = parent_counts[None, :] - cum[:-1]
        right_sq = (right_counts.astype(np.float64) ** 2).sum(axis=1)
        q = np.where(valid, left_sq / nl + right_sq / (n - nl), -np.inf)
        qmax = q.max()
        window = np.nonzero(q >= qmax - 1e-9 * max(1.0, abs(qmax)))[0]
        for b in window:
            n_left = int(nl[b])
            n_right = n - n_left
            left_c = cum[b]
            s_left = int((left_c.astype(object) ** 2).sum())
            s_right = int(((parent_counts - left_c).astype(object) ** 2).sum())
            num = s_left * n_right + s_right * n_left
            den = n_left * n_right
            threshold = float(sv[b] + (sv[b + 1] - sv[b]) / 2.0)
            if best is None or _exact_gt(num, den, best[0], best[1]) or (
                not _exact_gt(best[0], best[1], num, den)
                and (f, threshold) < (best[2], best[3])
            ):
                best = (num, den, f, threshold)
    if best is None:
        return None
    # no split unless it strictly reduces impurity
    if not _exact_gt(best[0], best[1], parent_num, n):
        return None
    return best[2], best[3]


def _grow_gini(X, onehot, idx, depth, max_depth, min_leaf, rng, max_features):
    counts = onehot[idx].sum(axis=0)
    node = TreeNode(counts=counts)
    if depth >= max_depth or idx.size < 2 * min_leaf or (counts > 0).sum() <= 1:
        return node
    n_features = X.shape[1]
    if rng is not None and max_features < n_features:
        features = np.sort(rng.choice(n_features, size=max_features, replace=False))
    else:
        features = np.arange(n_features)
    split = _best_split_gini(X, onehot, idx, min_leaf, features)
    if split is None:
        return node
    f, thr = split
    mask = X[idx, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow_gini(X, onehot, idx[mask], depth + 1, max_depth, min_leaf, rng, max_features)
    node.right = _grow_gini(X, onehot, idx[~mask], depth + 1, max_depth, min_leaf, rng, max_features)
    return node


def _leaf_counts(root: TreeNode, x) -> np.ndarray:
    node = root
    while not node.is_leaf():
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.counts


@dataclass
class DecisionTreeModel:
    root: TreeNode
    n_classes: int
    n_features: int
    max_depth: int
    min_leaf: int

    kind = "decision_tree"


def train_decision_tree(X, y, max_depth=20, min_leaf=2, n_classes=None) -> DecisionTreeModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("need matching non-empty X and y")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    onehot = np.zeros((X.shape[0], n_classes), dtype=np.int64)
    onehot[np.arange(X.shape[0]), y] = 1
    root = _grow_gini(X, onehot, np.arange(X.shape[0]), 0, max_depth, min_leaf, None, X.shape[1])
    return DecisionTreeModel(
        root=root, n_classes=n_classes, n_features=X.shape[1],
        max_depth=max_depth, min_leaf=min_leaf,
    )


@dataclass
class ForestModel:
    trees: list
    n_classes: int
    n_features: int
    n_trees: int
    seed: int
    max_depth: int
    min_leaf: int
    max_features: int
    bootstrap: bool

    kind = "random_forest"


def train_random_forest(
    X, y, n_trees=100, max_depth=20, min_leaf=2, max_features="sqrt",
    bootstrap=True, seed=0, n_classes=None,
) -> ForestModel:
    """Bagged Gini trees with per-split feature subsampling.

    Every tree gets its own spawned seed, so results do not depend on
    whether trees are grown sequentially or in parallel.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n, n_feat = X.shape
    if max_features == "sqrt":
        m_features = max(1, int(np.sqrt(n_feat)))
    else:
        m_features = min(int(max_features), n_feat)
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), y] = 1
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(seeds[t])
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            _grow_gini(X, onehot, np.asarray(idx), 0, max_depth, min_leaf, rng, m_features)
        )
    return ForestModel(
        trees=trees, n_classes=n_classes, n_features=n_feat, n_trees=n_trees,
        seed=seed, max_depth=max_depth, min_leaf=min_leaf,
        max_features=m_features, bootstrap=bootstrap,
    )


def _best_split_mse(vals, r, min_leaf):
    """Best threshold for one feature by sum-of-squares reduction; None if none."""
    n = vals.size
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    cum = np.cumsum(r[order])
    nl = np.arange(1, n)
    boundary = sv[:-1] < sv[1:]
    sized = (nl >= min_leaf) & ((n - nl) >= min_leaf)
    valid = boundary & sized
    if not valid.any():
        return None
    total = cum[-1]
    q = np.where(
        valid,
        cum[:-1] ** 2 / nl + (total - cum[:-1]) ** 2 / (n - nl),
        -np.inf,
    )
    b = int(np.argmax(q))
    base = total ** 2 / n
    if q[b] <= base + 1e-12 * max(1.0, abs(base)):
        return None
    return float(q[b]), float(sv[b] + (sv[b + 1] - sv[b]) / 2.0)


def _grow_mse(X, r, idx, depth, max_depth, min_leaf, leaf_fn):
    node = TreeNode()
    if depth >= max_depth or idx.size < 2 * min_leaf:
        node.value = leaf_fn(idx)
        return node
    best = None
    for f in range(X.shape[1]):
        found = _best_split_mse(X[idx, f], r[idx], min_leaf)
        if found is None:
            continue
        q, thr = found
        if best is None or q > best[0] + 1e-12 * max(1.0, abs(q)):
            best = (q, f, thr)
    if best is None:
        node.value = leaf_fn(idx)
        return node
    _q, f, thr = best
    mask = X[idx, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow_mse(X, r, idx[mask], depth + 1, max_depth, min_leaf, leaf_fn)
    node.right = _grow_mse(X, r, idx[~mask], depth + 1, max_depth, min_leaf, leaf_fn)
    return node


def _leaf_value(root: TreeNode, x) -> float:
    node = root
    while not node.is_leaf():
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _tree_values(root: TreeNode, X) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf():
            out[idx] = node.value
            continue
        mask = X[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(probs[np.arange(y.size), y], 1e-300, None)
    return float(-np.log(p).mean())


@dataclass
class GtbModel:
    init: np.ndarray
    stages: list                      # (scale, [tree per class])
    n_classes: int
    n_features: int
    learning_rate: float
    max_depth: int
    train_loss: list = field(default_factory=list)

    kind = "gtb"


def train_gtb(
    X, y, n_stages=200, learning_rate=0.1, max_depth=3, seed=0,
    min_leaf=1, n_classes=None,
) -> GtbModel:
    """Multiclass gradient tree boosting on the softmax cross-entropy.

    Each stage fits one regression tree per class to the residual
    (one-hot minus probability) with Newton-style leaf values.  A stage
    whose full step would raise the training loss is geometrically
    backed off, so the recorded loss never increases.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if n_stages < 0:
        raise ValueError("n_stages must be >= 0")
    if not np.isfinite(X).all():
        raise NumericError("boosting input matrix contains non-finite values")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n = X.shape[0]
    priors = np.bincount(y, minlength=n_classes).astype(np.float64)
    priors = np.clip(priors / n, 1e-12, None)
    init = np.log(priors)
    logits = np.tile(init, (n, 1))
    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), y] = 1.0

    model = GtbModel(
        init=init, stages=[], n_classes=n_classes, n_features=X.shape[1],
        learning_rate=learning_rate, max_depth=max_depth,
    )
    probs = _softmax(logits)
    loss = _cross_entropy(probs, y)
    model.train_loss.append(loss)
    k_factor = (n_classes - 1) / n_classes if n_classes > 1 else 1.0
    for _stage in range(n_stages):
        residual = onehot - probs
        if not np.isfinite(residual).all():
            raise NumericError(
                "non-finite boosting residuals; lower learning_rate or check inputs"
            )
        stage_trees = []
        updates = np.zeros_like(logits)
        for k in range(n_classes):
            r = residual[:, k]

            def leaf_fn(idx, r=r):
                num = r[idx].sum()
                den = (np.abs(r[idx]) * (1.0 - np.abs(r[idx]))).sum()
                if den < 1e-150:
                    return 0.0
                return float(np.clip(k_factor * num / den, -10.0, 10.0))

            tree = _grow_mse(X, r, np.arange(n), 0, max_depth, min_leaf, leaf_fn)
            stage_trees.append(tree)
            updates[:, k] = _tree_values(tree, X)
        scale = learning_rate
        for _ in range(40):
            new_logits = logits + scale * updates
            new_loss = _cross_entropy(_softmax(new_logits), y)
            if new_loss <= loss:
                break
            scale *= 0.5
        else:
            scale = 0.0
            new_logits = logits
            new_loss = loss
        logits = new_logits
        loss = new_loss
        probs = _softmax(logits)
        model.stages.append((scale, stage_trees))
        model.train_loss.append(loss)
    return model


def _gtb_logits(model: GtbModel, X) -> np.ndarray:
    logits = np.tile(model.init, (X.shape[0], 1))
    for scale, trees in model.stages:
        if scale == 0.0:
            continue
        for k, tree in enumerate(trees):
            logits[:, k] += scale * _tree_values(tree, X)
    return logits


@dataclass
class SvmModel:
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    C: float
    n_classes: int

    kind = "svm"


def train_svm(X, y, C=1.0, epochs=50, lr=0.1, seed=0, n_classes=None) -> SvmModel:
    """One-vs-rest linear machines by full-batch subgradient descent.

    Features are standardized internally with training-set statistics;
    the objective per class is ||w||^2/2 + C * mean hinge loss.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std
    n = X.shape[0]
    Y = -np.ones((n, n_classes))
    Y[np.arange(n), y] = 1.0
    W = np.zeros((n_classes, X.shape[1]))
    b = np.zeros(n_classes)
    for t in range(epochs):
        margins = Xs @ W.T + b
        viol = (Y * margins) < 1.0
        coeff = Y * viol
        gW = W - (C / n) * (coeff.T @ Xs)
        gb = -(C / n) * coeff.sum(axis=0)
        step = lr / (1.0 + 0.01 * t)
        W -= step * gW
        b -= step * gb
    return SvmModel(W=W, b=b, mean=mean, std=std, C=C, n_classes=n_classes)


def predict_batch(model, X) -> tuple[np.ndarray, np.ndarray]:
    """Uniform prediction surface: (argmax labels, probability-like scores).

    Tree and forest scores are leaf/vote proportions, boosting and SVM
    scores are softmax over logits/margins; rows always sum to 1.
    """
    X = np.asarray(X, dtype=np.float64)
    expected = _n_features(model)
    if X.ndim != 2 or X.shape[1] != expected:
        raise ValueError(f"feature matrix has shape {X.shape}, expected (*, {expected})")
    if isinstance(model, DecisionTreeModel):
        scores = np.empty((X.shape[0], model.n_classes))
        for i in range(X.shape[0]):
            counts = _leaf_counts(model.root, X[i]).astype(np.float64)
            scores[i] = counts / counts.sum()
        labels = scores.argmax(axis=1)
        return labels, scores
    if isinstance(model, ForestModel):
        votes = np.zeros((X.shape[0], model.n_classes))
        mass = np.zeros((X.shape[0], model.n_classes))
        for tree in model.trees:
            for i in range(X.shape[0]):
                counts = _leaf_counts(tree, X[i]).astype(np.float64)
                votes[i, int(counts.argmax())] += 1.0
                mass[i] += counts / counts.sum()
        scores = votes / model.n_trees
        # majority vote; ties resolve by aggregated leaf mass then lowest index
        labels = np.empty(X.shape[0], dtype=np.int64)
        for i in range(X.shape[0]):
            top = votes[i].max()
            tied = np.nonzero(votes[i] == top)[0]
            if tied.size == 1:
                labels[i] = tied[0]
            else:
                best_mass = mass[i][tied].max()
                labels[i] = tied[mass[i][tied] >= best_mass][0]
        return labels, scores
    if isinstance(model, GtbModel):
        scores = _softmax(_gtb_logits(model, X))
        return scores.argmax(axis=1), scores
    if isinstance(model, SvmModel):
        Xs = (X - model.mean) / model.std
        margins = Xs @ model.W.T + model.b
        scores = _softmax(margins)
        return margins.argmax(axis=1), scores
    raise TypeError(f"unknown model type {type(model)!r}")


def predict(model, x) -> tuple[int, np.ndarray]:
    """Single-vector form of predict_batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d feature vector, got shape {x.shape}")
    labels, scores = predict_batch(model, x[None, :])
    return int(labels[0]), scores[0]


def _n_features(model) -> int:
    if isinstance(model, SvmModel):
        return model.W.shape[1]
    return model.n_features


# --- serialization -----------------------------------------------------------

def _flatten_tree(root: TreeNode, n_classes: int):
    """Preorder arrays: feature, threshold, left, right, leaf payload."""
    nodes: list[TreeNode] = []

    def walk(node):
        nodes.append(node)
        if not node.is_leaf():
            walk(node.left)
            walk(node.right)

    walk(root)
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.zeros(n, dtype=np.float64)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    payload = np.zeros((n, max(n_classes, 1)), dtype=np.float64)
    index = {id(node): i for i, node in enumerate(nodes)}
    for i, node in enumerate(nodes):
        if node.is_leaf():
            if node.counts is not None:
                payload[i, :n_classes] = node.counts
            else:
                payload[i, 0] = node.value
        else:
            feature[i] = node.feature
            threshold[i] = node.threshold
            left[i] = index[id(node.left)]
            right[i] = index[id(node.right)]
    return feature, threshold, left, right, payload


def _unflatten_tree(feature, threshold, left, right, payload, regression: bool, n_classes: int):
    nodes = [TreeNode() for _ in range(feature.shape[0])]
    for i in range(feature.shape[0]):
        if feature[i] >= 0:
            nodes[i].feature = int(feature[i])
            nodes[i].threshold = float(threshold[i])
            nodes[i].left = nodes[int(left[i])]
            nodes[i].right = nodes[int(right[i])]
        elif regression:
            nodes[i].value = float(payload[i, 0])
        else:
            nodes[i].counts = payload[i, :n_classes].astype(np.int64)
    return nodes[0]


def model_payload(model) -> tuple[dict, dict]:
    """(metadata, named arrays) for the model container file."""
    if isinstance(model, DecisionTreeModel):
        f, t, l, r, p = _flatten_tree(model.root, model.n_classes)
        meta = {
            "kind": model.kind, "n_classes": model.n_classes,
            "n_features": model.n_features,
            "max_depth": model.max_depth, "min_leaf": model.min_leaf,
        }
        return meta, {"feature": f, "threshold": t, "left": l, "right": r, "payload": p}
    if isinstance(model, ForestModel):
        meta = {
            "kind": model.kind, "n_classes": model.n_classes,
            "n_features": model.n_features,
            "n_trees": model.n_trees, "seed": model.seed,
            "max_depth": model.max_depth, "min_leaf": model.min_leaf,
            "max_features": model.max_features, "bootstrap": model.bootstrap,
        }
        arrays = {}
        for i, tree in enumerate(model.trees):
            f, t, l, r, p = _flatten_tree(tree, model.n_classes)
            arrays.update({
                f"tree{i}_feature": f, f"tree{i}_threshold": t,
                f"tree{i}_left": l, f"tree{i}_right": r, f"tree{i}_payload": p,
            })
        return meta, arrays
    if isinstance(model, GtbModel):
        meta = {
            "kind": model.kind, "n_classes": model.n_classes,
            "n_features": model.n_features,
            "learning_rate": model.learning_rate, "max_depth": model.max_depth,
            "n_stages": len(model.stages),
        }
        arrays = {
            "init": model.init,
            "scales": np.array([s for s, _ in model.stages], dtype=np.float64),
            "train_loss": np.array(model.train_loss, dtype=np.float64),
        }
        for si, (_scale, trees) in enumerate(model.stages):
            for k, tree in enumerate(trees):
                f, t, l, r, p = _flatten_tree(tree, 1)
                prefix = f"s{si}c{k}_"
                arrays.update({
                    prefix + "feature": f, prefix + "threshold": t,
                    prefix + "left": l, prefix + "right": r, prefix + "payload": p,
                })
        return meta, arrays
    if isinstance(model, SvmModel):
        meta = {"kind": model.kind, "n_classes": model.n_classes, "C": model.C}
        return meta, {
            "W": model.W, "b": model.b, "mean": model.mean, "std": model.std,
        }
    raise TypeError(f"unknown model type {type(model)!r}")


def model_from_payload(meta: dict, arrays: dict):
    kind = meta["kind"]
    if kind == "decision_tree":
        root = _unflatten_tree(
            arrays["feature"], arrays["threshold"], arrays["left"],
            arrays["right"], arrays["payload"], False, meta["n_classes"],
        )
        return DecisionTreeModel(
            root=root, n_classes=meta["n_classes"], n_features=meta["n_features"],
            max_depth=meta["max_depth"], min_leaf=meta["min_leaf"],
        )
    if kind == "random_forest":
        trees = [
            _unflatten_tree(
                arrays[f"tree{i}_feature"], arrays[f"tree{i}_threshold"],
                arrays[f"tree{i}_left"], arrays[f"tree{i}_right"],
                arrays[f"tree{i}_payload"], False, meta["n_classes"],
            )
            for i in range(meta["n_trees"])
        ]
        return ForestModel(
            trees=trees, n_classes=meta["n_classes"], n_features=meta["n_features"],
            n_trees=meta["n_trees"], seed=meta["seed"], max_depth=meta["max_depth"],
            min_leaf=meta["min_leaf"], max_features=meta["max_features"],
            bootstrap=meta["bootstrap"],
        )
    if kind == "gtb":
        scales = arrays["scales"]
        stages = []
        for si in range(meta["n_stages"]):
            trees = [
                _unflatten_tree(
                    arrays[f"s{si}c{k}_feature"], arrays[f"s{si}c{k}_threshold"],
                    arrays[f"s{si}c{k}_left"], arrays[f"s{si}c{k}_right"],
                    arrays[f"s{si}c{k}_payload"], True, 1,
                )
                for k in range(meta["n_classes"])
            ]
            stages.append((float(scales[si]), trees))
        return GtbModel(
            init=arrays["init"], stages=stages, n_classes=meta["n_classes"],
            n_features=meta["n_features"], learning_rate=meta["learning_rate"],
            max_depth=meta["max_depth"], train_loss=list(arrays["train_loss"]),
        )
    if kind == "svm":
        return SvmModel(
            W=arrays["W"], b=arrays["b"], mean=arrays["mean"],
            std=arrays["std"], C=meta["C"], n_classes=meta["n_classes"],
        )
    raise ValueError(f"unknown model kind {kind!r}")


TRAINERS = {
    "decision_tree": train_decision_tree,
    "random_forest": train_random_forest,
    "gtb": train_gtb,
    "svm": train_svm,
}
