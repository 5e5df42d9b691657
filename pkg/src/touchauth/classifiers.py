"""Binary scoring classifiers, EER thresholding and stratified cross-validation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import NonFiniteLoss, SingleClass, SingleClassFold
from .nn import Adam, DenseNet, bce, bce_grad_logit

GENUINE = 1
IMPOSTOR = 0


class Classifier(Protocol):
    name: str

    def score(self, X: np.ndarray) -> np.ndarray:
        """Genuine-likeness in [0, 1] for each row of ``X``."""

    def to_dict(self) -> dict: ...


def _check_two_classes(y):
    if len(np.unique(y)) < 2:
        raise SingleClass("training data must contain both classes")


@dataclass(frozen=True)
class MlpHyper:
    hidden: tuple[int, ...] = (64, 32)
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


@dataclass
class MlpClassifier:
    net: DenseNet
    hyper: MlpHyper
    loss_history: list[float] = field(default_factory=list)
    name: str = "mlp"

    def score(self, X) -> np.ndarray:
        return self.net.forward(np.atleast_2d(np.asarray(X, dtype=float)))[:, 0]

    def to_dict(self) -> dict:
        return {"type": "mlp", "hyper": asdict(self.hyper), "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpClassifier":
        hyper = MlpHyper(**{**d["hyper"], "hidden": tuple(d["hyper"]["hidden"])})
        return cls(DenseNet.from_dict(d["net"]), hyper)


def train_mlp(X, y, hyper: MlpHyper = MlpHyper()) -> MlpClassifier:
    """Mini-batch Adam on binary cross-entropy; loss_history holds full-data loss per epoch."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_two_classes(y)
    rng = np.random.default_rng(hyper.seed)
    net = DenseNet.init([X.shape[1], *hyper.hidden, 1], rng)
    opt = Adam(hyper.lr)
    target = y[:, None]
    history = []
    n = len(X)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            p, cache = net.forward(X[idx], cache=True)
            grads, _ = net.backward(cache, bce_grad_logit(p, target[idx]))
            opt.step(net.params, grads)
        loss = bce(net.forward(X), target)
        if not math.isfinite(loss):
            raise NonFiniteLoss(epoch)
        history.append(loss)
    return MlpClassifier(net, hyper, history)


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    max_features: int | str = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def features_per_split(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(d)))
        return max(1, min(d, int(self.max_features)))


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf whose ``vote`` is 0 or 1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.vote[node]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "vote")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=int),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=int),
            np.array(d["right"], dtype=int),
            np.array(d["vote"], dtype=int),
        )


def _best_split(X, y, features, min_leaf):
    n = len(y)
    best = None  # (impurity, feature, threshold)
    total_pos = y.sum()
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        pos_left = np.cumsum(y[order])[:-1]
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        n_right = n - n_left
        pl = pos_left / n_left
        pr = (total_pos - pos_left) / n_right
        impurity = n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)
        impurity = np.where(valid, impurity, np.inf)
        i = int(np.argmin(impurity))
        if best is None or impurity[i] < best[0]:
            best = (impurity[i], f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def build_tree(X, y, hyper: ForestHyper, rng: np.random.Generator) -> Tree:
    feature, threshold, left, right, vote = [], [], [], [], []
    k = hyper.features_per_split(X.shape[1])

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (vote, 0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        pos = int(ys.sum())
        # ties between classes vote impostor
        vote[node] = int(2 * pos > len(ys))
        if depth >= hyper.max_depth or pos in (0, len(ys)) or len(ys) < 2 * hyper.min_leaf:
            continue
        feats = np.sort(rng.choice(X.shape[1], k, replace=False))
        split = _best_split(X[idx], ys, feats, hyper.min_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = int(f), float(thr)
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~mask], depth + 1))
        stack.append((lnode, idx[mask], depth + 1))
    return Tree(
        np.array(feature, dtype=int),
        np.array(threshold, dtype=float),
        np.array(left, dtype=int),
        np.array(right, dtype=int),
        np.array(vote, dtype=int),
    )


@dataclass
class RandomForest:
    trees: list[Tree]
    hyper: ForestHyper
    name: str = "rf"

    def score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        votes = np.zeros(len(X), dtype=int)
        for t in self.trees:
            votes += t.predict(X)
        return votes / len(self.trees)

    def to_dict(self) -> dict:
        return {"type": "rf", "hyper": asdict(self.hyper), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        return cls([Tree.from_dict(t) for t in d["trees"]], ForestHyper(**d["hyper"]))


def train_random_forest(X, y, hyper: ForestHyper = ForestHyper()) -> RandomForest:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    _check_two_classes(y)
    trees = []
    for i in range(hyper.n_trees):
        rng = np.random.default_rng([hyper.seed, i])
        idx = rng.integers(0, len(y), len(y)) if hyper.bootstrap else np.arange(len(y))
        trees.append(build_tree(X[idx], y[idx], hyper, rng))
    return RandomForest(trees, hyper)


def classifier_from_dict(d: dict):
    if d["type"] == "mlp":
        return MlpClassifier.from_dict(d)
    if d["type"] == "rf":
        return RandomForest.from_dict(d)
    raise ValueError(f"unknown classifier type {d['type']!r}")


def threshold_candidates(scores) -> np.ndarray:
    u = np.unique(np.asarray(scores, dtype=float))
    return np.sort(np.concatenate([u, 0.5 * (u[1:] + u[:-1])]))


def rates_at(genuine, impostor, thresholds):
    """FAR and FRR for each threshold, accepting when ``score >= threshold``."""
    g = np.sort(np.asarray(genuine, dtype=float))
    imp = np.sort(np.asarray(impostor, dtype=float))
    thresholds = np.asarray(thresholds, dtype=float)
    frr = np.searchsorted(g, thresholds, side="left") / len(g)
    far = (len(imp) - np.searchsorted(imp, thresholds, side="left")) / len(imp)
    return far, frr


def select_threshold_eer(genuine_scores, impostor_scores) -> tuple[float, float]:
    """Threshold minimizing |FAR - FRR| over all scores and midpoints; returns ``(tau, eer)``."""
    g = np.asarray(genuine_scores, dtype=float)
    imp = np.asarray(impostor_scores, dtype=float)
    if g.size == 0 or imp.size == 0:
        raise ValueError("both score lists must be non-empty")
    cands = threshold_candidates(np.concatenate([g, imp]))
    far, frr = rates_at(g, imp, cands)
    # argmin returns the first (smallest) threshold on ties
    i = int(np.argmin(np.abs(far - frr)))
    return float(cands[i]), float((far[i] + frr[i]) / 2)


@dataclass(frozen=True)
class CvPlan:
    folds: int
    assignment: np.ndarray

    def split(self, fold: int):
        test = self.assignment == fold
        return np.flatnonzero(~test), np.flatnonzero(test)


def make_cv_plan(y, folds: int = 5, seed: int = 0) -> CvPlan:
    """Stratified, seeded fold assignment (round-robin within each shuffled class)."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    y = np.asarray(y).astype(int)
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=int)
    offset = 0
    for label in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == label))
        assign[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    for f in range(folds):
        if len(np.unique(y[assign == f])) < 2:
            raise SingleClassFold(f)
    return CvPlan(folds, assign)


@dataclass
class CvResult:
    fold_metrics: list[float]
    mean: float
    oof_scores: np.ndarray


def cross_validate(
    X,
    y,
    plan: CvPlan,
    trainer: Callable[[np.ndarray, np.ndarray, int], object],
    metricfn: Callable[[np.ndarray, np.ndarray], float],
) -> CvResult:
    """Train on k-1 folds, score the held-out fold.

    ``trainer(X_train, y_train, fold)`` returns an object with ``score``;
    ``metricfn(y_true, scores)`` gives the fold metric. Out-of-fold scores
    are pooled in ``oof_scores``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    oof = np.full(len(y), np.nan)
    metrics = []
    for f in range(plan.folds):
        tr, te = plan.split(f)
        if len(np.unique(y[tr])) < 2 or len(np.unique(y[te])) < 2:
            raise SingleClassFold(f)
        model = trainer(X[tr], y[tr], f)
        s = np.asarray(model.score(X[te]), dtype=float)
        oof[te] = s
        metrics.append(float(metricfn(y[te], s)))
    return CvResult(metrics, float(np.mean(metrics)), oof)


def eer_hter(y_true, scores) -> float:
    """HTER at the EER threshold chosen on the same scores."""
    y_true = np.asarray(y_true).astype(int)
    scores = np.asarray(scores, dtype=float)
    g, imp = scores[y_true == GENUINE], scores[y_true == IMPOSTOR]
    tau, _ = select_threshold_eer(g, imp)
    far, frr = rates_at(g, imp, [tau])
    return float((far[0] + frr[0]) / 2)


ARCHITECTURES = ("V", "G")
MODEL_FORMAT_VERSION = 1


@dataclass
class AuthModel:
    """A trained per-user authenticator operating on raw window vectors.

    Decisions accept when ``score(select(normalize(x))) >= threshold``.
    """

    user_id: str
    dataset_id: str
    classifier: object
    threshold: float
    normalizer: object
    selector: object
    architecture: str = "V"
    gan_pair: object = None
    gender: str = "unspecified"
    seed: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")

    @property
    def model_id(self) -> str:
        return f"{self.dataset_id}/{self.user_id}/{self.classifier.name}/{self.architecture}/s{self.seed}"

    @property
    def input_dim(self) -> int:
        return int(len(self.selector.selected_indices))

    def prepare(self, raw) -> np.ndarray:
        """Map raw window vectors into the classifier's input space."""
        return self.selector.apply(self.normalizer.apply(np.atleast_2d(raw)))

    def score_prepared(self, X) -> np.ndarray:
        return np.asarray(self.classifier.score(X), dtype=float)

    def decide_prepared(self, X) -> np.ndarray:
        return self.score_prepared(X) >= self.threshold

    def decide(self, raw) -> np.ndarray:
        return self.decide_prepared(self.prepare(raw))

    def to_dict(self) -> dict:
        return {
            "format": "touchauth.auth_model",
            "version": MODEL_FORMAT_VERSION,
            "user_id": self.user_id,
            "dataset_id": self.dataset_id,
            "architecture": self.architecture,
            "gender": self.gender,
            "seed": self.seed,
            "threshold": self.threshold,
            "normalizer": {"min": self.normalizer.mins.tolist(), "max": self.normalizer.maxs.tolist()},
            "selector": {
                "indices": self.selector.selected_indices.tolist(),
                "mi_scores": self.selector.mi_scores.tolist(),
            },
            "classifier": self.classifier.to_dict(),
            "gan_pair": self.gan_pair.to_dict() if self.gan_pair is not None else None,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuthModel":
        from .features import FeatureSelector, Normalizer
        from .gan import GanPair

        if d.get("format") != "touchauth.auth_model" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a version-1 auth model container")
        return cls(
            user_id=d["user_id"],
            dataset_id=d["dataset_id"],
            classifier=classifier_from_dict(d["classifier"]),
            threshold=d["threshold"],
            normalizer=Normalizer(np.array(d["normalizer"]["min"]), np.array(d["normalizer"]["max"])),
            selector=FeatureSelector(
                np.array(d["selector"]["indices"], dtype=int), np.array(d["selector"]["mi_scores"])
            ),
            architecture=d["architecture"],
            gan_pair=GanPair.from_dict(d["gan_pair"]) if d["gan_pair"] else None,
            gender=d["gender"],
            seed=d["seed"],
            info=d.get("info", {}),
        )
