"""Random-forest cause classifier with an explicit unknown class.

Classes are the feature indices 0..m-1 plus class m ("unknown"). Nominal
rows train as unknown. Each tree casts one vote from the leaf it routes a
sample to, and predictions are the vote shares across trees. The unknown
share is then redistributed evenly over all m causes, so the cause scores
sum to one and a sample every tree calls unknown comes out exactly uniform.

Two choices keep cause votes honest in regions where labeled faults and
nominal rows mingle. Leaf histograms count the full training set routed
through the bootstrap-grown structure, so a vote reflects the training
distribution over the leaf's region rather than the bootstrap draw's noise.
And a contested leaf only votes a cause that beats its unknown count by a
margin; thinner leads read as sampling noise and the tree abstains.

Absent-landmark features are zero-filled both at fit and predict time, so a
landmark that was hidden during training contributes a constant column and
never appears in a split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .container import load_container, save_container
from .errors import DataError
from .schema import FeatureSchema, Sample
from .simnet import Dataset


@dataclass(frozen=True)
class ForestParams:
    trees: int = 100
    max_depth: int = 12
    min_split: int = 2
    # Leaf-size floor. Votes are leaf majorities, so leaves need enough rows
    # for the majority to be a stable estimate rather than partition noise.
    min_leaf: int = 64
    # A contested leaf declares a cause only when the cause count exceeds the
    # unknown count by this many rows; thinner leads read as sampling noise
    # and the tree abstains (votes unknown). None resolves to min_leaf // 3.
    # The unknown class means "nominal or unmodeled", so ambiguity belongs
    # there. Leaves holding no unknown rows always vote their leading cause.
    vote_margin: int | None = None
    mtry: int | None = None  # default: round(sqrt(num features))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trees < 1:
            raise DataError("forest needs at least one tree")
        if self.max_depth < 1 or self.min_split < 2 or self.min_leaf < 1:
            raise DataError("invalid tree growth limits")
        if self.mtry is not None and self.mtry < 1:
            raise DataError("mtry must be at least 1")
        if self.vote_margin is not None and self.vote_margin < 1:
            raise DataError("vote margin must be at least 1")

    def resolve_mtry(self, num_features: int) -> int:
        if self.mtry is not None:
            return min(self.mtry, num_features)
        return max(1, min(num_features, round(math.sqrt(num_features))))

    def resolve_vote_margin(self) -> int:
        if self.vote_margin is not None:
            return self.vote_margin
        return max(1, self.min_leaf // 3)


@dataclass
class _Tree:
    feature: np.ndarray  # (nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray  # (nodes,) int32
    right: np.ndarray  # (nodes,) int32
    leaf_of: np.ndarray  # (nodes,) int32, leaf row or -1 for internal nodes
    leaf_hist: np.ndarray  # (leaves, n_classes) uint32


@dataclass
class ForestModel:
    schema: FeatureSchema
    params: ForestParams
    trees: list[_Tree] = field(default_factory=list)
    trained_landmarks: tuple[str, ...] = ()

    @property
    def n_classes(self) -> int:
        return self.schema.num_features + 1

    @property
    def unknown_class(self) -> int:
        return self.schema.num_features

    def save(self, path) -> None:
        feats, thrs, lefts, rights, leaves, hists = [], [], [], [], [], []
        node_offsets = [0]
        leaf_offsets = [0]
        for t in self.trees:
            feats.append(t.feature)
            thrs.append(t.threshold)
            lefts.append(t.left)
            rights.append(t.right)
            leaves.append(t.leaf_of)
            hists.append(t.leaf_hist)
            node_offsets.append(node_offsets[-1] + t.feature.shape[0])
            leaf_offsets.append(leaf_offsets[-1] + t.leaf_hist.shape[0])
        arrays = {
            "node_feature": np.concatenate(feats),
            "node_threshold": np.concatenate(thrs),
            "node_left": np.concatenate(lefts),
            "node_right": np.concatenate(rights),
            "node_leaf": np.concatenate(leaves),
            "leaf_hist": np.concatenate(hists, axis=0),
            "node_offsets": np.array(node_offsets, dtype=np.int64),
            "leaf_offsets": np.array(leaf_offsets, dtype=np.int64),
        }
        meta = {
            "schema": self.schema.to_json(),
            "trained_landmarks": list(self.trained_landmarks),
            "params": {
                "trees": self.params.trees,
                "max_depth": self.params.max_depth,
                "min_split": self.params.min_split,
                "min_leaf": self.params.min_leaf,
                "mtry": self.params.mtry,
                "bootstrap": self.params.bootstrap,
                "seed": self.params.seed,
            },
        }
        save_container(path, kind="forest", schema_digest=self.schema.digest(), meta=meta, arrays=arrays)

    @classmethod
    def load(cls, path) -> "ForestModel":
        cont = load_container(path, expect_kind="forest")
        meta = cont.meta
        schema = FeatureSchema.from_json(meta["schema"])
        p = meta["params"]
        params = ForestParams(
            trees=int(p["trees"]),
            max_depth=int(p["max_depth"]),
            min_split=int(p["min_split"]),
            min_leaf=int(p["min_leaf"]),
            mtry=None if p["mtry"] is None else int(p["mtry"]),
            bootstrap=bool(p["bootstrap"]),
            seed=int(p["seed"]),
        )
        node_off = cont.arrays["node_offsets"]
        leaf_off = cont.arrays["leaf_offsets"]
        if node_off.shape[0] != params.trees + 1 or leaf_off.shape[0] != params.trees + 1:
            raise DataError("forest container: offset tables do not match tree count")
        trees = []
        for t in range(params.trees):
            a, b = int(node_off[t]), int(node_off[t + 1])
            la, lb = int(leaf_off[t]), int(leaf_off[t + 1])
            trees.append(
                _Tree(
                    feature=np.ascontiguousarray(cont.arrays["node_feature"][a:b]),
                    threshold=np.ascontiguousarray(cont.arrays["node_threshold"][a:b]),
                    left=np.ascontiguousarray(cont.arrays["node_left"][a:b]),
                    right=np.ascontiguousarray(cont.arrays["node_right"][a:b]),
                    leaf_of=np.ascontiguousarray(cont.arrays["node_leaf"][a:b]),
                    leaf_hist=np.ascontiguousarray(cont.arrays["leaf_hist"][la:lb]),
                )
            )
        return cls(
            schema=schema,
            params=params,
            trees=trees,
            trained_landmarks=tuple(meta.get("trained_landmarks", ())),
        )


class _Grower:
    """Grows one tree depth-first, left branch before right."""

    def __init__(
        self,
        X: np.ndarray,
        labels: np.ndarray,
        n_classes: int,
        params: ForestParams,
        mtry: int,
        rng: np.random.Generator,
    ) -> None:
        self.X = X
        self.labels = labels
        self.n_classes = n_classes
        self.params = params
        self.mtry = mtry
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_of: list[int] = []
        self.hists: list[np.ndarray] = []

    def _leaf(self, node: int, rows: np.ndarray) -> None:
        hist = np.bincount(self.labels[rows], minlength=self.n_classes).astype(np.uint32)
        self.feature[node] = -1
        self.leaf_of[node] = len(self.hists)
        self.hists.append(hist)

    def _new_node(self) -> int:
        self.feature.append(-2)  # placeholder until resolved
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_of.append(-1)
        return len(self.feature) - 1

    def grow(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node()
        labels = self.labels[rows]
        if (
            depth >= self.params.max_depth
            or rows.shape[0] < self.params.min_split
            or (labels == labels[0]).all()
        ):
            self._leaf(node, rows)
            return node

        subset = self.rng.permutation(self.X.shape[1])[: self.mtry]
        best_score = -np.inf
        best = None
        for f in subset:
            values = self.X[rows, f]
            order = np.argsort(values, kind="stable")
            pos, score = _kernels.scan_sorted(
                np.ascontiguousarray(values[order]),
                np.ascontiguousarray(labels[order]),
                self.n_classes,
                self.params.min_leaf,
            )
            if pos >= 0 and score > best_score:
                best_score = score
                best = (int(f), order, pos, values)
        if best is None:
            self._leaf(node, rows)
            return node

        f, order, pos, values = best
        a = float(values[order[pos - 1]])
        b = float(values[order[pos]])
        mid = 0.5 * (a + b)
        t = mid if mid < b else a  # rows valued b must route right
        self.feature[node] = f
        self.threshold[node] = t
        left_rows = rows[order[:pos]]
        right_rows = rows[order[pos:]]
        self.left[node] = self.grow(left_rows, depth + 1)
        self.right[node] = self.grow(right_rows, depth + 1)
        return node

    def build(self, rows: np.ndarray) -> _Tree:
        self.grow(rows, 0)
        return _Tree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            leaf_of=np.array(self.leaf_of, dtype=np.int32),
            leaf_hist=(
                np.stack(self.hists).astype(np.uint32)
                if self.hists
                else np.zeros((0, self.n_classes), dtype=np.uint32)
            ),
        )


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, tree_index))))


def train_forest(dataset: Dataset, params: ForestParams = ForestParams()) -> ForestModel:
    """Fit on every row of the dataset (pass a train view, not the full set)."""
    if len(dataset) == 0:
        raise DataError("cannot fit a forest on an empty dataset")
    schema = dataset.schema
    X = np.ascontiguousarray(dataset.features_zero_filled())
    m = schema.num_features
    labels = np.where(dataset.qoe_faulty, dataset.truth_cause, m).astype(np.int32)
    n_classes = m + 1
    mtry = params.resolve_mtry(m)
    n = X.shape[0]
    trees = []
    for t in range(params.trees):
        rng = _tree_rng(params.seed, t)
        if params.bootstrap:
            rows = rng.integers(0, n, n).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        grower = _Grower(X, labels, n_classes, params, mtry, rng)
        tree = grower.build(rows)
        # Honest leaf estimates: structure comes from the bootstrap draw, but
        # leaf histograms count the full training set routed through it, so a
        # leaf's vote reflects the training distribution over its region
        # rather than the draw's sampling noise. Every leaf keeps at least one
        # row (its own bootstrap rows are training rows).
        nodes = _kernels.apply_tree(tree.feature, tree.threshold, tree.left, tree.right, X)
        flat = tree.leaf_of[nodes].astype(np.int64) * n_classes + labels
        tree.leaf_hist = (
            np.bincount(flat, minlength=tree.leaf_hist.size)
            .reshape(tree.leaf_hist.shape)
            .astype(np.uint32)
        )
        trees.append(tree)
    present_any = dataset.present.any(axis=0)
    trained = tuple(
        schema.landmark_ids[i] for i in range(schema.num_landmarks) if present_any[i]
    )
    return ForestModel(schema=schema, params=params, trees=trees, trained_landmarks=trained)


def vote_shares(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """(B, m+1) fraction of trees voting each class.

    A tree's vote comes from the leaf a sample reaches: a leaf holding only
    cause rows votes its leading cause, a contested leaf votes its leading
    cause only when that cause beats the leaf's unknown count by the vote
    margin, and otherwise the tree abstains (votes unknown). Ties among
    causes resolve to the lowest index.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if X.shape[1] != model.schema.num_features:
        raise DataError("feature width does not match the forest's schema")
    if not np.isfinite(X).all():
        raise DataError("non-finite feature values")
    counts = np.zeros((X.shape[0], model.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    unknown = model.unknown_class
    margin = model.params.resolve_vote_margin()
    for tree in model.trees:
        nodes = _kernels.apply_tree(tree.feature, tree.threshold, tree.left, tree.right, X)
        hist = tree.leaf_hist
        leaf_votes = hist[:, :unknown].argmax(axis=1).astype(np.int64)
        lead = hist[np.arange(len(hist)), leaf_votes].astype(np.int64)
        u = hist[:, unknown].astype(np.int64)
        abstain = (u > 0) & (lead < u + margin)
        leaf_votes[abstain] = unknown
        votes = leaf_votes[tree.leaf_of[nodes]]
        counts[rows, votes] += 1
    return counts / len(model.trees)


def cause_scores(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """(B, m) scores over causes; unknown mass spread evenly so rows sum to 1."""
    shares = vote_shares(model, X)
    m = model.schema.num_features
    return shares[:, :m] + shares[:, m:] / m


def score_sample(model: ForestModel, sample: Sample) -> np.ndarray:
    """Cause scores for one observation, absent landmark features zero-filled."""
    sample.validate(model.schema)
    mask = model.schema.present_features(sample.present_landmarks)
    x = np.where(mask, sample.x, 0.0)
    return cause_scores(model, x[None, :])[0]
