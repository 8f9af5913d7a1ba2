"""Extensible naive-Bayes cause classifier with KDE likelihoods.

Classes are the cause feature indices, matching the forest baseline's label
space. Per (feature, class) likelihoods are Gaussian kernel density estimates
over that class's training rows; any pair without enough data falls back to a
generic likelihood, one per measure kind pooled across every landmark seen in
training, and one per local feature pooled across all rows. Priors are
uniform, so scores are pure likelihood products, evaluated in log space over
the sample's present features only.

Everything runs in normalized feature space; the model carries the training
normalization statistics so raw samples can be scored directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .container import Container, load_container, save_container
from .errors import DataError
from .landpool import NormStats, compute_norm_stats
from .schema import KINDS_PER_LANDMARK, FeatureSchema, MeasureKind, Sample

BANDWIDTH_FLOOR = 1e-6
DENSITY_FLOOR = 1e-300
#: Evenly spaced subsample caps keep density evaluation tractable; sorted
#: order makes the subsample deterministic.
SPECIFIC_POINT_CAP = 256
GENERIC_POINT_CAP = 512

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def silverman_bandwidth(values: np.ndarray) -> float:
    """Rule-of-thumb bandwidth, floored so constant data never degenerates."""
    n = values.shape[0]
    std = float(values.std())
    q75, q25 = np.percentile(values, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    h = 0.9 * spread * n ** (-1.0 / 5.0)
    return max(h, BANDWIDTH_FLOOR)


def _subsample_sorted(values: np.ndarray, cap: int) -> np.ndarray:
    pts = np.sort(np.asarray(values, dtype=np.float64))
    if pts.shape[0] <= cap:
        return pts
    idx = np.linspace(0, pts.shape[0] - 1, cap).round().astype(np.int64)
    return pts[idx]


@dataclass(frozen=True)
class KdeEstimator:
    """Gaussian KDE over a fixed point set."""

    points: np.ndarray  # sorted, float64
    bandwidth: float

    @classmethod
    def fit(cls, values: np.ndarray, cap: int) -> "KdeEstimator":
        pts = _subsample_sorted(values, cap)
        return cls(points=pts, bandwidth=silverman_bandwidth(pts))

    def density(self, queries: np.ndarray) -> np.ndarray:
        q = np.ascontiguousarray(np.atleast_1d(queries), dtype=np.float64)
        raw = _kernels.kde_sum(self.points, 1.0 / self.bandwidth, q)
        scale = 1.0 / (self.points.shape[0] * self.bandwidth * _SQRT_2PI)
        return raw * scale


@dataclass
class BayesModel:
    schema: FeatureSchema
    norm: NormStats
    classes: np.ndarray  # causes seen in training, sorted int64
    specific: dict[tuple[int, int], KdeEstimator] = field(default_factory=dict)
    generic_kind: dict[int, KdeEstimator] = field(default_factory=dict)
    generic_local: dict[int, KdeEstimator] = field(default_factory=dict)
    trained_landmarks: tuple[str, ...] = ()

    def generic_for(self, j: int) -> KdeEstimator:
        decoded = self.schema.decode(j)
        if isinstance(decoded, str):
            return self.generic_local[j]
        return self.generic_kind[int(decoded[1])]

    def estimator_for(self, j: int, k: int) -> KdeEstimator:
        """Resolve (feature, class) to exactly one estimator."""
        est = self.specific.get((j, k))
        return self.generic_for(j) if est is None else est

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        arrays = {
            "classes": self.classes,
            "kind_mean": self.norm.kind_mean,
            "kind_std": self.norm.kind_std,
            "local_mean": self.norm.local_mean,
            "local_std": self.norm.local_std,
        }
        bands: dict[str, float] = {}
        for (j, k), est in self.specific.items():
            arrays[f"s{j}_{k}"] = est.points
            bands[f"s{j}_{k}"] = est.bandwidth
        for kind, est in self.generic_kind.items():
            arrays[f"gk{kind}"] = est.points
            bands[f"gk{kind}"] = est.bandwidth
        for j, est in self.generic_local.items():
            arrays[f"gl{j}"] = est.points
            bands[f"gl{j}"] = est.bandwidth
        meta = {
            "schema": self.schema.to_json(),
            "bandwidths": bands,
            "trained_landmarks": list(self.trained_landmarks),
        }
        save_container(path, "bayes", self.schema.digest(), meta, arrays)

    @classmethod
    def from_container(cls, cont: Container) -> "BayesModel":
        schema = FeatureSchema.from_json(cont.meta["schema"])
        bands = cont.meta["bandwidths"]
        specific: dict[tuple[int, int], KdeEstimator] = {}
        generic_kind: dict[int, KdeEstimator] = {}
        generic_local: dict[int, KdeEstimator] = {}
        for name, pts in cont.arrays.items():
            if name not in bands:
                continue
            est = KdeEstimator(points=pts, bandwidth=float(bands[name]))
            if name.startswith("s"):
                j, k = name[1:].split("_")
                specific[(int(j), int(k))] = est
            elif name.startswith("gk"):
                generic_kind[int(name[2:])] = est
            else:
                generic_local[int(name[2:])] = est
        return cls(
            schema=schema,
            norm=NormStats(
                kind_mean=cont.arrays["kind_mean"],
                kind_std=cont.arrays["kind_std"],
                local_mean=cont.arrays["local_mean"],
                local_std=cont.arrays["local_std"],
            ),
            classes=cont.arrays["classes"],
            specific=specific,
            generic_kind=generic_kind,
            generic_local=generic_local,
            trained_landmarks=tuple(cont.meta["trained_landmarks"]),
        )

    @classmethod
    def load(cls, path) -> "BayesModel":
        return cls.from_container(load_container(path, expect_kind="bayes"))


def _normalize(schema: FeatureSchema, norm: NormStats, X: np.ndarray) -> np.ndarray:
    ell = schema.num_landmarks
    k = KINDS_PER_LANDMARK
    out = np.empty_like(X)
    XL = X[:, : ell * k].reshape(X.shape[0], ell, k)
    out[:, : ell * k] = ((XL - norm.kind_mean) / norm.kind_std).reshape(X.shape[0], ell * k)
    out[:, ell * k :] = (X[:, ell * k :] - norm.local_mean) / norm.local_std
    return out


def fit_bayes(dataset) -> BayesModel:
    """Fit KDE likelihoods on a dataset view (pass a train view)."""
    if len(dataset) == 0:
        raise DataError("cannot fit on an empty dataset")
    schema: FeatureSchema = dataset.schema
    X = dataset.X
    present = dataset.present
    if np.isnan(X).any():
        raise DataError("NaN in input features")
    norm = compute_norm_stats(schema, X, present)
    Xn = _normalize(schema, norm, X)
    m = schema.num_features
    uniq, inv = np.unique(present, axis=0, return_inverse=True)
    feat_present = np.stack([schema.present_features(u) for u in uniq])[inv]

    faulty = np.asarray(dataset.qoe_faulty, dtype=bool)
    causes = np.asarray(dataset.truth_cause)
    classes = np.unique(causes[faulty]).astype(np.int64)

    model = BayesModel(schema=schema, norm=norm, classes=classes)
    for k in classes:
        rows = faulty & (causes == k)
        for j in range(m):
            vals = Xn[rows & feat_present[:, j], j]
            if vals.shape[0] >= 2:
                model.specific[(j, int(k))] = KdeEstimator.fit(vals, SPECIFIC_POINT_CAP)

    ell = schema.num_landmarks
    for kind in MeasureKind:
        cols = [schema.feature_index(lam, kind) for lam in range(ell)]
        pooled = np.concatenate([Xn[feat_present[:, j], j] for j in cols])
        if pooled.shape[0] == 0:
            raise DataError("no present landmark measures to pool")
        model.generic_kind[int(kind)] = KdeEstimator.fit(pooled, GENERIC_POINT_CAP)
    for j in range(ell * KINDS_PER_LANDMARK, m):
        model.generic_local[j] = KdeEstimator.fit(Xn[:, j], GENERIC_POINT_CAP)

    present_any = present.any(axis=0)
    model.trained_landmarks = tuple(
        schema.landmark_ids[i] for i in range(ell) if present_any[i]
    )
    return model


def log_scores_batch(
    model: BayesModel, X: np.ndarray, present_landmarks: np.ndarray
) -> np.ndarray:
    """(B, m) unnormalized log scores for rows sharing one presence mask."""
    schema = model.schema
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mask = schema.present_features(np.asarray(present_landmarks, dtype=bool))
    Xn = _normalize(schema, model.norm, X)
    B = X.shape[0]
    m = schema.num_features
    out = np.zeros((B, m), dtype=np.float64)
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        return out  # uniform after normalization
    # generic log densities once per feature, shared by classes without a
    # specific estimator for it
    gen = {int(j): np.log(np.maximum(model.generic_for(j).density(Xn[:, j]), DENSITY_FLOOR))
           for j in cols}
    seen = set(int(k) for k in model.classes)
    base = np.zeros(B, dtype=np.float64)
    for j in cols:
        base += gen[int(j)]
    for k in range(m):
        if k not in seen:
            out[:, k] = base
            continue
        acc = np.zeros(B, dtype=np.float64)
        for j in cols:
            est = model.specific.get((int(j), k))
            if est is None:
                acc += gen[int(j)]
            else:
                acc += np.log(np.maximum(est.density(Xn[:, j]), DENSITY_FLOOR))
        out[:, k] = acc
    return out


def scores_batch(
    model: BayesModel, X: np.ndarray, present_landmarks: np.ndarray
) -> np.ndarray:
    """(B, m) normalized cause scores; each row sums to 1."""
    logp = log_scores_batch(model, X, present_landmarks)
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


def bayes_predict(model: BayesModel, sample: Sample) -> np.ndarray:
    """Normalized cause scores for one observation (uniform if all absent)."""
    sample.validate(model.schema)
    return scores_batch(model, sample.x[None, :], sample.present_landmarks)[0]
