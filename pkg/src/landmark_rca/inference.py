"""Fine-grained cause ranking on top of the coarse classifier.

The pipeline turns one faulty observation into a ranked list of suspect
features in four steps:

1. attention: the input gradient of the coarse model's top class, folded to
   non-negative saliency scores that sum to one.
2. tune: the coarse class probabilities reweight the saliency so the mass on
   the predicted family's features matches the classifier's confidence.
3. ensemble: a convex blend with an auxiliary per-cause score vector, weighted
   by how much tuned mass sits on features of landmarks the coarse model never
   saw in training.
4. diagnose: the end-to-end composition, producing a Diagnosis with the final
   ranking and bookkeeping flags.

Every step is a pure function; models are immutable inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .forest import ForestModel, score_sample
from .landpool import CoarseModel, batch_input_gradients, input_gradient
from .schema import COARSE_FAMILIES, FaultFamily, FeatureSchema, Sample


@dataclass(frozen=True)
class AttentionScores:
    """Normalized gradient saliency over all m features."""

    scores: np.ndarray  # (m,) non-negative, sums to 1
    degenerate: bool  # all-zero gradient, scores fell back to uniform


def attention(grad: np.ndarray, present_features: np.ndarray) -> AttentionScores:
    """Fold a raw input gradient into normalized saliency scores.

    Scores are absolute gradient components divided by their total, so absent
    features (whose gradient is exactly zero) score exactly zero. An all-zero
    gradient carries no signal; it falls back to uniform scores over the
    present features and raises the degenerate flag.
    """
    g = np.abs(np.asarray(grad, dtype=np.float64))
    mask = np.asarray(present_features, dtype=bool)
    if g.shape != mask.shape or g.ndim != 1:
        raise DataError("gradient and presence mask must both have length m")
    total = g.sum()
    if total == 0.0:
        npresent = int(mask.sum())
        if npresent == 0:
            raise DataError("attention is undefined with zero present features")
        scores = np.zeros_like(g)
        scores[mask] = 1.0 / npresent
        return AttentionScores(scores=scores, degenerate=True)
    return AttentionScores(scores=g / total, degenerate=False)


def tune(gamma: np.ndarray, y: np.ndarray, family_map: np.ndarray) -> np.ndarray:
    """Reweight saliency by the coarse prediction's family confidence.

    With phi the top coarse class, p the features family_map assigns to phi,
    w the class's share of the probability mass, and s the saliency mass on
    p: features in p rescale to gamma/s*w and the rest to gamma/(1-s)*(1-w),
    so the family holds exactly w of the output mass. When s is 0 or 1 there
    is nothing to rebalance and the scores return unchanged.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    family_map = np.asarray(family_map)
    if gamma.shape != family_map.shape:
        raise DataError("family map must assign a class to each of the m features")
    phi = int(np.argmax(y))
    p = family_map == phi
    s_in = gamma[p].sum()
    s_out = gamma[~p].sum()
    # A zero subset sum of non-negative scores means the subset is exactly
    # empty of mass: the extreme cases where rescaling is undefined.
    if s_in == 0.0 or s_out == 0.0:
        return gamma.copy()
    w = y[phi] / y.sum()
    out = np.empty_like(gamma)
    out[p] = gamma[p] / s_in * w
    out[~p] = gamma[~p] / s_out * (1.0 - w)
    return out


def ensemble(
    tuned: np.ndarray, alpha: np.ndarray, unknown_features: np.ndarray
) -> tuple[np.ndarray, float]:
    """Blend tuned saliency with auxiliary scores; returns (final, w_U).

    w_U is the tuned mass on features of landmarks unknown to the coarse
    model, and the blend is w_U*tuned + (1-w_U)*alpha. The endpoints are
    exact: w_U of 0 returns alpha bit for bit, w_U of 1 returns tuned.
    """
    tuned = np.asarray(tuned, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if tuned.shape != alpha.shape:
        raise DataError("score vectors must cover the same m features")
    u = np.zeros(tuned.shape, dtype=bool)
    u[np.asarray(unknown_features)] = True
    w_u = float(tuned[u].sum())
    return w_u * tuned + (1.0 - w_u) * alpha, w_u


@dataclass(frozen=True)
class Diagnosis:
    """Ranked root-cause hypotheses for one faulty observation."""

    ranking: list[tuple[int, float]]  # (feature index, score), descending
    scores: np.ndarray  # (m,) final scores in feature order
    y: np.ndarray  # (c,) coarse class probabilities
    w_unknown: float
    argmax_tie: bool
    degenerate_gradient: bool
    nominal_coarse: bool  # coarse argmax was Nominal; tuning skipped
    attention_only: bool  # no auxiliary model; scores are tuned saliency

    def to_json(self, schema: FeatureSchema) -> str:
        return json.dumps(
            {
                "causes": [
                    {"feature": j, "name": schema.feature_name(j), "score": s}
                    for j, s in self.ranking
                ],
                "coarse": [float(v) for v in self.y],
                "w_unknown": self.w_unknown,
                "flags": {
                    "argmax_tie": self.argmax_tie,
                    "degenerate_gradient": self.degenerate_gradient,
                    "nominal_coarse": self.nominal_coarse,
                    "attention_only": self.attention_only,
                },
            },
            indent=2,
        )


def family_class_map(schema: FeatureSchema) -> np.ndarray:
    """(m,) coarse class index owning each feature."""
    return np.array(
        [COARSE_FAMILIES.index(f) for f in schema.feature_families()], dtype=np.int64
    )


def _rank(scores: np.ndarray) -> list[tuple[int, float]]:
    # stable sort on negated scores: descending, ties by ascending index
    order = np.argsort(-scores, kind="stable")
    return [(int(j), float(scores[j])) for j in order]


def diagnose(
    coarse: CoarseModel,
    auxiliary: ForestModel | None,
    sample: Sample,
    schema: FeatureSchema | None = None,
) -> Diagnosis:
    """Full localization pipeline for one observation.

    Without an auxiliary model the blend step is skipped and the tuned
    saliency itself is the ranking (attention-only mode, flagged).
    """
    schema = coarse.schema if schema is None else schema
    if schema.digest() != coarse.schema.digest():
        raise DataError("sample schema does not match the coarse model's")
    if auxiliary is not None and auxiliary.schema.digest() != coarse.schema.digest():
        raise DataError("auxiliary model schema does not match the coarse model's")
    ig = input_gradient(coarse, sample)
    att = attention(ig.grad, schema.present_features(sample.present_landmarks))
    tuned = tune(att.scores, ig.y, family_class_map(schema))
    nominal = COARSE_FAMILIES[ig.phi] is FaultFamily.NOMINAL
    unknown = schema.landmark_feature_set(coarse.unknown_landmarks())
    if auxiliary is None:
        final = tuned
        w_u = float(tuned[unknown].sum())
    else:
        final, w_u = ensemble(tuned, score_sample(auxiliary, sample), unknown)
    return Diagnosis(
        ranking=_rank(final),
        scores=final,
        y=ig.y,
        w_unknown=w_u,
        argmax_tie=ig.argmax_tie,
        degenerate_gradient=att.degenerate,
        nominal_coarse=nominal,
        attention_only=auxiliary is None,
    )


def diagnose_batch(
    coarse: CoarseModel,
    X: np.ndarray,
    present_landmarks: np.ndarray,
    alpha: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """Vectorized pipeline for rows sharing one landmark-presence mask.

    X is raw (B, m) with absent features zero-filled. alpha is the auxiliary
    (B, m) score matrix, or None for attention-only mode. Returns (final
    scores (B, m), w_unknown (B,), flags dict of boolean (B,) arrays).
    """
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(present_landmarks, dtype=bool)
    present_idx = np.flatnonzero(mask)
    if present_idx.size == 0:
        raise DataError("pooling is undefined with zero present landmarks")
    schema = coarse.schema
    feat_mask = schema.present_features(mask)
    Xn = coarse.normalize(np.where(feat_mask, X, 0.0))
    grads, Y, phi, ties = batch_input_gradients(coarse, Xn, present_idx)

    g = np.abs(grads)
    total = g.sum(axis=1)
    degenerate = total == 0.0
    gamma = np.divide(g, total[:, None], out=np.zeros_like(g), where=~degenerate[:, None])
    if degenerate.any():
        gamma[degenerate] = feat_mask / feat_mask.sum()

    fmap = family_class_map(schema)
    p = fmap[None, :] == phi[:, None]
    s_in = np.where(p, gamma, 0.0).sum(axis=1)
    s_out = np.where(p, 0.0, gamma).sum(axis=1)
    w = Y[np.arange(Y.shape[0]), phi] / Y.sum(axis=1)
    plain = (s_in == 0.0) | (s_out == 0.0)
    den_in = np.where(plain, 1.0, s_in)[:, None]
    den_out = np.where(plain, 1.0, s_out)[:, None]
    scale = np.where(p, w[:, None] / den_in, (1.0 - w[:, None]) / den_out)
    tuned = np.where(plain[:, None], gamma, gamma * scale)

    unknown = schema.landmark_feature_set(coarse.unknown_landmarks())
    w_u = tuned[:, unknown].sum(axis=1)
    if alpha is None:
        final = tuned
    else:
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != tuned.shape:
            raise DataError("auxiliary scores must be (B, m) matching the batch")
        final = w_u[:, None] * tuned + (1.0 - w_u[:, None]) * alpha
    flags = {
        "argmax_tie": ties,
        "degenerate_gradient": degenerate,
        "nominal_coarse": phi == 0,
    }
    return final, w_u, flags
