"""Coarse fault classifier over landmark measurements.

A shared linear kernel projects each landmark's measures into a filter space,
commutative global reductions pool the projections across however many
landmarks are present, and a fully-connected softmax head maps the pooled
vector plus the local features to coarse fault-family probabilities.

Permutation invariance is exact, not just mathematical: projections are
computed with a per-landmark fixed arithmetic order and pooled values are
sorted per filter before every reduction, so landmark order can never change
the floating-point result. Inputs are standardized per measure kind (shared
across landmarks, so the statistics transfer to landmarks unseen during
training) and per local feature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .container import Container, load_container, save_container
from .errors import DataError
from .schema import (
    KINDS_PER_LANDMARK,
    NUM_FAMILIES,
    NUM_LOCAL_FEATURES,
    FeatureSchema,
    Sample,
)

DEFAULT_POOLS: tuple[str, ...] = (
    "min",
    "max",
    "mean",
    "variance",
    "p10",
    "p20",
    "p30",
    "p40",
    "p50",
    "p60",
    "p70",
    "p80",
    "p90",
)

_SUPPORTED_POOLS = set(DEFAULT_POOLS)


@dataclass(frozen=True)
class PoolSet:
    """Ordered commutative reductions applied across landmarks, per filter."""

    names: tuple[str, ...] = DEFAULT_POOLS

    def __post_init__(self) -> None:
        if not self.names:
            raise DataError("pool set cannot be empty")
        unknown = [n for n in self.names if n not in _SUPPORTED_POOLS]
        if unknown:
            raise DataError(f"unsupported pool reductions: {unknown}")

    def __len__(self) -> int:
        return len(self.names)


@dataclass
class NormStats:
    """Standardization statistics: per measure kind and per local feature."""

    kind_mean: np.ndarray
    kind_std: np.ndarray
    local_mean: np.ndarray
    local_std: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    decay: float = 0.001
    momentum: float = 0.9
    batch_size: int = 256
    max_epochs: int = 40
    patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    filters: int = 24
    hidden: tuple[int, int] = (512, 128)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.decay < 0 or not 0 <= self.momentum < 1:
            raise DataError("training rates must be positive")
        if self.patience < 1:
            raise DataError("patience must be >= 1")
        if self.batch_size < 1 or self.filters < 1:
            raise DataError("batch size and filter count must be >= 1")


@dataclass
class CoarseModel:
    """Trained coarse classifier; immutable after training."""

    schema: FeatureSchema
    kernel: np.ndarray  # (f, k)
    bias: np.ndarray  # (f,)
    weights: list[np.ndarray]  # [W1 (h1, in), W2 (h2, h1), W3 (c, h2)]
    biases: list[np.ndarray]
    pools: PoolSet
    norm: NormStats
    trained_landmarks: tuple[str, ...]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    seed: int = 0
    service_id: str | None = None

    @property
    def num_filters(self) -> int:
        return self.kernel.shape[0]

    def unknown_landmarks(self) -> tuple[str, ...]:
        trained = set(self.trained_landmarks)
        return tuple(l for l in self.schema.landmark_ids if l not in trained)

    # -- persistence --------------------------------------------------------

    def save(self, path, kind: str = "diagnet") -> None:
        arrays = {
            "kernel": self.kernel,
            "bias": self.bias,
            "kind_mean": self.norm.kind_mean,
            "kind_std": self.norm.kind_std,
            "local_mean": self.norm.local_mean,
            "local_std": self.norm.local_std,
        }
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        meta = {
            "schema": self.schema.to_json(),
            "pools": list(self.pools.names),
            "trained_landmarks": list(self.trained_landmarks),
            "history": self.history,
            "best_epoch": self.best_epoch,
            "seed": self.seed,
            "service_id": self.service_id,
            "layers": len(self.weights),
        }
        save_container(path, kind, self.schema.digest(), meta, arrays)

    @classmethod
    def from_container(cls, cont: Container) -> "CoarseModel":
        schema = FeatureSchema.from_json(cont.meta["schema"])
        layers = int(cont.meta["layers"])
        return cls(
            schema=schema,
            kernel=cont.arrays["kernel"],
            bias=cont.arrays["bias"],
            weights=[cont.arrays[f"w{i}"] for i in range(layers)],
            biases=[cont.arrays[f"b{i}"] for i in range(layers)],
            pools=PoolSet(tuple(cont.meta["pools"])),
            norm=NormStats(
                kind_mean=cont.arrays["kind_mean"],
                kind_std=cont.arrays["kind_std"],
                local_mean=cont.arrays["local_mean"],
                local_std=cont.arrays["local_std"],
            ),
            trained_landmarks=tuple(cont.meta["trained_landmarks"]),
            history=list(cont.meta["history"]),
            best_epoch=int(cont.meta["best_epoch"]),
            seed=int(cont.meta["seed"]),
            service_id=cont.meta.get("service_id"),
        )

    @classmethod
    def load(cls, path) -> "CoarseModel":
        cont = load_container(path, expect_kind="diagnet")
        return cls.from_container(cont)

    # -- normalization ------------------------------------------------------

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Standardize a raw m-vector (or (B, m) matrix) into model input space."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        ell = self.schema.num_landmarks
        k = KINDS_PER_LANDMARK
        out = np.empty_like(X)
        XL = X[:, : ell * k].reshape(X.shape[0], ell, k)
        out[:, : ell * k] = ((XL - self.norm.kind_mean) / self.norm.kind_std).reshape(
            X.shape[0], ell * k
        )
        out[:, ell * k :] = (X[:, ell * k :] - self.norm.local_mean) / self.norm.local_std
        return out[0] if single else out


def _percentile_positions(q: float, n: int) -> tuple[int, int, float]:
    """Linear-interpolation anchor indices and fraction for quantile q of n sorted values."""
    pos = q * (n - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return lo, hi, frac


def _project(xl: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(..., k) landmark measures -> (..., f) filter space.

    The explicit per-kind sum keeps each landmark's arithmetic independent of
    every other landmark, which is what makes permutation invariance exact.
    """
    out = np.broadcast_to(bias, xl.shape[:-1] + (kernel.shape[0],)).copy()
    for t in range(kernel.shape[1]):
        out += xl[..., t : t + 1] * kernel[:, t]
    return out


def _pool_forward(F: np.ndarray, pools: PoolSet) -> tuple[np.ndarray, dict]:
    """Pool (B, n, f) filter values over the landmark axis -> (B, omega*f)."""
    B, n, f = F.shape
    order = np.argsort(F, axis=1, kind="stable")
    S = np.take_along_axis(F, order, axis=1)
    mean = S.sum(axis=1) / n
    pieces = []
    cache: dict = {"order": order, "S": S, "mean": mean, "n": n}
    for name in pools.names:
        if name == "min":
            pieces.append(S[:, 0, :])
        elif name == "max":
            pieces.append(S[:, -1, :])
        elif name == "mean":
            pieces.append(mean)
        elif name == "variance":
            centered = S - mean[:, None, :]
            pieces.append((centered * centered).sum(axis=1) / n)
        else:
            q = int(name[1:]) / 100.0
            lo, hi, frac = _percentile_positions(q, n)
            pieces.append(S[:, lo, :] + (S[:, hi, :] - S[:, lo, :]) * frac)
    return np.concatenate(pieces, axis=1), cache


def _pool_backward(dP: np.ndarray, F: np.ndarray, pools: PoolSet, cache: dict) -> np.ndarray:
    """Backpropagate (B, omega*f) pooled gradients to (B, n, f) filter values."""
    B, n, f = F.shape
    order, S, mean = cache["order"], cache["S"], cache["mean"]
    dS = np.zeros_like(S)
    dF = np.zeros_like(F)
    for w, name in enumerate(pools.names):
        g = dP[:, w * f : (w + 1) * f]
        if name == "min":
            dS[:, 0, :] += g
        elif name == "max":
            dS[:, -1, :] += g
        elif name == "mean":
            dF += g[:, None, :] / n
        elif name == "variance":
            dF += g[:, None, :] * 2.0 * (F - mean[:, None, :]) / n
            # the mean itself depends on every value, but the centered terms
            # sum to zero so the indirect contribution cancels exactly:
            # d var / d F_j = 2 (F_j - mean) / n.
        else:
            q = int(name[1:]) / 100.0
            lo, hi, frac = _percentile_positions(q, n)
            if lo == hi:
                dS[:, lo, :] += g
            else:
                dS[:, lo, :] += g * (1.0 - frac)
                dS[:, hi, :] += g * frac
    inverse = np.argsort(order, axis=1, kind="stable")
    dF += np.take_along_axis(dS, inverse, axis=1)
    return dF


def land_pool(
    x: np.ndarray,
    present: np.ndarray,
    kernel: np.ndarray,
    bias: np.ndarray,
    pools: PoolSet = PoolSet(),
) -> np.ndarray:
    """Project per-landmark measures and pool them into a fixed-size vector.

    `x` is the (num_landmarks, k) measure matrix of one observation; rows where
    `present` is false are ignored entirely.
    """
    present = np.asarray(present, dtype=bool)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != kernel.shape[1]:
        raise DataError("landmark measure matrix has wrong shape")
    if present.shape != (x.shape[0],):
        raise DataError("present mask length does not match landmark count")
    if not present.any():
        raise DataError("pooling is undefined with zero present landmarks")
    F = _project(x[present][None, :, :], kernel, bias)
    pooled, _ = _pool_forward(F, pools)
    return pooled[0]


class _ForwardCache:
    __slots__ = ("XLp", "F", "pool", "H", "Z", "A", "Y")

    def __init__(self, XLp, F, pool, H, Z, A, Y):
        self.XLp = XLp
        self.F = F
        self.pool = pool
        self.H = H
        self.Z = Z
        self.A = A
        self.Y = Y


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_batch(
    model: CoarseModel,
    Xn: np.ndarray,
    present_idx: np.ndarray,
) -> _ForwardCache:
    """Forward pass over a batch of normalized m-vectors with one shared mask.

    `present_idx` lists the landmark indices present for every row in `Xn`.
    """
    ell = model.schema.num_landmarks
    k = KINDS_PER_LANDMARK
    XL = Xn[:, : ell * k].reshape(Xn.shape[0], ell, k)
    XLp = XL[:, present_idx, :]
    LOC = Xn[:, ell * k :]
    F = _project(XLp, model.kernel, model.bias)
    pooled, pool_cache = _pool_forward(F, model.pools)
    H = np.concatenate([pooled, LOC], axis=1)
    Z: list[np.ndarray] = []
    A: list[np.ndarray] = [H]
    act = H
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = act @ w.T + b
        Z.append(z)
        act = z if i == last else np.maximum(z, 0.0)
        A.append(act)
    Y = _softmax(Z[-1])
    return _ForwardCache(XLp=XLp, F=F, pool=pool_cache, H=H, Z=Z, A=A, Y=Y)


def _backward_batch(
    model: CoarseModel,
    cache: _ForwardCache,
    dZ_out: np.ndarray,
    present_idx: np.ndarray,
    want_params: bool,
    want_inputs: bool,
):
    """Shared backprop. Returns (input_grads (B, m) | None, param_grads | None)."""
    ell = model.schema.num_landmarks
    k = KINDS_PER_LANDMARK
    B = dZ_out.shape[0]
    n_layers = len(model.weights)
    dZ = dZ_out
    dWs: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        if want_params:
            dWs[i] = dZ.T @ cache.A[i]
            dbs[i] = dZ.sum(axis=0)
        dA = dZ @ model.weights[i]
        if i > 0:
            dZ = dA * (cache.Z[i - 1] > 0)
        else:
            dH = dA
    pooled_width = len(model.pools) * model.num_filters
    dPooled = dH[:, :pooled_width]
    dLOC = dH[:, pooled_width:]
    dF = _pool_backward(dPooled, cache.F, model.pools, cache.pool)

    param_grads = None
    if want_params:
        dK = np.einsum("bnf,bnt->ft", dF, cache.XLp)
        db = dF.sum(axis=(0, 1))
        param_grads = (dK, db, dWs, dbs)

    input_grads = None
    if want_inputs:
        dXLp = dF @ model.kernel  # (B, n, k)
        input_grads = np.zeros((B, model.schema.num_features))
        block = np.zeros((B, ell, k))
        block[:, present_idx, :] = dXLp
        input_grads[:, : ell * k] = block.reshape(B, ell * k)
        input_grads[:, ell * k :] = dLOC
    return input_grads, param_grads


def _check_inputs(X: np.ndarray) -> None:
    if np.isnan(X).any():
        raise DataError("NaN in input features")


def _sample_inputs(model: CoarseModel, sample: Sample) -> tuple[np.ndarray, np.ndarray]:
    sample.validate(model.schema)
    _check_inputs(sample.x)
    if not sample.present_landmarks.any():
        raise DataError("pooling is undefined with zero present landmarks")
    Xn = model.normalize(sample.x)[None, :]
    present_idx = np.flatnonzero(sample.present_landmarks)
    return Xn, present_idx


def coarse_forward(model: CoarseModel, sample: Sample) -> np.ndarray:
    """Coarse fault-family probabilities (length c, sums to 1)."""
    Xn, present_idx = _sample_inputs(model, sample)
    return _forward_batch(model, Xn, present_idx).Y[0]


def forward_normalized(
    model: CoarseModel, zn: np.ndarray, present_landmarks: np.ndarray
) -> np.ndarray:
    """Forward pass on an already-standardized m-vector (oracle seam)."""
    present_idx = np.flatnonzero(np.asarray(present_landmarks, dtype=bool))
    if present_idx.size == 0:
        raise DataError("pooling is undefined with zero present landmarks")
    return _forward_batch(model, np.asarray(zn, dtype=np.float64)[None, :], present_idx).Y[0]


@dataclass
class InputGradient:
    """Gradient of the ideal-label loss with respect to the standardized inputs."""

    grad: np.ndarray  # (m,)
    y: np.ndarray  # (c,)
    phi: int
    argmax_tie: bool


def input_gradient(model: CoarseModel, sample: Sample) -> InputGradient:
    """d(-log y_phi)/d input for phi = argmax(y); absent landmarks get exact 0."""
    Xn, present_idx = _sample_inputs(model, sample)
    grads, Y, phis, ties = batch_input_gradients(model, Xn, present_idx)
    return InputGradient(grad=grads[0], y=Y[0], phi=int(phis[0]), argmax_tie=bool(ties[0]))


def batch_input_gradients(
    model: CoarseModel, Xn: np.ndarray, present_idx: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized input gradients for rows sharing one presence mask.

    Returns (grads (B, m), y (B, c), phi (B,), argmax_tie (B,)).
    """
    cache = _forward_batch(model, Xn, present_idx)
    Y = cache.Y
    phi = np.argmax(Y, axis=1)
    ties = (Y == Y.max(axis=1, keepdims=True)).sum(axis=1) > 1
    dZ = Y.copy()
    dZ[np.arange(Y.shape[0]), phi] -= 1.0
    grads, _ = _backward_batch(
        model, cache, dZ, present_idx, want_params=False, want_inputs=True
    )
    return grads, Y, phi, ties


def _loss(Y: np.ndarray, labels: np.ndarray) -> float:
    p = np.maximum(Y[np.arange(Y.shape[0]), labels], 1e-300)
    return float(-np.log(p).mean())


def _init_model(
    schema: FeatureSchema,
    config: TrainConfig,
    pools: PoolSet,
    norm: NormStats,
    trained_landmarks: tuple[str, ...],
) -> CoarseModel:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    f, k = config.filters, KINDS_PER_LANDMARK
    in_dim = len(pools) * f + NUM_LOCAL_FEATURES
    h1, h2 = config.hidden
    a = 1.0 / np.sqrt(k)
    kernel = rng.uniform(-a, a, size=(f, k))
    w1 = rng.uniform(-1.0 / np.sqrt(in_dim), 1.0 / np.sqrt(in_dim), size=(h1, in_dim))
    w2 = rng.uniform(-1.0 / np.sqrt(h1), 1.0 / np.sqrt(h1), size=(h2, h1))
    # Zero output layer: the untrained model predicts the uniform distribution.
    w3 = np.zeros((NUM_FAMILIES, h2))
    return CoarseModel(
        schema=schema,
        kernel=kernel,
        bias=np.zeros(f),
        weights=[w1, w2, w3],
        biases=[np.zeros(h1), np.zeros(h2), np.zeros(NUM_FAMILIES)],
        pools=pools,
        norm=norm,
        trained_landmarks=trained_landmarks,
        seed=config.seed,
    )


def compute_norm_stats(
    schema: FeatureSchema, X: np.ndarray, present: np.ndarray
) -> NormStats:
    """Per-kind statistics over present landmark features, per-local otherwise."""
    ell, k = schema.num_landmarks, KINDS_PER_LANDMARK
    XL = X[:, : ell * k].reshape(X.shape[0], ell, k)
    mask = present[:, :, None]
    count = np.maximum(mask.sum(axis=(0, 1)), 1)
    kind_mean = np.where(mask, XL, 0.0).sum(axis=(0, 1)) / count
    kind_var = (np.where(mask, (XL - kind_mean) ** 2, 0.0)).sum(axis=(0, 1)) / count
    local = X[:, ell * k :]
    return NormStats(
        kind_mean=kind_mean,
        kind_std=np.maximum(np.sqrt(kind_var), 1e-12),
        local_mean=local.mean(axis=0),
        local_std=np.maximum(local.std(axis=0), 1e-12),
    )


def _uniform_present_idx(present: np.ndarray) -> np.ndarray:
    first = present[0]
    if not np.all(present == first):
        raise DataError("training requires one uniform landmark availability mask")
    idx = np.flatnonzero(first)
    if idx.size == 0:
        raise DataError("training requires at least one present landmark")
    return idx


class _Sgd:
    """SGD with Nesterov momentum and per-step learning-rate decay."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.params = params
        self.velocity = [np.zeros_like(p) for p in params]
        self.lr = config.learning_rate
        self.decay = config.decay
        self.mu = config.momentum
        self.step_count = 0

    def step(self, grads: list[np.ndarray]) -> None:
        lr = self.lr / (1.0 + self.decay * self.step_count)
        self.step_count += 1
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.mu
            v -= lr * g
            p += self.mu * v - lr * g


def _run_training(
    model: CoarseModel,
    Xn: np.ndarray,
    labels: np.ndarray,
    present_idx: np.ndarray,
    config: TrainConfig,
    train_kernel: bool,
) -> CoarseModel:
    """Mini-batch SGD; returns the snapshot with the best validation loss."""
    n = Xn.shape[0]
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    perm = rng.permutation(n)
    n_val = min(max(1, int(round(config.val_fraction * n))), n - 1) if n > 1 else 0
    if n_val > 0:
        val_idx, tr_idx = perm[:n_val], perm[n_val:]
    else:
        val_idx, tr_idx = perm, perm  # degenerate: validate on the training rows

    params: list[np.ndarray] = []
    if train_kernel:
        params.extend([model.kernel, model.bias])
    for w, b in zip(model.weights, model.biases):
        params.extend([w, b])
    opt = _Sgd(params, config)

    def val_loss() -> float:
        out = _forward_batch(model, Xn[val_idx], present_idx).Y
        return _loss(out, labels[val_idx])

    best = [p.copy() for p in params]
    best_loss = np.inf
    best_epoch = 0
    history: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(tr_idx)
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            batch = order[start : start + config.batch_size]
            cache = _forward_batch(model, Xn[batch], present_idx)
            total += _loss(cache.Y, labels[batch]) * batch.size
            dZ = cache.Y.copy()
            dZ[np.arange(batch.size), labels[batch]] -= 1.0
            dZ /= batch.size
            _, pg = _backward_batch(
                model, cache, dZ, present_idx, want_params=True, want_inputs=False
            )
            dK, db, dWs, dbs = pg
            grads: list[np.ndarray] = []
            if train_kernel:
                grads.extend([dK, db])
            for dw, dbias in zip(dWs, dbs):
                grads.extend([dw, dbias])
            opt.step(grads)
        vloss = val_loss()
        history.append(
            {
                "epoch": epoch,
                "train_loss": total / max(order.size, 1),
                "val_loss": vloss,
            }
        )
        if vloss < best_loss:
            best_loss = vloss
            best_epoch = epoch
            best = [p.copy() for p in params]
        elif epoch - best_epoch >= config.patience:
            break
    for p, snap in zip(params, best):
        p[...] = snap
    model.history = history
    model.best_epoch = best_epoch
    return model


def _dataset_tensors(dataset):
    """Pull (X, present, coarse labels) out of a dataset view."""
    return dataset.X, dataset.present, dataset.coarse_labels()


def train(dataset, config: TrainConfig = TrainConfig(), pools: PoolSet = PoolSet()) -> CoarseModel:
    """Train a coarse model on a dataset view (all rows are training data)."""
    X, present, labels = _dataset_tensors(dataset)
    if X.shape[0] == 0:
        raise DataError("cannot train on an empty dataset")
    _check_inputs(X)
    if np.unique(labels).size < 2:
        warnings.warn("training data holds a single coarse class; model is degenerate")
    present_idx = _uniform_present_idx(present)
    schema = dataset.schema
    norm = compute_norm_stats(schema, X, present)
    trained = tuple(schema.landmark_ids[i] for i in present_idx)
    model = _init_model(schema, config, pools, norm, trained)
    Xn = model.normalize(X)
    return _run_training(model, Xn, labels, present_idx, config, train_kernel=True)


def transfer(general: CoarseModel, service_dataset, config: TrainConfig) -> CoarseModel:
    """Specialize the head on one service's data; kernel, bias and
    normalization statistics are frozen bit-identical."""
    X, present, labels = _dataset_tensors(service_dataset)
    if X.shape[0] == 0:
        raise DataError("cannot transfer on an empty dataset")
    _check_inputs(X)
    services = set(service_dataset.service_ids.tolist())
    if len(services) > 1:
        raise DataError(f"transfer dataset must hold one service, got {sorted(services)}")
    present_idx = _uniform_present_idx(present)
    model = CoarseModel(
        schema=general.schema,
        kernel=general.kernel.copy(),
        bias=general.bias.copy(),
        weights=[w.copy() for w in general.weights],
        biases=[b.copy() for b in general.biases],
        pools=general.pools,
        norm=general.norm,
        trained_landmarks=general.trained_landmarks,
        seed=config.seed,
        service_id=next(iter(services)) if services else None,
    )
    Xn = model.normalize(X)
    if config.max_epochs == 0:
        model.history = []
        model.best_epoch = 0
        return model
    return _run_training(model, Xn, labels, present_idx, config, train_kernel=False)


def evaluate_loss(model: CoarseModel, dataset) -> float:
    """Mean coarse cross-entropy of a dataset view under the model."""
    X, present, labels = _dataset_tensors(dataset)
    present_idx = _uniform_present_idx(present)
    Xn = model.normalize(X)
    Y = _forward_batch(model, Xn, present_idx).Y
    return _loss(Y, labels)
