"""Deterministic learning substrate: synthetic class blobs, softmax / small MLP models, plain SGD.

Every function here is a pure function of its arguments. Randomness only
enters through explicit integer seeds, all arithmetic is float64, and there
are no parallel reductions, so repeated calls are bit-identical. That
property is load-bearing: model digests and replay proofs depend on it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_FLOOR = 1e-12  # clamp for log() in cross-entropy


def param_count(arch: Sequence[int]) -> int:
    """Coefficient count (weights + biases) implied by a layer-dimension list."""
    return int(sum(fi * fo + fo for fi, fo in zip(arch[:-1], arch[1:])))


@dataclass
class Dataset:
    """A labelled sample set.

    features is (n, dim) float64; labels and sample_ids are (n,) int64.
    sample_ids are unique within a dataset and survive subsetting, which is
    what lets leave-one-out and target/retained splits address individual rows.
    """

    features: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.sample_ids.shape != (n,):
            raise ValueError("features, labels and sample_ids must agree in length")
        if int(self.num_classes) < 1:
            raise ValueError("num_classes must be positive")
        self.num_classes = int(self.num_classes)
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        if np.unique(self.sample_ids).size != n:
            raise ValueError("sample_ids must be unique")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray) -> "Dataset":
        """Row subset (copies; the parent dataset is never aliased)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx].copy(),
            labels=self.labels[idx].copy(),
            sample_ids=self.sample_ids[idx].copy(),
            num_classes=self.num_classes,
        )

    def without_sample(self, sample_id: int) -> "Dataset":
        mask = self.sample_ids != sample_id
        if mask.all():
            raise ValueError(f"sample_id {sample_id} not present")
        return self.subset(np.flatnonzero(mask))


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise ValueError("cannot concatenate zero datasets")
    k = parts[0].num_classes
    d = parts[0].feature_dim
    if any(p.num_classes != k or p.feature_dim != d for p in parts):
        raise ValueError("datasets disagree on num_classes or feature_dim")
    return Dataset(
        features=np.concatenate([p.features for p in parts], axis=0),
        labels=np.concatenate([p.labels for p in parts]),
        sample_ids=np.concatenate([p.sample_ids for p in parts]),
        num_classes=k,
    )


def split_dataset(dataset: Dataset, holdout_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic (train, holdout) split; row order within each part follows the original."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in [0, 1)")
    n = len(dataset)
    n_hold = int(round(holdout_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    hold_idx = np.sort(perm[:n_hold])
    train_idx = np.sort(perm[n_hold:])
    return dataset.subset(train_idx), dataset.subset(hold_idx)


@dataclass
class SyntheticSpec:
    """Knobs for the synthetic federated data generator."""

    num_clients: int
    num_classes: int
    samples_per_client: int
    feature_dim: int = 10
    class_mean_separation: float = 6.0
    noise_std: float = 1.0
    heterogeneity_shift: float = 0.0

    def __post_init__(self) -> None:
        if min(self.num_clients, self.num_classes, self.samples_per_client, self.feature_dim) < 1:
            raise ValueError("all counts must be positive")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be > 0")
        if self.class_mean_separation < 0 or self.heterogeneity_shift < 0:
            raise ValueError("separation and heterogeneity_shift must be >= 0")
        if self.feature_dim < self.num_classes:
            raise ValueError("feature_dim must be >= num_classes (anchor embedding)")


def _class_anchors(num_classes: int, feature_dim: int, separation: float) -> np.ndarray:
    # Regular simplex embedded in the first num_classes coordinates: every
    # pair of anchors sits exactly `separation` apart.
    eye = np.eye(num_classes) - 1.0 / num_classes
    anchors = np.zeros((num_classes, feature_dim))
    anchors[:, :num_classes] = eye * (separation / np.sqrt(2.0))
    return anchors


def make_synthetic(spec: SyntheticSpec, seed: int) -> list[Dataset]:
    """Per-client Gaussian class blobs around shared anchors.

    Each client's blob centres are the class anchors plus one per-client
    offset vector scaled by heterogeneity_shift, so shift 0 gives identically
    distributed clients. sample_ids are globally unique across clients.
    """
    anchors = _class_anchors(spec.num_classes, spec.feature_dim, spec.class_mean_separation)
    n = spec.samples_per_client
    out = []
    for cid in range(spec.num_clients):
        rng = np.random.default_rng([seed, cid])
        offset = rng.normal(size=spec.feature_dim) * spec.heterogeneity_shift
        labels = np.arange(n, dtype=np.int64) % spec.num_classes
        noise = rng.normal(size=(n, spec.feature_dim)) * spec.noise_std
        features = anchors[labels] + offset + noise
        out.append(
            Dataset(
                features=features,
                labels=labels,
                sample_ids=np.arange(cid * n, (cid + 1) * n, dtype=np.int64),
                num_classes=spec.num_classes,
            )
        )
    return out


@dataclass
class ModelParams:
    """Architecture descriptor plus one flat float64 coefficient vector.

    Layout: for each layer, the (fan_in x fan_out) weight block row-major,
    then the fan_out bias block. Single-layer archs are softmax regression;
    deeper archs use tanh hidden activations.
    """

    arch: tuple[int, ...]
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        self.arch = tuple(int(d) for d in self.arch)
        if len(self.arch) < 2 or any(d < 1 for d in self.arch):
            raise ValueError("arch needs at least 2 positive layer dims")
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        expected = param_count(self.arch)
        if self.coefficients.shape != (expected,):
            raise ValueError(
                f"coefficient vector has length {self.coefficients.shape}, arch implies {expected}"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")

    @property
    def num_classes(self) -> int:
        return self.arch[-1]

    @property
    def input_dim(self) -> int:
        return self.arch[0]


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float
    batch_size: int
    seed: int

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass
class EvalMetrics:
    accuracy: float
    mean_loss: float


def init_params(arch: Sequence[int], seed: int) -> ModelParams:
    """Coefficients drawn from one seeded stream, each layer scaled by 1/sqrt(fan_in)."""
    arch = tuple(int(d) for d in arch)
    if len(arch) < 2 or any(d < 1 for d in arch):
        raise ValueError("arch needs at least 2 positive layer dims")
    rng = np.random.default_rng(seed)
    blocks = []
    for fi, fo in zip(arch[:-1], arch[1:]):
        scale = 1.0 / np.sqrt(fi)
        blocks.append(rng.normal(size=fi * fo) * scale)
        blocks.append(rng.normal(size=fo) * scale)
    return ModelParams(arch=arch, coefficients=np.concatenate(blocks))


def _unpack(arch: tuple[int, ...], coef: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    off = 0
    for fi, fo in zip(arch[:-1], arch[1:]):
        w = coef[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = coef[off : off + fo]
        off += fo
        layers.append((w, b))
    return layers


def _forward(arch: tuple[int, ...], coef: np.ndarray, features: np.ndarray):
    """Returns (per-layer inputs, class probabilities)."""
    layers = _unpack(arch, coef)
    acts = [features]
    h = features
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(z)
            acts.append(h)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    return acts, probs


def predict_proba(params: ModelParams, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.input_dim:
        raise ValueError(f"feature dim {features.shape} does not match arch input {params.input_dim}")
    _, probs = _forward(params.arch, params.coefficients, features)
    return probs


def predict_labels(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(params, features), axis=1)


def hidden_representation(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Penultimate-layer activations; the raw features for a single-layer model."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.input_dim:
        raise ValueError("feature dim does not match arch input")
    acts, _ = _forward(params.arch, params.coefficients, features)
    return acts[-1]


def _loss_grad_raw(arch: tuple[int, ...], coef: np.ndarray, features: np.ndarray, labels: np.ndarray):
    n = features.shape[0]
    acts, probs = _forward(arch, coef, features)
    rows = np.arange(n)
    loss = float(-np.mean(np.log(np.clip(probs[rows, labels], PROB_FLOOR, None))))

    layers = _unpack(arch, coef)
    dz = probs.copy()
    dz[rows, labels] -= 1.0
    dz /= n
    grads: list[np.ndarray] = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a = acts[i]
        dw = a.T @ dz
        db = dz.sum(axis=0)
        grads.append(db)
        grads.append(dw.ravel())
        if i > 0:
            dh = dz @ w.T
            dz = dh * (1.0 - acts[i] ** 2)
    grads.reverse()
    return loss, np.concatenate(grads)


def loss_and_grad(params: ModelParams, batch: Dataset) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient, flat like the coefficients."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if batch.feature_dim != params.input_dim:
        raise ValueError("batch feature dim does not match arch input")
    return _loss_grad_raw(params.arch, params.coefficients, batch.features, batch.labels)


def per_sample_loss(params: ModelParams, dataset: Dataset) -> np.ndarray:
    """Cross-entropy of each sample under the model, probabilities clamped at PROB_FLOOR."""
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    probs = predict_proba(params, dataset.features)
    py = probs[np.arange(len(dataset)), dataset.labels]
    return -np.log(np.clip(py, PROB_FLOOR, None))


def train(params: ModelParams, dataset: Dataset, config: TrainConfig) -> ModelParams:
    """Mini-batch SGD. Batch order is a deterministic permutation seeded from
    (config.seed, epoch index), so the whole run is a pure function of its inputs."""
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    if dataset.feature_dim != params.input_dim:
        raise ValueError("dataset feature dim does not match arch input")
    coef = params.coefficients.copy()
    n = len(dataset)
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grad = _loss_grad_raw(params.arch, coef, dataset.features[idx], dataset.labels[idx])
            coef -= config.learning_rate * grad
    return ModelParams(arch=params.arch, coefficients=coef)


def evaluate(params: ModelParams, dataset: Dataset) -> EvalMetrics:
    """Argmax accuracy and mean cross-entropy on the dataset."""
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    probs = predict_proba(params, dataset.features)
    preds = np.argmax(probs, axis=1)
    accuracy = float(np.mean(preds == dataset.labels))
    py = probs[np.arange(len(dataset)), dataset.labels]
    mean_loss = float(np.mean(-np.log(np.clip(py, PROB_FLOOR, None))))
    return EvalMetrics(accuracy=accuracy, mean_loss=mean_loss)
